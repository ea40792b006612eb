#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cola/constraints.hpp"
#include "cola/error.hpp"

using namespace cola;

namespace {

CircleGroup circle(double theta, double xi, double r) {
  CircleGroup g;
  g.theta = Vector::Constant(1, theta);
  g.xi = Vector::Constant(1, xi);
  g.radii = Vector::Constant(1, r);
  return g;
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST_CASE("circle_residual") {
  CHECK(std::abs(circle_residual(circle(0.6, 0.8, 1.0))(0)) <= 1e-15);
  CHECK(circle_residual(circle(1.0, 1.0, 1.0))(0) == 1.0);
  CHECK(circle_residual(circle(0.0, 0.0, 0.5))(0) == -0.25);
  CHECK(circle_max_residual(circle(0.0, 0.0, 0.5)) == 0.25);
}

TEST_CASE("circle_slack_init") {
  const Vector one = Vector::Constant(1, 1.0);
  CHECK(circle_slack_init(Vector::Constant(1, 0.0), one)(0) == 1.0);
  CHECK(circle_slack_init(Vector::Constant(1, 0.6), one)(0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(circle_slack_init(Vector::Constant(1, -0.6), one)(0) > 0.0);
  CHECK_THROWS_AS(circle_slack_init(Vector::Constant(1, 2.0), one), InfeasibleInit);
}

TEST_CASE("circle_project_orthogonal") {
  auto p = circle_project_orthogonal(3, 4, 1);
  CHECK(p.theta == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.xi == doctest::Approx(0.8).epsilon(1e-15));
  p = circle_project_orthogonal(0.6, 0.8, 1);
  CHECK(p.theta == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.xi == doctest::Approx(0.8).epsilon(1e-15));
  p = circle_project_orthogonal(-1, 0, 2);
  CHECK(p.theta == -2.0);
  CHECK(std::abs(p.xi) <= 1e-15);
  // Every quadrant lands on the nearest point.
  for (double a = -3.0; a <= 3.0; a += 0.37) {
    const auto q = circle_project_orthogonal(2.5 * std::cos(a), 2.5 * std::sin(a), 1.5);
    CHECK(q.theta == doctest::Approx(1.5 * std::cos(a)).scale(1).epsilon(1e-14));
    CHECK(q.xi == doctest::Approx(1.5 * std::sin(a)).scale(1).epsilon(1e-14));
    const auto again = circle_project_orthogonal(q.theta, q.xi, 1.5);
    CHECK(again.theta == doctest::Approx(q.theta).epsilon(1e-15));
    CHECK(again.xi == doctest::Approx(q.xi).epsilon(1e-15));
  }
  CHECK_THROWS_AS(circle_project_orthogonal(0, 0, 1), DegeneratePoint);
  CHECK_THROWS_AS(circle_project_orthogonal(1e-13, 0, 1), DegeneratePoint);
}

TEST_CASE("circle_project_oblique") {
  auto p = circle_project_oblique(2, 0, 1, 0, 1);
  CHECK(p.theta == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(p.xi) <= 1e-15);
  CHECK_THROWS_AS(circle_project_oblique(0, 2, 1, 0, 1), NoRealRoot);
  p = circle_project_oblique(0.6, 0.8, 0.6, 0.8, 1);
  CHECK(p.theta == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p.xi == doctest::Approx(0.8).epsilon(1e-15));

  // Successful projections land on the circle along the base direction.
  Rng rng(9);
  int landed = 0;
  for (int k = 0; k < 500; ++k) {
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    const double r = 0.5 + rng.uniform();
    const double tn = r * std::cos(a), xn = r * std::sin(a);
    const double tb = tn + 0.2 * rng.normal(), xb = xn + 0.2 * rng.normal();
    try {
      const auto q = circle_project_oblique(tb, xb, tn, xn, r);
      ++landed;
      CHECK(std::abs(q.theta * q.theta + q.xi * q.xi - r * r) <= 1e-12);
      // (bar - q) is parallel to (tn, xn): cross product vanishes.
      CHECK(std::abs((tb - q.theta) * xn - (xb - q.xi) * tn) <= 1e-12);
    } catch (const NoRealRoot&) {
    }
  }
  CHECK(landed > 400);
}

TEST_CASE("circle_cotangent_project") {
  auto p = circle_cotangent_project(0.3, 0.7, 1, 0, 1);
  CHECK(p.theta == 0.0);
  CHECK(p.xi == 0.7);
  p = circle_cotangent_project(0, 0.4, 1, 0, 1);
  CHECK(p.theta == 0.0);
  CHECK(p.xi == 0.4);
  p = circle_cotangent_project(0.6, 0.8, 0.6, 0.8, 1);
  CHECK(std::abs(p.theta) <= 1e-15);
  CHECK(std::abs(p.xi) <= 1e-15);

  Rng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    const double r = 0.1 + 2.0 * rng.uniform();
    const double th = r * std::cos(a), xi = r * std::sin(a);
    const auto q = circle_cotangent_project(rng.normal(), rng.normal(), th, xi, r);
    CHECK(std::abs(th * q.theta + xi * q.xi) <= 1e-12);
  }
}

TEST_CASE("orientation rule") {
  CHECK(ortho_orientation(100, 50) == Orientation::as_is);
  CHECK(ortho_orientation(50, 100) == Orientation::transposed);
  CHECK(ortho_orientation(30, 30) == Orientation::as_is);
  Rng rng(2);
  const Matrix w = standard_normal_matrix(3, 5, rng);
  const Matrix q = to_constrained(w, Orientation::transposed);
  CHECK(q.rows() == 5);
  CHECK(from_constrained(q, Orientation::transposed) == w);
}

TEST_CASE("ortho_residual") {
  CHECK(ortho_residual({Matrix::Identity(3, 2), Orientation::as_is}) == 0.0);
  CHECK(ortho_residual({diag2(1.2, 1.0), Orientation::as_is}) == doctest::Approx(0.44).epsilon(1e-14));
  Rng rng(6);
  CHECK(ortho_residual({orthonormalize_columns(standard_normal_matrix(7, 4, rng)), Orientation::as_is}) <= 1e-12);
}

TEST_CASE("ortho_quasi_newton_project") {
  SUBCASE("orthonormal q0 needs no correction") {
    const auto res = ortho_quasi_newton_project(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 5, 1e-10);
    CHECK(res.iterations == 0);
    CHECK(res.q == Matrix::Identity(2, 2));
  }
  SUBCASE("one iteration from diag(1.2, 1)") {
    const auto res = ortho_quasi_newton_project(Matrix::Identity(2, 2), diag2(1.2, 1.0), 1, 0.0);
    CHECK(res.iterations == 1);
    CHECK((res.q - diag2(0.98, 1.0)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("many iterations converge to I") {
    const auto res = ortho_quasi_newton_project(Matrix::Identity(2, 2), diag2(1.2, 1.0), 100, 1e-10);
    CHECK(ortho_residual({res.q, Orientation::as_is}) <= 1e-10);
    CHECK((res.q - Matrix::Identity(2, 2)).norm() <= 1e-10);
    CHECK(res.lambda_norm <= 1e-10);
  }
  SUBCASE("local contraction of successive residuals") {
    Rng rng(8);
    for (int k = 0; k < 100; ++k) {
      const Matrix base = orthonormalize_columns(standard_normal_matrix(8, 4, rng));
      Matrix q = base + 0.01 * standard_normal_matrix(8, 4, rng);
      double prev = ortho_residual({q, Orientation::as_is});
      if (prev > 0.1) continue;
      for (int it = 0; it < 6; ++it) {
        q = ortho_quasi_newton_project(base, q, 1, 0.0).q;
        const double now = ortho_residual({q, Orientation::as_is});
        CHECK(now <= 0.9 * prev + 1e-15);
        prev = now;
      }
    }
  }
  SUBCASE("divergence is reported") {
    CHECK_THROWS_AS(ortho_quasi_newton_project(Matrix::Identity(2, 2), 5.0 * Matrix::Identity(2, 2), 5, 1e-10),
                    Divergence);
  }
}

TEST_CASE("ortho_cotangent_project") {
  Matrix q(2, 1), p(2, 1);
  q << 1, 0;
  p << 0.5, 0.7;
  Matrix out = ortho_cotangent_project(q, p);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 0.7);

  Matrix e = Matrix::Zero(2, 2);
  e(0, 1) = 1;
  out = ortho_cotangent_project(Matrix::Identity(2, 2), e);
  Matrix expected(2, 2);
  expected << 0, 0.5, -0.5, 0;
  CHECK((out - expected).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(10);
  for (int k = 0; k < 100; ++k) {
    const Matrix qq = orthonormalize_columns(standard_normal_matrix(9, 4, rng));
    const Matrix pb = standard_normal_matrix(9, 4, rng);
    const Matrix pp = ortho_cotangent_project(qq, pb);
    CHECK(ortho_cotangency_residual(qq, pp) <= 1e-12);
    CHECK((ortho_cotangent_project(qq, pp) - pp).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(((pb - pp).array() * pp.array()).sum()) <= 1e-10);
  }
}

TEST_CASE("reshape_conv_weight") {
  const auto a = reshape_conv_weight(64, 3, 3, 3);
  CHECK(a == MatrixShape{64, 27});
  CHECK(ortho_orientation(a.rows, a.cols) == Orientation::as_is);
  const auto b = reshape_conv_weight(16, 16, 3, 3);
  CHECK(b == MatrixShape{16, 144});
  CHECK(ortho_orientation(b.rows, b.cols) == Orientation::transposed);
  CHECK(reshape_conv_weight(1, 1, 1, 1) == MatrixShape{1, 1});
}

TEST_CASE("ConstraintResidual keeps the maximum") {
  ConstraintResidual r;
  r.record("circle0", 1e-3);
  r.record("ortho0", 5e-3);
  r.record("ortho1", 2e-3);
  CHECK(r.max_abs == 5e-3);
  CHECK(r.per_group.size() == 3);
}
