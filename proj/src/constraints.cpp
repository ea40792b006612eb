#include "cola/constraints.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

void ConstraintResidual::record(const std::string& group, double value) {
  per_group[group] = value;
  max_abs = std::max(max_abs, std::abs(value));
}

Vector circle_residual(const CircleGroup& g) {
  if (g.xi.size() != g.theta.size() || g.radii.size() != g.theta.size())
    throw DimensionMismatch("circle group: theta, xi and radii lengths differ");
  return g.theta.array().square() + g.xi.array().square() - g.radii.array().square();
}

double circle_max_residual(const CircleGroup& g) {
  if (g.size() == 0) return 0.0;
  return circle_residual(g).cwiseAbs().maxCoeff();
}

Vector circle_slack_init(const Vector& theta_c, const Vector& radii) {
  if (theta_c.size() != radii.size())
    throw DimensionMismatch("circle_slack_init: theta and radii lengths differ");
  Vector xi(theta_c.size());
  for (Eigen::Index i = 0; i < theta_c.size(); ++i) {
    const double t = theta_c(i);
    const double r = radii(i);
    if (std::abs(t) > r)
      throw InfeasibleInit(fmt::format(
          "parameter {} has |theta| = {} > r = {}; shrink the initial weights or raise the radius", i,
          std::abs(t), r));
    xi(i) = std::sqrt((r - t) * (r + t));
  }
  return xi;
}

CirclePoint circle_project_orthogonal(double theta_bar, double xi_bar, double r) {
  if (std::hypot(theta_bar, xi_bar) < kDegenerateRadius)
    throw DegeneratePoint("circle projection of a point at the origin");
  const double alpha = std::atan2(xi_bar, theta_bar);
  return {r * std::cos(alpha), r * std::sin(alpha)};
}

CirclePoint circle_project_oblique(double theta_bar, double xi_bar, double theta_n, double xi_n,
                                   double r) {
  // |p - mu b|^2 = r^2 with |b| = r:  r^2 mu^2 - 2 (p.b) mu + (|p|^2 - r^2) = 0.
  const double r2 = r * r;
  const double lin = theta_bar * theta_n + xi_bar * xi_n;
  const double cst = theta_bar * theta_bar + xi_bar * xi_bar - r2;
  const double disc = lin * lin - r2 * cst;
  if (disc < 0.0)
    throw NoRealRoot(fmt::format(
        "oblique circle projection has no real root (discriminant {}); reduce the stepsize", disc));
  double mu = 0.0;
  if (lin != 0.0) {
    // Smaller-magnitude root via the product of the roots.
    const double big = lin + std::copysign(std::sqrt(disc), lin);
    mu = cst / big;
  } else if (cst != 0.0) {
    mu = std::sqrt(disc) / r2;
  }
  return {theta_bar - mu * theta_n, xi_bar - mu * xi_n};
}

CirclePoint circle_cotangent_project(double p_c, double p_xi, double theta, double xi, double r) {
  const double radial = (theta * p_c + xi * p_xi) / (r * r);
  return {p_c - theta * radial, p_xi - xi * radial};
}

Orientation ortho_orientation(Eigen::Index rows_out, Eigen::Index cols_in) {
  return cols_in <= rows_out ? Orientation::as_is : Orientation::transposed;
}

Matrix to_constrained(const Matrix& weight, Orientation o) {
  return o == Orientation::as_is ? weight : Matrix(weight.transpose());
}

Matrix from_constrained(const Matrix& q, Orientation o) { return to_constrained(q, o); }

double ortho_residual(const OrthoGroup& g) { return orthonormality_defect(g.q); }

QuasiNewtonResult ortho_quasi_newton_project(const Matrix& q_base, const Matrix& q0, int k_max,
                                             double tol) {
  if (q_base.rows() != q0.rows() || q_base.cols() != q0.cols())
    throw DimensionMismatch("quasi-Newton projection: base and proposal shapes differ");
  const Eigen::Index s = q0.cols();
  const Matrix identity = Matrix::Identity(s, s);
  QuasiNewtonResult out{q0, 0, 0.0};
  Matrix lambda(s, s);
  double initial = 0.0;
  for (int k = 0;; ++k) {
    // Q^T Q by a symmetric rank update: half the work of a general product.
    lambda.setZero();
    lambda.selfadjointView<Eigen::Lower>().rankUpdate(out.q.transpose());
    lambda.triangularView<Eigen::StrictlyUpper>() = lambda.transpose();
    lambda -= identity;
    lambda *= 0.5;
    const double norm = lambda.norm();
    if (!std::isfinite(norm)) throw Divergence("quasi-Newton projection produced non-finite values");
    if (k == 0) {
      initial = norm;
    } else if (norm > 10.0 * initial) {
      throw Divergence(fmt::format(
          "quasi-Newton residual grew from {} to {} after {} iterations; reduce the stepsize",
          2.0 * initial, 2.0 * norm, k));
    }
    out.lambda_norm = norm;
    out.iterations = k;
    if (norm <= tol || k >= k_max) return out;
    out.q.noalias() -= q_base * lambda;
  }
}

Matrix ortho_cotangent_project(const Matrix& q, const Matrix& p_bar) {
  if (q.rows() != p_bar.rows() || q.cols() != p_bar.cols())
    throw DimensionMismatch("cotangent projection: Q and P shapes differ");
  Matrix sym = p_bar.transpose() * q;
  sym += sym.transpose().eval();
  Matrix out = p_bar;
  out.noalias() -= 0.5 * q * sym;
  return out;
}

double ortho_cotangency_residual(const Matrix& q, const Matrix& p) {
  Matrix sym = p.transpose() * q;
  return (sym + sym.transpose()).norm();
}

MatrixShape reshape_conv_weight(Eigen::Index n_out, Eigen::Index n_in, Eigen::Index n_h,
                                Eigen::Index n_w) {
  if (n_out <= 0 || n_in <= 0 || n_h <= 0 || n_w <= 0)
    throw DimensionMismatch("conv weight dimensions must be positive");
  return {n_out, n_in * n_h * n_w};
}

}  // namespace cola
