#include <doctest.h>

#include <cmath>

#include "cola/error.hpp"
#include "cola/model.hpp"

using namespace cola;

namespace {

MlpParams zero_params(const MlpSpec& spec) {
  MlpParams p;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    p.weights.push_back(Matrix::Zero(spec.widths[l + 1], spec.widths[l]));
    p.biases.push_back(Vector::Zero(spec.widths[l + 1]));
  }
  return p;
}

MlpParams random_params(const MlpSpec& spec, Rng& rng) {
  MlpParams p;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    p.weights.push_back(standard_normal_matrix(spec.widths[l + 1], spec.widths[l], rng) /
                        std::sqrt(static_cast<double>(spec.widths[l])));
    p.biases.push_back(0.1 * standard_normal_vector(spec.widths[l + 1], rng));
  }
  return p;
}

Batch random_batch(int n, int d, int classes, Rng& rng) {
  Batch b{standard_normal_matrix(n, d, rng), {}};
  for (int i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.index_below(classes)));
  return b;
}

double worst(const std::vector<GradCheckEntry>& entries) {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

}  // namespace

TEST_CASE("MlpSpec validation") {
  CHECK_THROWS_AS((MlpSpec{{3}}).validate(), ConfigError);
  CHECK_THROWS_AS((MlpSpec{{3, 0, 1}}).validate(), ConfigError);
  CHECK_NOTHROW((MlpSpec{{2, 5, 1}}).validate());
  CHECK(parse_loss("bce_with_logits") == LossKind::bce_with_logits);
  CHECK_THROWS_AS(parse_loss("mse"), ConfigError);
}

TEST_CASE("mlp_forward") {
  SUBCASE("zero net") {
    const MlpSpec spec{{3, 4, 2}};
    Rng rng(1);
    CHECK(mlp_forward(spec, zero_params(spec), standard_normal_matrix(5, 3, rng)).isZero(0));
  }
  SUBCASE("identity single layer") {
    const MlpSpec spec{{3, 3}};
    MlpParams p = zero_params(spec);
    p.weights[0].setIdentity();
    Rng rng(2);
    const Matrix x = standard_normal_matrix(4, 3, rng);
    CHECK(mlp_forward(spec, p, x) == x);
  }
  SUBCASE("hand-set 2-2-1 net") {
    const MlpSpec spec{{2, 2, 1}};
    MlpParams p = zero_params(spec);
    p.weights[0] << 1, -1, 2, 0.5;
    p.biases[0] << 0.5, -3;
    p.weights[1] << 2, -1;
    p.biases[1] << 0.25;
    Matrix x(1, 2);
    x << 1, 2;
    // hidden pre-activations: 1 - 2 + 0.5 = -0.5 -> 0, 2 + 1 - 3 = 0 -> 0
    CHECK(mlp_forward(spec, p, x)(0, 0) == 0.25);
    x << 3, 1;
    // hidden: 3 - 1 + 0.5 = 2.5, 6 + 0.5 - 3 = 3.5; out = 5 - 3.5 + 0.25
    CHECK(mlp_forward(spec, p, x)(0, 0) == doctest::Approx(1.75).epsilon(1e-15));
  }
  SUBCASE("shape mismatch") {
    const MlpSpec spec{{3, 2}};
    CHECK_THROWS_AS(mlp_forward(spec, zero_params(spec), Matrix::Zero(2, 4)), DimensionMismatch);
  }
}

TEST_CASE("loss_eval") {
  const Matrix zero = Matrix::Zero(4, 1);
  CHECK(loss_eval(zero, {0, 1, 1, 0}, LossKind::bce_with_logits) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Matrix uniform = Matrix::Constant(3, 5, 0.7);
  CHECK(loss_eval(uniform, {0, 4, 2}, LossKind::softmax_cross_entropy) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-14));

  SUBCASE("BCE against a long double reference") {
    Matrix z(4, 1);
    z << -40.0, -1.3, 0.2, 55.0;
    const std::vector<int> y{1, 0, 1, 0};
    long double ref = 0;
    for (int i = 0; i < 4; ++i) {
      const long double zi = z(i, 0);
      // -log sigmoid(z) for y = 1, -log(1 - sigmoid(z)) for y = 0
      ref += y[i] == 1 ? std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    }
    CHECK(loss_eval(z, y, LossKind::bce_with_logits) == doctest::Approx(static_cast<double>(ref / 4)).epsilon(1e-14));
  }
  SUBCASE("CE against a long double reference") {
    Matrix z(2, 3);
    z << 1.0, -2.0, 800.0, 0.3, 0.1, -0.4;
    const std::vector<int> y{0, 2};
    long double ref = 0;
    for (int i = 0; i < 2; ++i) {
      long double m = z.row(i).maxCoeff();
      long double s = 0;
      for (int k = 0; k < 3; ++k) s += std::exp(static_cast<long double>(z(i, k)) - m);
      ref += m + std::log(s) - z(i, y[i]);
    }
    CHECK(loss_eval(z, y, LossKind::softmax_cross_entropy) ==
          doctest::Approx(static_cast<double>(ref / 2)).epsilon(1e-14));
  }
}

TEST_CASE("accuracy_eval") {
  Matrix z(4, 1);
  z << 2, -1, 0.5, -3;
  CHECK(accuracy_eval(z, {1, 0, 1, 0}, LossKind::bce_with_logits) == 1.0);
  CHECK(accuracy_eval(z, {0, 1, 0, 1}, LossKind::bce_with_logits) == 0.0);
  Matrix zero = Matrix::Zero(1, 1);
  CHECK(accuracy_eval(zero, {0}, LossKind::bce_with_logits) == 1.0);

  Matrix c(3, 3);
  c << 1, 1, 0,  // tie between 0 and 1 goes to 0
      0, 2, 2,   // tie between 1 and 2 goes to 1
      0, 0, 3;
  CHECK(accuracy_eval(c, {0, 1, 2}, LossKind::softmax_cross_entropy) == 1.0);
  CHECK(accuracy_eval(c, {1, 2, 2}, LossKind::softmax_cross_entropy) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("mlp_backward") {
  SUBCASE("zero at the minimum of a convex fixture") {
    // One sample with label 1 on each side of a linear classifier whose bias
    // balances the two logits: the BCE gradient vanishes by symmetry.
    const MlpSpec spec{{1, 1}};
    MlpParams p = zero_params(spec);
    Batch b{Matrix(2, 1), {1, 0}};
    b.inputs << 1, 1;
    const MlpParams g = mlp_backward(spec, p, b);
    CHECK(std::abs(g.weights[0](0, 0)) <= 1e-10);
    CHECK(std::abs(g.biases[0](0)) <= 1e-10);
  }
  SUBCASE("matches finite differences on random small nets") {
    Rng rng(3);
    double w = 0.0;
    for (int k = 0; k < 20; ++k) {
      const MlpSpec spec{{4, 10, 10, 10, k % 2 == 0 ? 1 : 3},
                         Activation::relu,
                         k % 2 == 0 ? LossKind::bce_with_logits : LossKind::softmax_cross_entropy};
      const MlpParams p = random_params(spec, rng);
      const Batch b = drop_near_kink_samples(spec, p, random_batch(8, 4, spec.widths.back() == 1 ? 2 : 3, rng), 1e-4);
      REQUIRE(b.size() > 0);
      w = std::max(w, worst(gradient_check(spec, p, b, mlp_backward)));
    }
    CHECK(w <= 1e-6);
  }
  SUBCASE("duplicated batch gives the same mean gradient") {
    Rng rng(4);
    const MlpSpec spec{{3, 5, 1}};
    const MlpParams p = random_params(spec, rng);
    const Batch b = random_batch(6, 3, 2, rng);
    Batch twice{Matrix(12, 3), b.labels};
    twice.inputs << b.inputs, b.inputs;
    twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
    const MlpParams g1 = mlp_backward(spec, p, b);
    const MlpParams g2 = mlp_backward(spec, p, twice);
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK((g1.weights[l] - g2.weights[l]).cwiseAbs().maxCoeff() <= 1e-15);
      CHECK((g1.biases[l] - g2.biases[l]).cwiseAbs().maxCoeff() <= 1e-15);
    }
  }
  SUBCASE("a wrong backward is caught") {
    Rng rng(5);
    const MlpSpec spec{{3, 6, 1}};
    const MlpParams p = random_params(spec, rng);
    const Batch b = drop_near_kink_samples(spec, p, random_batch(8, 3, 2, rng), 1e-4);
    const BackwardFn broken = [](const MlpSpec& s, const MlpParams& q, const Batch& bb) {
      MlpParams g = mlp_backward(s, q, bb);
      g.biases[0] *= 1.01;
      return g;
    };
    CHECK(worst(gradient_check(spec, p, b, broken)) > 1e-3);
  }
}

TEST_CASE("finite_difference_grad") {
  SUBCASE("linear model matches the analytic gradient") {
    const MlpSpec spec{{3, 1}};
    Rng rng(6);
    const MlpParams p = random_params(spec, rng);
    const Batch b = random_batch(5, 3, 2, rng);
    const MlpParams fd = finite_difference_grad(spec, p, b, 1e-5);
    const MlpParams an = mlp_backward(spec, p, b);
    CHECK((fd.weights[0] - an.weights[0]).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((fd.biases[0] - an.biases[0]).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("flat landscape") {
    // Dead first layer and zero output weights: the loss does not depend on
    // any parameter that finite differences can move at first order.
    const MlpSpec spec{{2, 3, 1}};
    MlpParams p = zero_params(spec);
    p.biases[0].setConstant(-10.0);
    Rng rng(7);
    Batch b = random_batch(4, 2, 2, rng);
    b.inputs *= 0.01;
    const MlpParams fd = finite_difference_grad(spec, p, b, 1e-5);
    CHECK(fd.weights[0].isZero(0));
    CHECK(fd.biases[0].isZero(0));
  }
}

TEST_CASE("forward is deterministic and order-invariant") {
  Rng rng(8);
  const MlpSpec spec{{2, 8, 8, 1}};
  const MlpParams p = random_params(spec, rng);
  const Batch b = random_batch(30, 2, 2, rng);
  const Matrix z1 = mlp_forward(spec, p, b.inputs);
  CHECK(mlp_forward(spec, p, b.inputs) == z1);

  Batch rev{b.inputs.colwise().reverse(), {b.labels.rbegin(), b.labels.rend()}};
  const Matrix z2 = mlp_forward(spec, p, rev.inputs);
  CHECK(loss_eval(z2, rev.labels, spec.loss) == doctest::Approx(loss_eval(z1, b.labels, spec.loss)).epsilon(1e-14));
  CHECK(accuracy_eval(z2, rev.labels, spec.loss) == accuracy_eval(z1, b.labels, spec.loss));
}

TEST_CASE("hidden-only orthogonal layout") {
  const MlpSpec spec{{2, 10, 10, 10, 1}};
  const ParamLayout layout = ParamLayout::hidden(spec, {LayerConstraint::orthogonal});
  REQUIRE(layout.layers.size() == 4);
  CHECK(layout.layers.front().kind == LayerConstraint::unconstrained);
  CHECK(layout.layers.back().kind == LayerConstraint::unconstrained);
  CHECK(layout.layers[1].kind == LayerConstraint::orthogonal);
  CHECK(layout.layers[2].kind == LayerConstraint::orthogonal);

  Rng rng(9);
  const ParamStore store = init_params(spec, layout, rng);
  CHECK(store.orthos.size() == 2);
  CHECK(store.circles.empty());
  // 4 biases plus the input and output weights
  CHECK(store.free.size() == 6);
  CHECK(position_residual(store).max_abs <= 1e-12);

  // Round trip and gradient mapping keep the input/output weights free.
  const MlpParams params = from_store(spec, layout, store);
  const ParamStore back = to_store(spec, layout, params);
  for (std::size_t i = 0; i < store.free.size(); ++i) CHECK(back.free[i] == store.free[i]);
  const Batch b = random_batch(5, 2, 2, rng);
  const GradientStore g = make_gradient_oracle(spec, layout)(store, b);
  CHECK(g.orthos.size() == 2);
  CHECK(g.free.size() == 6);
  const MlpParams direct = mlp_backward(spec, params, b);
  CHECK(g.orthos[0] == direct.weights[1]);
}

TEST_CASE("circle layout initialization") {
  const MlpSpec spec{{4, 6, 1}};
  ParamLayout layout;
  layout.layers = {{LayerConstraint::circle, 0.1}, {LayerConstraint::unconstrained}};
  Rng rng(10);
  InitReport report;
  const ParamStore store = init_params(spec, layout, rng, &report);
  REQUIRE(store.circles.size() == 1);
  // U(-1/2, 1/2) draws exceed r = 0.1 most of the time and get clipped.
  CHECK(report.clipped > 0);
  CHECK(store.circles.front().theta.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(circle_max_residual(store.circles.front()) <= 1e-15);

  ParamLayout wide = layout;
  wide.layers[0].radius = 10.0;
  InitReport none;
  init_params(spec, wide, rng, &none);
  CHECK(none.clipped == 0);
}

TEST_CASE("layout validation") {
  const MlpSpec spec{{2, 3, 1}};
  ParamLayout bad;
  bad.layers = {{LayerConstraint::unconstrained}};
  CHECK_THROWS_AS(bad.validate(spec), ConfigError);
  ParamLayout neg;
  neg.layers = {{LayerConstraint::circle, -1.0}, {}};
  CHECK_THROWS_AS(neg.validate(spec), ConfigError);
}
