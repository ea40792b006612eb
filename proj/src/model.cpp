#include "cola/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

LossKind parse_loss(std::string_view name) {
  if (name == "bce_with_logits" || name == "bce") return LossKind::bce_with_logits;
  if (name == "softmax_cross_entropy" || name == "ce") return LossKind::softmax_cross_entropy;
  throw ConfigError(fmt::format("unknown loss '{}' (bce_with_logits, softmax_cross_entropy)", name));
}

std::string_view to_string(LossKind k) {
  return k == LossKind::bce_with_logits ? "bce_with_logits" : "softmax_cross_entropy";
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
  for (int w : widths)
    if (w <= 0) throw ConfigError("layer widths must be positive");
  if (loss == LossKind::bce_with_logits && widths.back() != 1)
    throw ConfigError("bce_with_logits needs a single output unit");
  if (loss == LossKind::softmax_cross_entropy && widths.back() < 2)
    throw ConfigError("softmax_cross_entropy needs at least two output units");
}

ParamLayout ParamLayout::unconstrained(const MlpSpec& spec) {
  return {std::vector<LayerAssignment>(spec.layer_count())};
}

ParamLayout ParamLayout::hidden(const MlpSpec& spec, LayerAssignment assignment) {
  ParamLayout layout = unconstrained(spec);
  for (std::size_t l = 1; l + 1 < spec.layer_count(); ++l) layout.layers[l] = assignment;
  return layout;
}

void ParamLayout::validate(const MlpSpec& spec) const {
  if (layers.size() != spec.layer_count())
    throw ConfigError(fmt::format("layout lists {} layers, the network has {}", layers.size(),
                                  spec.layer_count()));
  for (const auto& a : layers)
    if (a.kind == LayerConstraint::circle && !(a.radius > 0.0))
      throw ConfigError("circle radius must be positive");
}

// ---- evaluation ---------------------------------------------------------

namespace {

void check_params(const MlpSpec& spec, const MlpParams& params) {
  const std::size_t n = spec.layer_count();
  if (params.weights.size() != n || params.biases.size() != n)
    throw DimensionMismatch("parameter count does not match the network");
  for (std::size_t l = 0; l < n; ++l) {
    if (params.weights[l].rows() != spec.widths[l + 1] || params.weights[l].cols() != spec.widths[l] ||
        params.biases[l].size() != spec.widths[l + 1])
      throw DimensionMismatch(fmt::format("layer {} parameters have the wrong shape", l));
  }
}

/// Pre-activations of every layer.
std::vector<Matrix> forward_pre(const MlpSpec& spec, const MlpParams& params, const Matrix& inputs) {
  check_params(spec, params);
  if (inputs.cols() != spec.widths.front())
    throw DimensionMismatch(fmt::format("inputs have {} columns, the network expects {}",
                                        inputs.cols(), spec.widths.front()));
  std::vector<Matrix> pre;
  pre.reserve(spec.layer_count());
  Matrix act = inputs;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z = act * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (l + 1 < spec.layer_count()) act = z.cwiseMax(0.0);
    pre.push_back(std::move(z));
  }
  return pre;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(const Matrix& logits, const std::vector<int>& labels, LossKind kind) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw DimensionMismatch("logit rows and label count differ");
  const int classes = kind == LossKind::bce_with_logits ? 2 : static_cast<int>(logits.cols());
  for (int y : labels)
    if (y < 0 || y >= classes) throw DimensionMismatch(fmt::format("label {} out of range", y));
}

/// d(mean loss)/d(logits)
Matrix loss_gradient(const Matrix& logits, const std::vector<int>& labels, LossKind kind) {
  const double n = static_cast<double>(logits.rows());
  Matrix d(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (kind == LossKind::bce_with_logits) {
      d(i, 0) = (sigmoid(logits(i, 0)) - labels[i]) / n;
    } else {
      const double top = logits.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp();
      d.row(i) = e / e.sum();
      d(i, labels[i]) -= 1.0;
      d.row(i) /= n;
    }
  }
  return d;
}

}  // namespace

Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& inputs) {
  return forward_pre(spec, params, inputs).back();
}

double loss_eval(const Matrix& logits, const std::vector<int>& labels, LossKind kind) {
  check_labels(logits, labels, kind);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (kind == LossKind::bce_with_logits) {
      const double z = logits(i, 0);
      total += softplus(z) - labels[i] * z;
    } else {
      const double top = logits.row(i).maxCoeff();
      const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
      total += lse - logits(i, labels[i]);
    }
  }
  return total / static_cast<double>(labels.size());
}

double accuracy_eval(const Matrix& logits, const std::vector<int>& labels, LossKind kind) {
  check_labels(logits, labels, kind);
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int predicted = 0;
    if (kind == LossKind::bce_with_logits) {
      predicted = logits(i, 0) > 0.0 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < logits.cols(); ++c)
        if (logits(i, c) > logits(i, best)) best = c;
      predicted = static_cast<int>(best);
    }
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

MlpParams mlp_backward(const MlpSpec& spec, const MlpParams& params, const Batch& batch) {
  const std::size_t n = spec.layer_count();
  MlpParams grads;
  grads.weights.resize(n);
  grads.biases.resize(n);
  if (batch.size() == 0) {
    check_params(spec, params);
    for (std::size_t l = 0; l < n; ++l) {
      grads.weights[l] = Matrix::Zero(params.weights[l].rows(), params.weights[l].cols());
      grads.biases[l] = Vector::Zero(params.biases[l].size());
    }
    return grads;
  }
  const std::vector<Matrix> pre = forward_pre(spec, params, batch.inputs);
  check_labels(pre.back(), batch.labels, spec.loss);
  Matrix delta = loss_gradient(pre.back(), batch.labels, spec.loss);
  for (std::size_t l = n; l-- > 0;) {
    if (l == 0) {
      grads.weights[l].noalias() = delta.transpose() * batch.inputs;
    } else {
      grads.weights[l].noalias() = delta.transpose() * pre[l - 1].cwiseMax(0.0);
    }
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * params.weights[l];
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return grads;
}

MlpParams finite_difference_grad(const MlpSpec& spec, const MlpParams& params, const Batch& batch,
                                 double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  check_params(spec, params);
  MlpParams probe = params;
  MlpParams grads;
  auto loss_at = [&]() {
    if (batch.size() == 0) return 0.0;
    return loss_eval(mlp_forward(spec, probe, batch.inputs), batch.labels, spec.loss);
  };
  auto differentiate = [&](double& slot) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss_at();
    slot = saved - eps;
    const double down = loss_at();
    slot = saved;
    return (up - down) / (2.0 * eps);
  };
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix gw(params.weights[l].rows(), params.weights[l].cols());
    for (Eigen::Index j = 0; j < gw.cols(); ++j)
      for (Eigen::Index i = 0; i < gw.rows(); ++i) gw(i, j) = differentiate(probe.weights[l](i, j));
    Vector gb(params.biases[l].size());
    for (Eigen::Index i = 0; i < gb.size(); ++i) gb(i) = differentiate(probe.biases[l](i));
    grads.weights.push_back(std::move(gw));
    grads.biases.push_back(std::move(gb));
  }
  return grads;
}

namespace {

double block_rel_error(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& f) {
  if (a.size() == 0) return 0.0;
  const double diff = (a - f).cwiseAbs().maxCoeff();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), f.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return diff / scale;
}

}  // namespace

std::vector<GradCheckEntry> gradient_check(const MlpSpec& spec, const MlpParams& params,
                                           const Batch& batch, const BackwardFn& backward,
                                           double eps) {
  const MlpParams analytic = backward(spec, params, batch);
  const MlpParams numeric = finite_difference_grad(spec, params, batch, eps);
  std::vector<GradCheckEntry> report;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    report.push_back({fmt::format("W{}", l), block_rel_error(analytic.weights[l], numeric.weights[l])});
    report.push_back({fmt::format("b{}", l), block_rel_error(analytic.biases[l], numeric.biases[l])});
  }
  return report;
}

Batch drop_near_kink_samples(const MlpSpec& spec, const MlpParams& params, const Batch& batch,
                             double margin) {
  if (batch.size() == 0) return batch;
  const std::vector<Matrix> pre = forward_pre(spec, params, batch.inputs);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    bool smooth = true;
    for (std::size_t l = 0; l + 1 < pre.size() && smooth; ++l)
      smooth = pre[l].row(i).cwiseAbs().minCoeff() >= margin;
    if (smooth) keep.push_back(i);
  }
  Batch out{Matrix(static_cast<Eigen::Index>(keep.size()), batch.inputs.cols()), {}};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = batch.inputs.row(keep[k]);
    out.labels.push_back(batch.labels[static_cast<std::size_t>(keep[k])]);
  }
  return out;
}

// ---- store mapping ------------------------------------------------------

namespace {

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw DimensionMismatch("flattened block has the wrong length");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

Matrix orthonormal_weight(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const Orientation o = ortho_orientation(rows, cols);
  const Eigen::Index r = std::max(rows, cols);
  const Eigen::Index s = std::min(rows, cols);
  return from_constrained(orthonormalize_columns(standard_normal_matrix(r, s, rng)), o);
}

}  // namespace

ParamStore init_params(const MlpSpec& spec, const ParamLayout& layout, Rng& rng, InitReport* report) {
  spec.validate();
  layout.validate(spec);
  MlpParams params;
  InitReport local;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Eigen::Index out = spec.widths[l + 1];
    const Eigen::Index in = spec.widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const auto& a = layout.layers[l];
    Matrix w;
    if (a.kind == LayerConstraint::orthogonal || a.orthogonal_init) {
      w = orthonormal_weight(out, in, rng);
    } else {
      w = uniform_matrix(out, in, bound, rng);
      if (a.kind == LayerConstraint::circle) {
        for (Eigen::Index k = 0; k < w.size(); ++k) {
          double& x = w.data()[k];
          if (std::abs(x) > a.radius) {
            x = std::copysign(a.radius, x);
            ++local.clipped;
          }
        }
      }
    }
    Vector b(out);
    for (Eigen::Index i = 0; i < out; ++i) b(i) = bound * (2.0 * rng.uniform() - 1.0);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  if (report) *report = local;
  return to_store(spec, layout, params);
}

ParamStore to_store(const MlpSpec& spec, const ParamLayout& layout, const MlpParams& params) {
  layout.validate(spec);
  check_params(spec, params);
  ParamStore store;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Matrix& w = params.weights[l];
    const auto& a = layout.layers[l];
    switch (a.kind) {
      case LayerConstraint::unconstrained:
        store.free.push_back(flatten(w));
        break;
      case LayerConstraint::circle: {
        Vector theta = flatten(w);
        Vector radii = Vector::Constant(theta.size(), a.radius);
        Vector xi = circle_slack_init(theta, radii);
        store.circles.push_back({std::move(theta), std::move(xi), std::move(radii)});
        break;
      }
      case LayerConstraint::orthogonal: {
        const Orientation o = ortho_orientation(w.rows(), w.cols());
        store.orthos.push_back({to_constrained(w, o), o});
        break;
      }
    }
    store.free.push_back(params.biases[l]);
  }
  return store;
}

MlpParams from_store(const MlpSpec& spec, const ParamLayout& layout, const ParamStore& store) {
  MlpParams params;
  std::size_t free_i = 0, circle_i = 0, ortho_i = 0;
  auto next_free = [&]() -> const Vector& {
    if (free_i >= store.free.size()) throw DimensionMismatch("parameter store has too few free blocks");
    return store.free[free_i++];
  };
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Eigen::Index out = spec.widths[l + 1];
    const Eigen::Index in = spec.widths[l];
    switch (layout.layers[l].kind) {
      case LayerConstraint::unconstrained:
        params.weights.push_back(unflatten(next_free(), out, in));
        break;
      case LayerConstraint::circle:
        if (circle_i >= store.circles.size()) throw DimensionMismatch("missing circle group");
        params.weights.push_back(unflatten(store.circles[circle_i++].theta, out, in));
        break;
      case LayerConstraint::orthogonal: {
        if (ortho_i >= store.orthos.size()) throw DimensionMismatch("missing orthogonality group");
        const auto& g = store.orthos[ortho_i++];
        params.weights.push_back(from_constrained(g.q, g.orientation));
        break;
      }
    }
    params.biases.push_back(next_free());
  }
  return params;
}

GradientStore to_gradient_store(const MlpSpec& spec, const ParamLayout& layout,
                                const MlpParams& grads) {
  GradientStore store;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Matrix& gw = grads.weights[l];
    switch (layout.layers[l].kind) {
      case LayerConstraint::unconstrained:
        store.free.push_back(flatten(gw));
        break;
      case LayerConstraint::circle:
        store.circles.push_back(flatten(gw));
        break;
      case LayerConstraint::orthogonal:
        store.orthos.push_back(to_constrained(gw, ortho_orientation(gw.rows(), gw.cols())));
        break;
    }
    store.free.push_back(grads.biases[l]);
  }
  return store;
}

GradientOracle make_gradient_oracle(const MlpSpec& spec, const ParamLayout& layout) {
  return [spec, layout](const ParamStore& store, const Batch& batch) {
    const MlpParams params = from_store(spec, layout, store);
    return to_gradient_store(spec, layout, mlp_backward(spec, params, batch));
  };
}

}  // namespace cola
