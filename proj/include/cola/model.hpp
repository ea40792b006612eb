#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cola/batch.hpp"
#include "cola/integrators.hpp"
#include "cola/param_store.hpp"

namespace cola {

enum class Activation { relu };
enum class LossKind { bce_with_logits, softmax_cross_entropy };

LossKind parse_loss(std::string_view name);
std::string_view to_string(LossKind k);

/// Fully connected network: widths = (input, hidden..., output); ReLU between
/// layers, affine output.
struct MlpSpec {
  std::vector<int> widths;
  Activation activation = Activation::relu;
  LossKind loss = LossKind::bce_with_logits;

  void validate() const;
  std::size_t layer_count() const { return widths.size() - 1; }
};

/// weights[l] has shape widths[l+1] x widths[l].
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

enum class LayerConstraint { unconstrained, circle, orthogonal };

struct LayerAssignment {
  LayerConstraint kind = LayerConstraint::unconstrained;
  /// Circle radius shared by every weight of the layer.
  double radius = 1.0;
  /// Orthonormal initialization of an unconstrained weight.
  bool orthogonal_init = false;
};

/// Per-weight-matrix treatment; biases are always unconstrained.
struct ParamLayout {
  std::vector<LayerAssignment> layers;

  static ParamLayout unconstrained(const MlpSpec& spec);
  /// Constrains every weight except the input and output layers.
  static ParamLayout hidden(const MlpSpec& spec, LayerAssignment assignment);
  void validate(const MlpSpec& spec) const;
};

// ---- network evaluation -------------------------------------------------

Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& inputs);

/// Mean loss over the batch. BCE uses the stable softplus form.
double loss_eval(const Matrix& logits, const std::vector<int>& labels, LossKind kind);

/// BCE: class 1 iff logit > 0. CE: argmax, ties to the lower index.
double accuracy_eval(const Matrix& logits, const std::vector<int>& labels, LossKind kind);

/// Exact gradient of the mean loss (ReLU'(0) = 0).
MlpParams mlp_backward(const MlpSpec& spec, const MlpParams& params, const Batch& batch);

/// Central differences over every weight and bias.
MlpParams finite_difference_grad(const MlpSpec& spec, const MlpParams& params, const Batch& batch,
                                 double eps);

using BackwardFn = std::function<MlpParams(const MlpSpec&, const MlpParams&, const Batch&)>;

struct GradCheckEntry {
  std::string block;  ///< "W<l>" or "b<l>"
  /// max |analytic - fd| / max(max |analytic|, max |fd|) over the block.
  double max_rel_error = 0.0;
};

std::vector<GradCheckEntry> gradient_check(const MlpSpec& spec, const MlpParams& params,
                                           const Batch& batch, const BackwardFn& backward,
                                           double eps = 1.0e-5);

/// Removes samples whose pre-activations come within `margin` of a ReLU kink,
/// where central differences are not valid.
Batch drop_near_kink_samples(const MlpSpec& spec, const MlpParams& params, const Batch& batch,
                             double margin);

// ---- parameter store mapping ------------------------------------------

struct InitReport {
  /// Circle-constrained weights clipped into [-r, r] before slack init.
  std::size_t clipped = 0;
};

/// Uniform U(-1/sqrt(n_in), 1/sqrt(n_in)) for unconstrained weights and all
/// biases, orthonormal columns for orthogonal layers, clipped uniform plus
/// slack for circle layers.
ParamStore init_params(const MlpSpec& spec, const ParamLayout& layout, Rng& rng,
                       InitReport* report = nullptr);

/// Circle layers get their slack from circle_slack_init (throws InfeasibleInit).
ParamStore to_store(const MlpSpec& spec, const ParamLayout& layout, const MlpParams& params);
MlpParams from_store(const MlpSpec& spec, const ParamLayout& layout, const ParamStore& store);
GradientStore to_gradient_store(const MlpSpec& spec, const ParamLayout& layout,
                                const MlpParams& grads);

GradientOracle make_gradient_oracle(const MlpSpec& spec, const ParamLayout& layout);

}  // namespace cola
