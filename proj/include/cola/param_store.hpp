#pragma once

#include <vector>

#include "cola/constraints.hpp"
#include "cola/numerics.hpp"

namespace cola {

/// Model parameters partitioned by constraint family. Each entry of `free` is
/// one unconstrained block (a bias vector, or a flattened weight matrix).
struct ParamStore {
  std::vector<Vector> free;
  std::vector<CircleGroup> circles;
  std::vector<OrthoGroup> orthos;

  bool has_constraints() const { return !circles.empty() || !orthos.empty(); }
};

struct CircleMomentum {
  Vector p_c;
  Vector p_xi;
};

/// Momenta laid out like a ParamStore.
struct MomentumStore {
  std::vector<Vector> free;
  std::vector<CircleMomentum> circles;
  std::vector<Matrix> orthos;
};

/// Loss gradient laid out like a ParamStore. The slack gradient is identically
/// zero and is not stored.
struct GradientStore {
  std::vector<Vector> free;
  std::vector<Vector> circles;
  std::vector<Matrix> orthos;
};

struct PhasePoint {
  ParamStore position;
  MomentumStore momentum;
};

MomentumStore zero_momentum(const ParamStore& params);

/// Largest position residual over every constrained group. Group ids are
/// "circle<i>" and "ortho<i>".
ConstraintResidual position_residual(const ParamStore& params);

/// Largest cotangency residual: |theta p_c + xi p_xi| for circles,
/// ||P^T Q + Q^T P||_F for orthogonality groups.
double cotangency_residual(const PhasePoint& phase);

/// Projects every constrained momentum block onto the cotangent space at the
/// current position; free blocks are left unchanged.
void project_momentum(const ParamStore& params, MomentumStore& momentum);

}  // namespace cola
