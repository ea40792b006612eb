#include "cola/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cola {

MomentumStore zero_momentum(const ParamStore& params) {
  MomentumStore m;
  for (const auto& block : params.free) m.free.push_back(Vector::Zero(block.size()));
  for (const auto& g : params.circles)
    m.circles.push_back({Vector::Zero(g.size()), Vector::Zero(g.size())});
  for (const auto& g : params.orthos) m.orthos.push_back(Matrix::Zero(g.q.rows(), g.q.cols()));
  return m;
}

ConstraintResidual position_residual(const ParamStore& params) {
  ConstraintResidual res;
  for (std::size_t i = 0; i < params.circles.size(); ++i)
    res.record("circle" + std::to_string(i), circle_max_residual(params.circles[i]));
  for (std::size_t i = 0; i < params.orthos.size(); ++i)
    res.record("ortho" + std::to_string(i), ortho_residual(params.orthos[i]));
  return res;
}

double cotangency_residual(const PhasePoint& phase) {
  double worst = 0.0;
  const auto& pos = phase.position;
  const auto& mom = phase.momentum;
  for (std::size_t i = 0; i < pos.circles.size(); ++i) {
    const auto& g = pos.circles[i];
    const auto& p = mom.circles[i];
    if (g.size() == 0) continue;
    const double r =
        (g.theta.cwiseProduct(p.p_c) + g.xi.cwiseProduct(p.p_xi)).cwiseAbs().maxCoeff();
    worst = std::max(worst, r);
  }
  for (std::size_t i = 0; i < pos.orthos.size(); ++i)
    worst = std::max(worst, ortho_cotangency_residual(pos.orthos[i].q, mom.orthos[i]));
  return worst;
}

void project_momentum(const ParamStore& params, MomentumStore& momentum) {
  for (std::size_t k = 0; k < params.circles.size(); ++k) {
    const auto& g = params.circles[k];
    auto& p = momentum.circles[k];
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const auto projected =
          circle_cotangent_project(p.p_c(i), p.p_xi(i), g.theta(i), g.xi(i), g.radii(i));
      p.p_c(i) = projected.theta;
      p.p_xi(i) = projected.xi;
    }
  }
  for (std::size_t k = 0; k < params.orthos.size(); ++k)
    momentum.orthos[k] = ortho_cotangent_project(params.orthos[k].q, momentum.orthos[k]);
}

}  // namespace cola
