#include "cola/integrators.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

void IntegratorConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError(fmt::format("stepsize h must be > 0, got {}", h));
  if (!(tau >= 0.0)) throw ConfigError(fmt::format("temperature tau must be >= 0, got {}", tau));
  if (scheme == Scheme::ud_oba && !(gamma > 0.0))
    throw ConfigError(fmt::format("friction gamma must be > 0 for ud_oba, got {}", gamma));
  if (!(gamma >= 0.0)) throw ConfigError(fmt::format("friction gamma must be >= 0, got {}", gamma));
  if (k_max < 0) throw ConfigError("k_max must be >= 0");
  if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
}

Scheme parse_scheme(std::string_view name) {
  if (name == "od") return Scheme::od;
  if (name == "ud_oba" || name == "ud") return Scheme::ud_oba;
  if (name == "baseline_em" || name == "sgd") return Scheme::baseline_em;
  if (name == "baseline_sgdm" || name == "sgdm") return Scheme::baseline_sgdm;
  throw ConfigError(fmt::format("unknown scheme '{}' (od, ud_oba, baseline_em, baseline_sgdm)", name));
}

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::od: return "od";
    case Scheme::ud_oba: return "ud_oba";
    case Scheme::baseline_em: return "baseline_em";
    case Scheme::baseline_sgdm: return "baseline_sgdm";
  }
  return "?";
}

ProjectionVariant parse_projection(std::string_view name) {
  if (name == "orthogonal") return ProjectionVariant::orthogonal;
  if (name == "oblique") return ProjectionVariant::oblique;
  throw ConfigError(fmt::format("unknown projection variant '{}' (orthogonal, oblique)", name));
}

std::string_view to_string(ProjectionVariant v) {
  return v == ProjectionVariant::orthogonal ? "orthogonal" : "oblique";
}

SplittingOrder parse_order(std::string_view name) {
  if (name == "oba") return SplittingOrder::oba;
  if (name == "abo") return SplittingOrder::abo;
  throw ConfigError(fmt::format("unknown splitting order '{}' (oba, abo)", name));
}

std::string_view to_string(SplittingOrder o) { return o == SplittingOrder::oba ? "oba" : "abo"; }

namespace {

double od_noise_scale(const IntegratorConfig& cfg) { return std::sqrt(2.0 * cfg.tau * cfg.h); }

double ou_noise_scale(const IntegratorConfig& cfg) {
  return std::sqrt(cfg.tau * (1.0 - std::exp(-2.0 * cfg.gamma * cfg.h)));
}

bool projecting(const IntegratorConfig& cfg) { return cfg.fault != Fault::skip_momentum_projection; }

void project_circle_momentum(const CircleGroup& g, CircleMomentum& p) {
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const auto out = circle_cotangent_project(p.p_c(i), p.p_xi(i), g.theta(i), g.xi(i), g.radii(i));
    p.p_c(i) = out.theta;
    p.p_xi(i) = out.xi;
  }
}

}  // namespace

Vector em_step_unconstrained(const Vector& theta, const Vector& grad, const IntegratorConfig& cfg,
                             Rng& rng) {
  if (grad.size() != theta.size()) throw DimensionMismatch("em step: gradient size differs");
  Vector out = theta - cfg.h * grad;
  if (cfg.tau > 0.0) out += od_noise_scale(cfg) * standard_normal_vector(theta.size(), rng);
  return out;
}

CircleGroup cola_od_circle_step(const CircleGroup& group, const Vector& grad_theta,
                                const IntegratorConfig& cfg, Rng& rng) {
  const Eigen::Index m = group.size();
  if (grad_theta.size() != m) throw DimensionMismatch("circle od step: gradient size differs");
  Vector theta_bar = group.theta - cfg.h * grad_theta;
  Vector xi_bar = group.xi;
  if (cfg.tau > 0.0) {
    const double scale = od_noise_scale(cfg);
    theta_bar += scale * standard_normal_vector(m, rng);
    xi_bar += scale * standard_normal_vector(m, rng);
  }
  CircleGroup out{Vector(m), Vector(m), group.radii};
  for (Eigen::Index i = 0; i < m; ++i) {
    const CirclePoint p =
        cfg.projection == ProjectionVariant::orthogonal
            ? circle_project_orthogonal(theta_bar(i), xi_bar(i), group.radii(i))
            : circle_project_oblique(theta_bar(i), xi_bar(i), group.theta(i), group.xi(i),
                                     group.radii(i));
    out.theta(i) = p.theta;
    out.xi(i) = p.xi;
  }
  return out;
}

OrthoGroup cola_od_ortho_step(const OrthoGroup& group, const Matrix& grad_q,
                              const IntegratorConfig& cfg, Rng& rng) {
  if (grad_q.rows() != group.q.rows() || grad_q.cols() != group.q.cols())
    throw DimensionMismatch("ortho od step: gradient shape differs");
  Matrix proposal = group.q - cfg.h * grad_q;
  if (cfg.tau > 0.0)
    proposal += od_noise_scale(cfg) * standard_normal_matrix(group.q.rows(), group.q.cols(), rng);
  auto projected = ortho_quasi_newton_project(group.q, proposal, cfg.k_max, cfg.tol);
  return {std::move(projected.q), group.orientation};
}

void a_step_circle(CircleGroup& group, CircleMomentum& p, double h) {
  for (Eigen::Index i = 0; i < group.size(); ++i) {
    const double theta = group.theta(i);
    const double xi = group.xi(i);
    const double r = group.radii(i);
    const double omega = (xi * p.p_c(i) - theta * p.p_xi(i)) / (r * r);
    const double c = std::cos(omega * h);
    const double s = std::sin(omega * h);
    const double theta_new = c * theta + s * xi;
    const double xi_new = -s * theta + c * xi;
    group.theta(i) = theta_new;
    group.xi(i) = xi_new;
    p.p_c(i) = omega * xi_new;
    p.p_xi(i) = -omega * theta_new;
  }
}

void b_step_circle(const CircleGroup& group, CircleMomentum& p, const Vector& grad_theta,
                   double h, bool project) {
  if (grad_theta.size() != group.size()) throw DimensionMismatch("circle B step: gradient size differs");
  p.p_c -= h * grad_theta;
  if (project) project_circle_momentum(group, p);
}

void o_step_circle(const CircleGroup& group, CircleMomentum& p, const IntegratorConfig& cfg,
                   Rng& rng) {
  const double decay = std::exp(-cfg.gamma * cfg.h);
  p.p_c *= decay;
  p.p_xi *= decay;
  if (cfg.tau > 0.0) {
    const double scale = ou_noise_scale(cfg);
    p.p_c += scale * standard_normal_vector(group.size(), rng);
    p.p_xi += scale * standard_normal_vector(group.size(), rng);
  }
  if (projecting(cfg)) project_circle_momentum(group, p);
}

int a_step_ortho(OrthoGroup& group, Matrix& p, double h, int k_max, double tol, bool project) {
  Matrix proposal = group.q + h * p;
  auto fixed = ortho_quasi_newton_project(group.q, proposal, k_max, tol);
  p += (fixed.q - proposal) / h;
  group.q = std::move(fixed.q);
  if (project) p = ortho_cotangent_project(group.q, p);
  return fixed.iterations;
}

void b_step_ortho(const OrthoGroup& group, Matrix& p, const Matrix& grad_q, double h, bool project) {
  if (grad_q.rows() != p.rows() || grad_q.cols() != p.cols())
    throw DimensionMismatch("ortho B step: gradient shape differs");
  p -= h * grad_q;
  if (project) p = ortho_cotangent_project(group.q, p);
}

void o_step_ortho(const OrthoGroup& group, Matrix& p, const IntegratorConfig& cfg, Rng& rng) {
  p *= std::exp(-cfg.gamma * cfg.h);
  if (cfg.tau > 0.0) p += ou_noise_scale(cfg) * standard_normal_matrix(p.rows(), p.cols(), rng);
  if (projecting(cfg)) p = ortho_cotangent_project(group.q, p);
}

void a_step_free(Vector& theta, const Vector& p, double h) { theta += h * p; }

void b_step_free(Vector& p, const Vector& grad, double h) {
  if (grad.size() != p.size()) throw DimensionMismatch("B step: gradient size differs");
  p -= h * grad;
}

void o_step_free(Vector& p, const IntegratorConfig& cfg, Rng& rng) {
  p *= std::exp(-cfg.gamma * cfg.h);
  if (cfg.tau > 0.0) p += ou_noise_scale(cfg) * standard_normal_vector(p.size(), rng);
}

namespace {

void check_layout(const ParamStore& params, const GradientStore& grad) {
  if (grad.free.size() != params.free.size() || grad.circles.size() != params.circles.size() ||
      grad.orthos.size() != params.orthos.size())
    throw DimensionMismatch("gradient store layout does not match the parameter store");
}

void apply_o(PhasePoint& phase, const IntegratorConfig& cfg, Rng& rng) {
  auto& pos = phase.position;
  auto& mom = phase.momentum;
  for (auto& p : mom.free) o_step_free(p, cfg, rng);
  for (std::size_t i = 0; i < pos.circles.size(); ++i) o_step_circle(pos.circles[i], mom.circles[i], cfg, rng);
  for (std::size_t i = 0; i < pos.orthos.size(); ++i) o_step_ortho(pos.orthos[i], mom.orthos[i], cfg, rng);
}

void apply_b(PhasePoint& phase, const GradientStore& grad, const IntegratorConfig& cfg) {
  auto& pos = phase.position;
  auto& mom = phase.momentum;
  check_layout(pos, grad);
  const bool project = projecting(cfg);
  for (std::size_t i = 0; i < mom.free.size(); ++i) b_step_free(mom.free[i], grad.free[i], cfg.h);
  for (std::size_t i = 0; i < pos.circles.size(); ++i)
    b_step_circle(pos.circles[i], mom.circles[i], grad.circles[i], cfg.h, project);
  for (std::size_t i = 0; i < pos.orthos.size(); ++i)
    b_step_ortho(pos.orthos[i], mom.orthos[i], grad.orthos[i], cfg.h, project);
}

void apply_a(PhasePoint& phase, const IntegratorConfig& cfg) {
  auto& pos = phase.position;
  auto& mom = phase.momentum;
  for (std::size_t i = 0; i < pos.free.size(); ++i) a_step_free(pos.free[i], mom.free[i], cfg.h);
  for (std::size_t i = 0; i < pos.circles.size(); ++i) a_step_circle(pos.circles[i], mom.circles[i], cfg.h);
  for (std::size_t i = 0; i < pos.orthos.size(); ++i)
    a_step_ortho(pos.orthos[i], mom.orthos[i], cfg.h, cfg.k_max, cfg.tol, projecting(cfg));
}

}  // namespace

void od_step(ParamStore& params, const GradientOracle& oracle, const Batch& batch,
             const IntegratorConfig& cfg, Rng& rng) {
  const GradientStore grad = oracle(params, batch);
  check_layout(params, grad);
  for (std::size_t i = 0; i < params.free.size(); ++i)
    params.free[i] = em_step_unconstrained(params.free[i], grad.free[i], cfg, rng);
  for (std::size_t i = 0; i < params.circles.size(); ++i)
    params.circles[i] = cola_od_circle_step(params.circles[i], grad.circles[i], cfg, rng);
  for (std::size_t i = 0; i < params.orthos.size(); ++i)
    params.orthos[i] = cola_od_ortho_step(params.orthos[i], grad.orthos[i], cfg, rng);
}

void oba_step(PhasePoint& phase, const GradientOracle& oracle, const Batch& batch,
              const IntegratorConfig& cfg, Rng& rng) {
  if (cfg.order == SplittingOrder::oba) {
    apply_o(phase, cfg, rng);
    apply_b(phase, oracle(phase.position, batch), cfg);
    apply_a(phase, cfg);
  } else {
    apply_a(phase, cfg);
    apply_b(phase, oracle(phase.position, batch), cfg);
    apply_o(phase, cfg, rng);
  }
}

std::pair<Vector, Vector> sgdm_reference_step(const Vector& theta, const Vector& v,
                                              const Vector& grad, double lr, double mu) {
  Vector v_next = mu * v + grad;
  Vector theta_next = theta - lr * v_next;
  return {std::move(theta_next), std::move(v_next)};
}

MomentumStore initial_momentum(const ParamStore& params, const GradientStore& grad, double h) {
  check_layout(params, grad);
  MomentumStore m;
  for (const auto& g : grad.free) m.free.push_back(-h * g);
  for (std::size_t i = 0; i < params.circles.size(); ++i)
    m.circles.push_back({-h * grad.circles[i], Vector::Zero(params.circles[i].size())});
  for (const auto& g : grad.orthos) m.orthos.push_back(-h * g);
  project_momentum(params, m);
  return m;
}

Integrator::Integrator(IntegratorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Integrator::initialize(PhasePoint& phase, const GradientStore& initial_grad) const {
  switch (cfg_.scheme) {
    case Scheme::ud_oba:
      phase.momentum = initial_momentum(phase.position, initial_grad, cfg_.h);
      break;
    case Scheme::baseline_sgdm:
      phase.momentum = zero_momentum(phase.position);
      break;
    case Scheme::od:
    case Scheme::baseline_em:
      phase.momentum = MomentumStore{};
      break;
  }
}

void Integrator::step(PhasePoint& phase, const GradientOracle& oracle, const Batch& batch,
                      Rng& rng) const {
  const bool baseline = cfg_.scheme == Scheme::baseline_em || cfg_.scheme == Scheme::baseline_sgdm;
  if (baseline && phase.position.has_constraints())
    throw ConfigError(fmt::format("scheme {} trains unconstrained layouts only", to_string(cfg_.scheme)));
  switch (cfg_.scheme) {
    case Scheme::od:
    case Scheme::baseline_em:
      od_step(phase.position, oracle, batch, cfg_, rng);
      break;
    case Scheme::ud_oba:
      oba_step(phase, oracle, batch, cfg_, rng);
      break;
    case Scheme::baseline_sgdm: {
      const GradientStore grad = oracle(phase.position, batch);
      check_layout(phase.position, grad);
      for (std::size_t i = 0; i < phase.position.free.size(); ++i) {
        auto [theta, v] = sgdm_reference_step(phase.position.free[i], phase.momentum.free[i],
                                              grad.free[i], cfg_.h, cfg_.momentum);
        phase.position.free[i] = std::move(theta);
        phase.momentum.free[i] = std::move(v);
      }
      break;
    }
  }
}

}  // namespace cola
