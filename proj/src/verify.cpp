#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "cola/diagnostics.hpp"
#include "cola/error.hpp"
#include "cola/experiment.hpp"

namespace cola {

namespace {

constexpr std::uint64_t kVerifySeed = 20240601;

void add(std::vector<VerifyCheck>& out, std::string id, double measured, double tolerance) {
  const bool pass = std::isfinite(measured) && measured <= tolerance;
  out.push_back({std::move(id), measured, tolerance, pass});
}

/// Runs `body`; a library error becomes a failing entry with measured = inf.
template <class F>
void guarded(std::vector<VerifyCheck>& out, const std::string& id, double tolerance, F&& body) {
  try {
    add(out, id, body(), tolerance);
  } catch (const Error&) {
    add(out, id, std::numeric_limits<double>::infinity(), tolerance);
  }
}

GradientOracle quadratic_oracle(double k) {
  return [k](const ParamStore& p, const Batch&) {
    GradientStore g;
    for (const auto& f : p.free) g.free.push_back(k * f);
    for (const auto& c : p.circles) g.circles.push_back(k * c.theta);
    for (const auto& o : p.orthos) g.orthos.push_back(k * o.q);
    return g;
  };
}

PhasePoint circle_start(Eigen::Index n, Rng& rng) {
  PhasePoint phase;
  CircleGroup g;
  g.radii = Vector::Constant(n, 1.0);
  g.theta = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) g.theta(i) = 2.0 * rng.uniform() - 1.0;
  g.xi = circle_slack_init(g.theta, g.radii);
  phase.position.circles.push_back(std::move(g));
  return phase;
}

PhasePoint ortho_start(Eigen::Index r, Eigen::Index s, Rng& rng) {
  PhasePoint phase;
  phase.position.orthos.push_back({haar_stiefel_sample(r, s, rng), Orientation::as_is});
  return phase;
}

struct TrajectoryCheck {
  double residual = 0.0;
  double cotangency = 0.0;
};

TrajectoryCheck run_steps(PhasePoint phase, const IntegratorConfig& cfg, int steps, Rng& rng) {
  const GradientOracle oracle = quadratic_oracle(1.0);
  const Integrator integrator(cfg);
  const Batch none;
  integrator.initialize(phase, oracle(phase.position, none));
  TrajectoryCheck out;
  for (int s = 0; s < steps; ++s) {
    integrator.step(phase, oracle, none, rng);
    out.residual = std::max(out.residual, position_residual(phase.position).max_abs);
    if (cfg.scheme == Scheme::ud_oba) out.cotangency = std::max(out.cotangency, cotangency_residual(phase));
  }
  return out;
}

/// Unconstrained OBA at tau = 0 against the momentum recursion on V = |x|^2 A / 2.
double sgdm_equivalence() {
  Rng rng(kVerifySeed);
  const Eigen::Index d = 10;
  const Matrix b = standard_normal_matrix(d, d, rng);
  const Matrix a = b.transpose() * b / static_cast<double>(d) + Matrix::Identity(d, d);
  const GradientOracle oracle = [&a](const ParamStore& p, const Batch&) {
    GradientStore g;
    g.free.push_back(a * p.free.front());
    return g;
  };
  IntegratorConfig cfg;
  cfg.scheme = Scheme::ud_oba;
  cfg.h = 0.1;
  cfg.gamma = 1.0;
  const double mu = std::exp(-cfg.gamma * cfg.h);
  const double lr = cfg.h * cfg.h;

  PhasePoint phase;
  phase.position.free.push_back(standard_normal_vector(d, rng));
  const Integrator integrator(cfg);
  const Batch none;
  integrator.initialize(phase, oracle(phase.position, none));

  Vector theta = phase.position.free.front();
  Vector v = -phase.momentum.free.front() / cfg.h;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    integrator.step(phase, oracle, none, rng);
    auto next = sgdm_reference_step(theta, v, a * theta, lr, mu);
    theta = std::move(next.first);
    v = std::move(next.second);
    const double scale = std::max(theta.cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (phase.position.free.front() - theta).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

double gradcheck_small() {
  GradcheckConfig cfg;
  cfg.model.widths = {3, 6, 5, 1};
  cfg.fixtures = 5;
  cfg.seed = kVerifySeed;
  return run_gradcheck(cfg)["max_rel_error"].get<double>();
}

double projection_idempotence() {
  Rng rng(kVerifySeed);
  double worst = 0.0;
  for (Eigen::Index d : {2, 3, 5}) {
    const GenericConstraint c = GenericConstraint::sphere(d, 1.5);
    for (int k = 0; k < 20; ++k) {
      const Vector q = 1.5 * standard_normal_vector(d, rng).normalized();
      const Matrix pi = numeric_projection(c, q);
      const Matrix jac = c.eval_jacobian(q);
      worst = std::max({worst, (pi * pi - pi).cwiseAbs().maxCoeff(), (pi - pi.transpose()).cwiseAbs().maxCoeff(),
                        (pi * jac.transpose()).cwiseAbs().maxCoeff()});
    }
  }
  return worst;
}

std::pair<double, double> curvature_errors() {
  Rng rng(kVerifySeed);
  double formula = 0.0;
  double tangential = 0.0;
  for (double r : {0.5, 1.0, 2.0}) {
    const GenericConstraint c = GenericConstraint::sphere(2, r);
    for (int k = 0; k < 20; ++k) {
      const double phi = 2.0 * std::numbers::pi * rng.uniform();
      const Vector q = Eigen::Vector2d(r * std::cos(phi), r * std::sin(phi));
      const Vector h = mean_curvature(c, q);
      formula = std::max(formula, (h + q / (r * r)).cwiseAbs().maxCoeff());
      tangential = std::max(tangential, (numeric_projection(c, q) * h).cwiseAbs().maxCoeff());
    }
  }
  return {formula, tangential};
}

double batch_means_iid() {
  Rng rng(kVerifySeed);
  std::vector<double> x(100000);
  for (double& v : x) v = rng.normal();
  return std::abs(batch_means_variance(x, 100) - 1.0);
}

double circle_sampler_theta_sq() {
  SampleConfig cfg;
  cfg.integrator.scheme = Scheme::od;
  cfg.integrator.h = 0.01;
  cfg.integrator.tau = 1.0;
  cfg.count = 100;
  cfg.steps = 2000;
  cfg.burn_in = 500;
  cfg.record_every = 10;
  cfg.seed = kVerifySeed;
  const SampleTrace trace = sample_trajectories(cfg);
  return std::abs(time_average(trace.series.at("theta_sq")) - 0.5);
}

double spiral_balance() {
  SpiralSpec spec;
  spec.seed = kVerifySeed;
  const auto [train, test] = spiral_generate(spec);
  double worst = 0.0;
  for (const Dataset* ds : {&train, &test}) {
    const auto ones = std::count(ds->labels.begin(), ds->labels.end(), 1);
    worst = std::max(worst, std::abs(2.0 * static_cast<double>(ones) - static_cast<double>(ds->labels.size())));
  }
  return worst;
}

double idx_roundtrip() {
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("cola-verify-{}", kVerifySeed);
  std::filesystem::create_directories(dir);
  IdxArray a{{3, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255}};
  write_idx(dir / "a.idx", a);
  const IdxArray b = read_idx(dir / "a.idx");
  std::filesystem::remove_all(dir);
  return (a.dims == b.dims && a.values == b.values) ? 0.0 : 1.0;
}

}  // namespace

std::vector<VerifyCheck> run_verify(Fault fault) {
  std::vector<VerifyCheck> out;
  Rng rng(kVerifySeed);

  guarded(out, "numerics.orthonormalize_columns", 1e-12, [&] {
    return orthonormality_defect(orthonormalize_columns(standard_normal_matrix(20, 10, rng)));
  });

  IntegratorConfig circle_cfg;
  circle_cfg.h = 0.1;
  circle_cfg.tau = 0.01;
  circle_cfg.fault = fault;
  guarded(out, "constraints.circle_residual.od", 1e-10, [&] {
    circle_cfg.scheme = Scheme::od;
    return run_steps(circle_start(100, rng), circle_cfg, 1000, rng).residual;
  });
  TrajectoryCheck circle_ud;
  guarded(out, "constraints.circle_residual.ud", 1e-10, [&] {
    circle_cfg.scheme = Scheme::ud_oba;
    circle_ud = run_steps(circle_start(100, rng), circle_cfg, 1000, rng);
    return circle_ud.residual;
  });
  add(out, "integrators.circle_cotangency.ud", circle_ud.cotangency, 1e-10);

  IntegratorConfig ortho_cfg;
  ortho_cfg.h = 0.05;
  ortho_cfg.tau = 0.01;
  ortho_cfg.fault = fault;
  // K = 5 base-point iterations contract only linearly in the size of the
  // noise kick, so the od bound is checked at tau = 0.
  guarded(out, "constraints.ortho_residual.od", 1e-7, [&] {
    IntegratorConfig od_cfg = ortho_cfg;
    od_cfg.scheme = Scheme::od;
    od_cfg.tau = 0.0;
    return run_steps(ortho_start(20, 10, rng), od_cfg, 500, rng).residual;
  });
  TrajectoryCheck ortho_ud;
  guarded(out, "constraints.ortho_residual.ud", 1e-7, [&] {
    ortho_cfg.scheme = Scheme::ud_oba;
    ortho_ud = run_steps(ortho_start(20, 10, rng), ortho_cfg, 500, rng);
    return ortho_ud.residual;
  });
  add(out, "integrators.ortho_cotangency.ud", ortho_ud.cotangency, 1e-8);

  guarded(out, "integrators.sgdm_equivalence", 1e-12, sgdm_equivalence);
  guarded(out, "model.gradcheck", 1e-6, gradcheck_small);
  guarded(out, "diagnostics.projection_idempotent", 1e-9, projection_idempotence);
  const auto [formula, tangential] = curvature_errors();
  add(out, "diagnostics.mean_curvature_circle", formula, 1e-6);
  add(out, "diagnostics.mean_curvature_tangential", tangential, 1e-6);
  guarded(out, "diagnostics.batch_means_iid", 0.3, batch_means_iid);
  guarded(out, "diagnostics.circle_theta_sq", 0.02, circle_sampler_theta_sq);
  guarded(out, "data.spiral_class_balance", 1.0, spiral_balance);
  guarded(out, "data.idx_roundtrip", 0.0, idx_roundtrip);
  return out;
}

nlohmann::json to_json(const std::vector<VerifyCheck>& checks) {
  nlohmann::json list = nlohmann::json::array();
  bool all = true;
  for (const auto& c : checks) {
    // JSON has no infinity; failures from exceptions are reported as null.
    nlohmann::json measured = std::isfinite(c.measured) ? nlohmann::json(c.measured) : nlohmann::json(nullptr);
    list.push_back({{"check_id", c.check_id}, {"measured", measured}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    all = all && c.pass;
  }
  return {{"code_version", code_version()}, {"command", "verify"}, {"all_pass", all}, {"checks", list}};
}

}  // namespace cola
