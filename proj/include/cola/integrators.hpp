#pragma once

#include <functional>
#include <string_view>
#include <utility>

#include "cola/batch.hpp"
#include "cola/param_store.hpp"

namespace cola {

enum class Scheme {
  od,             ///< overdamped: Euler-Maruyama proposal, then projection
  ud_oba,         ///< underdamped splitting (O, B, A by default)
  baseline_em,    ///< plain EM / SGD, unconstrained layouts only
  baseline_sgdm,  ///< momentum SGD recursion, unconstrained layouts only
};

enum class ProjectionVariant { orthogonal, oblique };
enum class SplittingOrder { oba, abo };

/// Negative controls for the verification suite.
enum class Fault { none, skip_momentum_projection };

struct IntegratorConfig {
  Scheme scheme = Scheme::od;
  double h = 0.1;
  double gamma = 1.0;
  double tau = 0.0;
  int k_max = 5;
  double tol = 1.0e-10;
  ProjectionVariant projection = ProjectionVariant::orthogonal;
  SplittingOrder order = SplittingOrder::oba;
  /// mu of the baseline_sgdm recursion; its learning rate is h.
  double momentum = 0.9;
  Fault fault = Fault::none;

  /// Throws ConfigError on h <= 0, tau < 0, or gamma <= 0 with ud_oba.
  void validate() const;
};

Scheme parse_scheme(std::string_view name);
std::string_view to_string(Scheme s);
ProjectionVariant parse_projection(std::string_view name);
std::string_view to_string(ProjectionVariant v);
SplittingOrder parse_order(std::string_view name);
std::string_view to_string(SplittingOrder o);

using GradientOracle = std::function<GradientStore(const ParamStore&, const Batch&)>;

// ---- overdamped --------------------------------------------------------

/// theta - h grad + sqrt(2 tau h) R
Vector em_step_unconstrained(const Vector& theta, const Vector& grad, const IntegratorConfig& cfg,
                             Rng& rng);

/// EM proposal on (theta, xi) with the gradient on theta only, then projection
/// back onto each circle with cfg.projection.
CircleGroup cola_od_circle_step(const CircleGroup& group, const Vector& grad_theta,
                                const IntegratorConfig& cfg, Rng& rng);

/// EM proposal on Q, then the quasi-Newton projection based at the current Q.
OrthoGroup cola_od_ortho_step(const OrthoGroup& group, const Matrix& grad_q,
                              const IntegratorConfig& cfg, Rng& rng);

// ---- underdamped sub-steps ---------------------------------------------

/// Exact geodesic flow: rotation of each (theta_i, xi_i) at angular speed
/// omega_i = (xi_i p_c,i - theta_i p_xi,i) / r_i^2.
void a_step_circle(CircleGroup& group, CircleMomentum& p, double h);

/// Projected gradient impulse.
void b_step_circle(const CircleGroup& group, CircleMomentum& p, const Vector& grad_theta,
                   double h, bool project = true);

/// Ornstein-Uhlenbeck kick on (p_c, p_xi), then cotangent projection.
void o_step_circle(const CircleGroup& group, CircleMomentum& p, const IntegratorConfig& cfg,
                   Rng& rng);

/// RATTLE drift: Q + hP, quasi-Newton position fix, momentum from the
/// position change, cotangent projection at the new point. Returns the number
/// of quasi-Newton corrections.
int a_step_ortho(OrthoGroup& group, Matrix& p, double h, int k_max, double tol,
                 bool project = true);

void b_step_ortho(const OrthoGroup& group, Matrix& p, const Matrix& grad_q, double h,
                  bool project = true);

void o_step_ortho(const OrthoGroup& group, Matrix& p, const IntegratorConfig& cfg, Rng& rng);

void a_step_free(Vector& theta, const Vector& p, double h);
void b_step_free(Vector& p, const Vector& grad, double h);
void o_step_free(Vector& p, const IntegratorConfig& cfg, Rng& rng);

// ---- whole-store steps -------------------------------------------------

/// One overdamped step of every group (od / baseline_em).
void od_step(ParamStore& params, const GradientOracle& oracle, const Batch& batch,
             const IntegratorConfig& cfg, Rng& rng);

/// One underdamped step (O, B, A with one gradient evaluation, or A, B, O).
void oba_step(PhasePoint& phase, const GradientOracle& oracle, const Batch& batch,
              const IntegratorConfig& cfg, Rng& rng);

/// v' = mu v + grad; theta' = theta - lr v'.
std::pair<Vector, Vector> sgdm_reference_step(const Vector& theta, const Vector& v,
                                              const Vector& grad, double lr, double mu);

/// p0 = -h grad(theta0), projected onto the cotangent space groupwise.
MomentumStore initial_momentum(const ParamStore& params, const GradientStore& grad, double h);

/// Drives any scheme over a PhasePoint. Momentum schemes need `initialize`
/// before the first step; for baseline_sgdm the free momentum blocks hold the
/// velocity buffer v.
class Integrator {
 public:
  explicit Integrator(IntegratorConfig cfg);

  const IntegratorConfig& config() const { return cfg_; }

  void initialize(PhasePoint& phase, const GradientStore& initial_grad) const;
  void step(PhasePoint& phase, const GradientOracle& oracle, const Batch& batch, Rng& rng) const;

 private:
  IntegratorConfig cfg_;
};

}  // namespace cola
