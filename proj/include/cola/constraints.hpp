#pragma once

#include <map>
#include <string>

#include "cola/numerics.hpp"

namespace cola {

/// Parameters bounded by |theta_i| <= r_i through the slack equality
/// theta_i^2 + xi_i^2 = r_i^2.
struct CircleGroup {
  Vector theta;
  Vector xi;
  Vector radii;

  Eigen::Index size() const { return theta.size(); }
};

/// A point (theta, xi) in one circle's plane.
struct CirclePoint {
  double theta = 0.0;
  double xi = 0.0;
};

/// Which way a weight matrix W (out x in) is stored so that the constrained
/// matrix Q is tall: Q = W when in <= out, otherwise Q = W^T.
enum class Orientation { as_is, transposed };

/// Orthogonality group: Q^T Q = I_s with Q of shape r x s, r >= s.
struct OrthoGroup {
  Matrix q;
  Orientation orientation = Orientation::as_is;
};

struct ConstraintResidual {
  double max_abs = 0.0;
  std::map<std::string, double> per_group;

  void record(const std::string& group, double value);
};

struct MatrixShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  friend bool operator==(const MatrixShape&, const MatrixShape&) = default;
};

inline constexpr double kDegenerateRadius = 1.0e-12;

// ---- circle -------------------------------------------------------------

/// Component i is theta_i^2 + xi_i^2 - r_i^2.
Vector circle_residual(const CircleGroup& g);
double circle_max_residual(const CircleGroup& g);

/// xi_i = +sqrt(r_i^2 - theta_i^2). Throws InfeasibleInit if |theta_i| > r_i.
Vector circle_slack_init(const Vector& theta_c, const Vector& radii);

/// Nearest point on the circle of radius r. Uses atan2, so every quadrant is
/// handled; throws DegeneratePoint when the input is within 1e-12 of the origin.
CirclePoint circle_project_orthogonal(double theta_bar, double xi_bar, double r);

/// Projection of the proposal along the gradient direction 2*(theta_n, xi_n)
/// of the base point. Of the two roots the one with the smaller multiplier
/// (closest to the base point) is returned. Throws NoRealRoot when the line
/// misses the circle.
CirclePoint circle_project_oblique(double theta_bar, double xi_bar, double theta_n, double xi_n,
                                   double r);

/// Removes the radial component of (p_c, p_xi) at the on-circle point (theta, xi).
CirclePoint circle_cotangent_project(double p_c, double p_xi, double theta, double xi, double r);

// ---- orthogonality ------------------------------------------------------

/// Orientation rule for a weight of shape rows_out x cols_in.
Orientation ortho_orientation(Eigen::Index rows_out, Eigen::Index cols_in);

/// Q for a weight matrix under the given orientation, and back.
Matrix to_constrained(const Matrix& weight, Orientation o);
Matrix from_constrained(const Matrix& q, Orientation o);

/// ||Q^T Q - I_s||_F
double ortho_residual(const OrthoGroup& g);

struct QuasiNewtonResult {
  Matrix q;
  int iterations = 0;
  /// ||Lambda||_F at the returned iterate.
  double lambda_norm = 0.0;
};

/// Iterates Q <- Q - q_base * Lambda, Lambda = (Q^T Q - I)/2, starting from q0,
/// until ||Lambda||_F <= tol or k_max corrections have been applied.
/// Throws Divergence if the residual exceeds ten times its initial value.
QuasiNewtonResult ortho_quasi_newton_project(const Matrix& q_base, const Matrix& q0, int k_max,
                                             double tol);

/// P - Q (P^T Q + Q^T P) / 2
Matrix ortho_cotangent_project(const Matrix& q, const Matrix& p_bar);

/// ||P^T Q + Q^T P||_F
double ortho_cotangency_residual(const Matrix& q, const Matrix& p);

/// A conv kernel n_l x n_in x n_h x n_w is handled as an n_l x (n_in n_h n_w) matrix.
MatrixShape reshape_conv_weight(Eigen::Index n_out, Eigen::Index n_in, Eigen::Index n_h,
                                Eigen::Index n_w);

}  // namespace cola
