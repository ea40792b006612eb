#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cola/numerics.hpp"

namespace cola {

/// A constraint map g: R^d -> R^m with an optional analytic Jacobian
/// G(q) = dg/dq (m x d). Without one, G is taken by central differences with
/// step `fd_step`.
struct GenericConstraint {
  Eigen::Index dim = 0;
  Eigen::Index count = 0;
  std::function<Vector(const Vector&)> g;
  std::function<Matrix(const Vector&)> jacobian;
  double fd_step = 1.0e-6;

  Matrix eval_jacobian(const Vector& q) const;

  /// |q|^2 - r^2 in R^dim (dim = 2 gives the circle).
  static GenericConstraint sphere(Eigen::Index dim, double r);
  static GenericConstraint none(Eigen::Index dim);
};

/// Pi = I - G^T (G G^T)^{-1} G, from the eigendecomposition of G G^T. Throws
/// RankDeficient when its smallest eigenvalue is <= 1e-8.
Matrix numeric_projection(const GenericConstraint& c, const Vector& q);

/// H_i = sum_jk Pi_jk d_j Pi_ik with d_j Pi by central differences of Pi,
/// each stencil Pi recomputed from G.
Vector mean_curvature(const GenericConstraint& c, const Vector& q, double fd_step = 1.0e-5);

/// One Euler-Maruyama step of the unconstrained equivalent SDE
///   dq = -Pi grad V dt + sqrt(2 tau) Pi dW + tau H dt.
/// Iterates leave the manifold at O(h); compare only in distribution.
Vector underlying_sde_step(const GenericConstraint& c, const Vector& q, const Vector& grad, double h,
                           double tau, Rng& rng);

double time_average(std::span<const double> series);
double time_average(const std::function<double(const Vector&)>& observable,
                    const std::vector<Vector>& trajectory);

/// Batch-means estimate of the asymptotic variance of a time average: the
/// series is cut into n_batches equal blocks of length b (trailing remainder
/// dropped) and the result is b times the sample variance of the block means,
/// so Var(mean) ~ result / length. Throws Error for n_batches < 2 or blocks
/// shorter than one sample.
double batch_means_variance(std::span<const double> series, std::size_t n_batches);

/// Running record of one observable along a trajectory.
class TrajectoryStats {
 public:
  void add(double value) { samples_.push_back(value); }
  std::size_t count() const { return samples_.size(); }
  double mean() const { return time_average(samples_); }
  double batch_means_variance(std::size_t n_batches) const {
    return cola::batch_means_variance(samples_, n_batches);
  }
  std::span<const double> samples() const { return samples_; }

 private:
  std::vector<double> samples_;
};

/// Orthonormalized r x s Gaussian: Haar-distributed on the Stiefel manifold.
Matrix haar_stiefel_sample(Eigen::Index r, Eigen::Index s, Rng& rng);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace cola
