#include "cola/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

Matrix GenericConstraint::eval_jacobian(const Vector& q) const {
  if (q.size() != dim) throw DimensionMismatch("constraint evaluated at a point of the wrong dimension");
  if (jacobian) return jacobian(q);
  Matrix jac(count, dim);
  Vector probe = q;
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double saved = probe(j);
    probe(j) = saved + fd_step;
    const Vector up = g(probe);
    probe(j) = saved - fd_step;
    const Vector down = g(probe);
    probe(j) = saved;
    jac.col(j) = (up - down) / (2.0 * fd_step);
  }
  return jac;
}

GenericConstraint GenericConstraint::sphere(Eigen::Index dim, double r) {
  GenericConstraint c;
  c.dim = dim;
  c.count = 1;
  c.g = [r](const Vector& q) { return Vector::Constant(1, q.squaredNorm() - r * r); };
  c.jacobian = [](const Vector& q) { return Matrix(2.0 * q.transpose()); };
  return c;
}

GenericConstraint GenericConstraint::none(Eigen::Index dim) {
  GenericConstraint c;
  c.dim = dim;
  c.count = 0;
  c.g = [](const Vector&) { return Vector(0); };
  c.jacobian = [dim](const Vector&) { return Matrix(0, dim); };
  return c;
}

Matrix numeric_projection(const GenericConstraint& c, const Vector& q) {
  Matrix identity = Matrix::Identity(c.dim, c.dim);
  if (c.count == 0) return identity;
  const Matrix jac = c.eval_jacobian(q);
  // One eigendecomposition of G G^T serves the rank check and the solve:
  // G^T (G G^T)^{-1} G = W^T diag(1 / lambda) W with W = V^T G.
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(jac * jac.transpose());
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > 1.0e-8))
    throw RankDeficient(fmt::format("constraint Jacobian is rank deficient (min eig of G G^T = {})", smallest));
  const Matrix w = eig.eigenvectors().transpose() * jac;
  identity.noalias() -= w.transpose() * eig.eigenvalues().cwiseInverse().asDiagonal() * w;
  return identity;
}

namespace {

Vector mean_curvature_at(const GenericConstraint& c, const Vector& q, const Matrix& pi, double fd_step) {
  const Eigen::Index d = c.dim;
  Vector h = Vector::Zero(d);
  Vector probe = q;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double saved = probe(j);
    probe(j) = saved + fd_step;
    Matrix dpi = numeric_projection(c, probe);
    probe(j) = saved - fd_step;
    dpi -= numeric_projection(c, probe);
    probe(j) = saved;
    // H_i += sum_k Pi_jk d_j Pi_ik
    h.noalias() += dpi * pi.row(j).transpose();
  }
  return h / (2.0 * fd_step);
}

}  // namespace

Vector mean_curvature(const GenericConstraint& c, const Vector& q, double fd_step) {
  return mean_curvature_at(c, q, numeric_projection(c, q), fd_step);
}

Vector underlying_sde_step(const GenericConstraint& c, const Vector& q, const Vector& grad, double h,
                           double tau, Rng& rng) {
  if (grad.size() != q.size()) throw DimensionMismatch("underlying SDE: gradient size differs");
  const Matrix pi = numeric_projection(c, q);
  Vector next = q - h * (pi * grad);
  if (tau > 0.0) {
    next.noalias() += std::sqrt(2.0 * tau * h) * (pi * standard_normal_vector(q.size(), rng));
    next.noalias() += tau * h * mean_curvature_at(c, q, pi, 1.0e-5);
  }
  return next;
}

double time_average(std::span<const double> series) {
  if (series.empty()) throw Error("time average of an empty trajectory");
  double sum = 0.0;
  for (double x : series) sum += x;
  return sum / static_cast<double>(series.size());
}

double time_average(const std::function<double(const Vector&)>& observable,
                    const std::vector<Vector>& trajectory) {
  std::vector<double> values;
  values.reserve(trajectory.size());
  for (const auto& q : trajectory) values.push_back(observable(q));
  return time_average(values);
}

double batch_means_variance(std::span<const double> series, std::size_t n_batches) {
  if (n_batches < 2) throw Error("batch means needs at least two batches");
  const std::size_t block = series.size() / n_batches;
  if (block == 0)
    throw Error(fmt::format("too few samples ({}) for {} batches", series.size(), n_batches));
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b)
    means[b] = time_average(series.subspan(b * block, block));
  const double grand = time_average(means);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return static_cast<double>(block) * ss / static_cast<double>(n_batches - 1);
}

Matrix haar_stiefel_sample(Eigen::Index r, Eigen::Index s, Rng& rng) {
  return orthonormalize_columns(standard_normal_matrix(r, s, rng));
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("KS distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double worst = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    worst = std::max(worst, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return worst;
}

}  // namespace cola
