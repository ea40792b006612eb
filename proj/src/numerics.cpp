#include "cola/numerics.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::index_below(std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Largest multiple of bound that fits; values above it are rejected.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

Rng Rng::substream(std::uint64_t stream_id) const {
  return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
}

Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
  return out;
}

Vector standard_normal_vector(Eigen::Index size, Rng& rng) {
  Vector out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = rng.normal();
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionMismatch(fmt::format("matmul: {}x{} times {}x{}", a.rows(), a.cols(),
                                        b.rows(), b.cols()));
  return a * b;
}

Matrix transpose(const Matrix& a) { return a.transpose(); }

double frobenius_norm(const Matrix& a) { return a.norm(); }

Matrix orthonormalize_columns(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() == 0)
    throw RankDeficient(
        fmt::format("orthonormalize_columns: need rows >= cols >= 1, got {}x{}", a.rows(), a.cols()));
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix& packed = qr.matrixQR();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1.0e-300);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double diag = packed(j, j);
    if (std::abs(diag) <= 1.0e-12 * scale)
      throw RankDeficient(fmt::format("orthonormalize_columns: column {} is linearly dependent", j));
    if (diag < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

double orthonormality_defect(const Matrix& a) {
  return (a.transpose() * a - Matrix::Identity(a.cols(), a.cols())).norm();
}

}  // namespace cola
