#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace cola {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seeded random source.
///
/// Uniform bits come from std::mt19937_64, whose output sequence is fixed by
/// the C++ standard. Normals use the basic Box-Muller transform on two 53-bit
/// uniforms; each transform yields a pair, the second value is cached and
/// returned by the next call. None of the std::*_distribution adaptors are
/// used because their algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  /// Uniform integer in [0, n) by rejection sampling; n must be positive.
  std::size_t index_below(std::size_t n);

  /// Independent generator for a named sub-stream (splitmix64 of seed and id).
  Rng substream(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// iid N(0,1) entries, drawn in row-major order.
Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Vector standard_normal_vector(Eigen::Index size, Rng& rng);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double frobenius_norm(const Matrix& a);

/// Thin Householder QR factor with the signs fixed so that diag(R) >= 0.
/// Throws RankDeficient when rows < cols or a diagonal entry of R vanishes.
Matrix orthonormalize_columns(const Matrix& a);

/// ||A^T A - I||_F
double orthonormality_defect(const Matrix& a);

}  // namespace cola
