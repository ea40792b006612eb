#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cola/batch.hpp"
#include "cola/numerics.hpp"

namespace cola {

struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int class_count = 0;

  Eigen::Index size() const { return inputs.rows(); }
  /// Throws DataError on row/label mismatch or labels outside [0, class_count).
  void validate() const;
};

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);
Batch as_batch(const Dataset& ds);

// ---- spiral ---------------------------------------------------------------

/// Two interleaved spirals, x = 2 sqrt(t) cos(8 sqrt(t) pi + c pi) + sigma N(0,1)
/// (sin for y), class c in {0, 1}, t ~ U(0,1) per point.
struct SpiralSpec {
  std::size_t n_train = 500;
  std::size_t n_test = 1000;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Noise-free spiral point for parameter t and class c.
Eigen::Vector2d spiral_point(double t, int cls);

/// Points alternate between classes, so |n0 - n1| <= 1. Per point the draws
/// are t, then the x noise, then the y noise; the train set is drawn first.
std::pair<Dataset, Dataset> spiral_generate(const SpiralSpec& spec);

// ---- batching -------------------------------------------------------------

/// Either a fraction of the dataset or an absolute count.
class BatchSize {
 public:
  static BatchSize fraction(double f);
  static BatchSize count(std::size_t n);

  /// Number of samples for a dataset of n rows (fractions round to nearest,
  /// minimum 1). Throws DataError if the result exceeds n or is zero.
  std::size_t resolve(std::size_t n) const;

 private:
  BatchSize(double fraction, std::size_t count) : fraction_(fraction), count_(count) {}
  double fraction_;
  std::size_t count_;
};

/// k distinct indices from [0, n) by a partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

Batch minibatch_sample(const Dataset& ds, BatchSize size, Rng& rng);

/// Seeded shuffle; the first n_train shuffled rows form the train set.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, std::size_t n_train, Rng& rng);

// ---- files ----------------------------------------------------------------

/// Raw contents of an unsigned-byte IDX file.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

/// Magic: two zero bytes, type byte 0x08 (unsigned byte), dimension count;
/// then one big-endian uint32 per dimension, then the values in row-major order.
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Image file (n x d1 x ...) and label file (n). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct CsvSchema {
  std::string label_column = "label";
};

/// Comma-separated, header row first; every column except the label column is
/// a numeric feature, in header order.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::vector<std::string>& feature_names, const std::string& label_column);

}  // namespace cola
