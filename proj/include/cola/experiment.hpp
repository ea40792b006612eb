#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cola/config.hpp"

namespace cola {

/// One row of a per-seed metrics file.
struct RunRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double max_constraint_residual = 0.0;
  double wall_seconds = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  bool failed = false;
  std::string error;
};

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Generates or reads the train/test sets described by the config.
LoadedData load_data(const DataConfig& cfg, int expected_inputs);

/// Minibatch steps per epoch: ceil(n_train / batch size).
std::size_t steps_per_epoch(std::size_t n_train, std::size_t batch_size);

/// Trains one seed. The seed drives three independent streams (parameter
/// init, minibatch selection, integrator noise), so runs that differ only in
/// tau share their initialization and batch sequence. Library errors are
/// caught and reported through SeedResult::failed.
SeedResult train_seed(const ExperimentConfig& cfg, const LoadedData& data, std::uint64_t seed,
                      const std::function<void(const RunRecord&)>& on_epoch = {});

struct TrainOutput {
  std::vector<SeedResult> seeds;
  std::filesystem::path aggregate_csv;
  std::filesystem::path manifest;
};

/// Trains every seed (in parallel up to cfg.run.threads) and writes
/// seed_<s>.csv, aggregate.csv and manifest.json into out_dir.
TrainOutput run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

inline constexpr const char* kRecordHeader =
    "epoch,train_loss,test_loss,test_acc,max_constraint_residual,wall_seconds";

std::string format_records_csv(const std::vector<RunRecord>& records);
/// Mean and sample standard deviation per epoch over the seeds that finished.
std::string format_aggregate_csv(const std::vector<SeedResult>& seeds);
/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// ---- sampling ---------------------------------------------------------------

/// Recorded series of a sampling run, chains concatenated in order.
struct SampleTrace {
  std::map<std::string, std::vector<double>> series;
  /// Angle atan2(theta, xi) of every circle component (circle family) or
  /// Q_11 (orthogonal family) at every recorded state.
  std::vector<double> histogram_values;
  /// Time average of Q_ij^2 per entry (orthogonal family only).
  Matrix entry_sq_mean;
  double max_residual = 0.0;
  std::size_t recorded = 0;
};

SampleTrace sample_trajectories(const SampleConfig& cfg);

/// Observable means, batch-means variances and histogram bins.
nlohmann::json run_sample(const SampleConfig& cfg);

// ---- verification -----------------------------------------------------------

struct VerifyCheck {
  std::string check_id;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Runs the invariant suite; a fault only alters the steps it names.
std::vector<VerifyCheck> run_verify(Fault fault = Fault::none);
nlohmann::json to_json(const std::vector<VerifyCheck>& checks);

// ---- gradient check / data export ------------------------------------------

nlohmann::json run_gradcheck(const GradcheckConfig& cfg);

/// Writes train.csv and test.csv (columns x, y, label) into out_dir.
void spiral_gen(const SpiralSpec& spec, const std::filesystem::path& out_dir);

}  // namespace cola
