#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cola/data.hpp"
#include "cola/integrators.hpp"
#include "cola/model.hpp"

namespace cola {

/// How the layout section was written: either one assignment for all hidden
/// weights or an explicit list with one entry per weight matrix.
struct LayoutConfig {
  LayerAssignment hidden;
  /// Orthonormal initialization of every unconstrained weight.
  bool orthogonal_init = false;
  std::vector<LayerAssignment> layers;

  ParamLayout resolve(const MlpSpec& spec) const;
};

enum class DataSource { spiral, idx, csv };

struct DataConfig {
  DataSource source = DataSource::spiral;
  SpiralSpec spiral;

  // idx: images/labels pairs; csv: one file per split.
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  std::string label_column = "label";

  /// When no test files are given, the train file is split with this many
  /// training rows (seeded by split_seed).
  std::optional<std::size_t> n_train;
  std::uint64_t split_seed = 0;

  /// A positive batch_count takes precedence over batch_fraction.
  double batch_fraction = 0.05;
  std::size_t batch_count = 0;

  BatchSize batch_size() const;
};

struct RunConfig {
  int epochs = 1;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output = "runs";
  /// 0 means one thread per seed up to the hardware concurrency.
  int threads = 0;
};

struct ExperimentConfig {
  MlpSpec model;
  LayoutConfig layout;
  IntegratorConfig integrator;
  DataConfig data;
  RunConfig run;

  /// Cross-field checks (model, layout and integrator consistency).
  void validate() const;
};

enum class SampleFamily { circle, orthogonal };
enum class Potential { zero, quadratic };

struct SampleConfig {
  SampleFamily family = SampleFamily::circle;
  Eigen::Index count = 1;  ///< circles in the group
  double radius = 1.0;
  Eigen::Index rows = 8;
  Eigen::Index cols = 4;
  Potential potential = Potential::zero;
  double stiffness = 1.0;
  IntegratorConfig integrator;
  std::size_t steps = 1000;
  std::size_t burn_in = 0;
  std::size_t record_every = 1;
  std::size_t chains = 1;
  std::size_t batches = 20;
  std::size_t bins = 36;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GradcheckConfig {
  MlpSpec model;
  std::size_t fixtures = 20;
  std::size_t batch = 8;
  double eps = 1.0e-5;
  double kink_margin = 1.0e-4;
  double tolerance = 1.0e-6;
  std::uint64_t seed = 0;
};

/// YAML loaders. Unknown keys, wrong types and out-of-range values raise
/// ConfigError naming the field and its line. Relative data paths are taken
/// relative to the config file.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
SampleConfig load_sample_config(const std::filesystem::path& path);
GradcheckConfig load_gradcheck_config(const std::filesystem::path& path);
SpiralSpec load_spiral_config(const std::filesystem::path& path);

ExperimentConfig parse_experiment_config(const std::string& yaml, const std::filesystem::path& base_dir);
SampleConfig parse_sample_config(const std::string& yaml);
GradcheckConfig parse_gradcheck_config(const std::string& yaml);

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const SampleConfig& cfg);
nlohmann::json to_json(const GradcheckConfig& cfg);
nlohmann::json to_json(const IntegratorConfig& cfg);
nlohmann::json to_json(const MlpSpec& spec);

/// Version string and commit recorded at configure time.
std::string code_version();

}  // namespace cola
