// Command-line front end: train, sample, verify, gradcheck, spiral-gen.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cola/config.hpp"
#include "cola/error.hpp"
#include "cola/experiment.hpp"

namespace fs = std::filesystem;

namespace {

void emit_json(const nlohmann::json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    cola::write_file_atomic(out, text);
    std::cerr << "wrote " << out << "\n";
  }
}

cola::Fault parse_fault(const std::string& name) {
  if (name.empty() || name == "none") return cola::Fault::none;
  if (name == "skip-momentum-projection") return cola::Fault::skip_momentum_projection;
  throw cola::ConfigError(fmt::format("unknown fault '{}' (none, skip-momentum-projection)", name));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Langevin training and diagnostics"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  std::string fault;

  auto* train = app.add_subcommand("train", "Train every seed of an experiment config");
  train->add_option("--config", config, "Experiment config (YAML)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed-override", seed_override, "Run only this seed");
  train->add_option("--out", out, "Output directory (default: run.output from the config)");

  auto* sample = app.add_subcommand("sample", "Run a sampler and report ergodic averages");
  sample->add_option("--config", config, "Sampling config (YAML)")->required()->check(CLI::ExistingFile);
  sample->add_option("--seed-override", seed_override, "Replace the sampling seed");
  sample->add_option("--out", out, "Output JSON file (default: stdout)");

  auto* verify = app.add_subcommand("verify", "Run the invariant suite");
  verify->add_option("--out", out, "Output JSON file (default: stdout)");
  verify->add_option("--inject-fault", fault, "Negative control: skip-momentum-projection");

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare backprop with finite differences");
  gradcheck->add_option("--config", config, "Gradcheck config (YAML)")->required()->check(CLI::ExistingFile);
  gradcheck->add_option("--seed-override", seed_override, "Replace the fixture seed");
  gradcheck->add_option("--out", out, "Output JSON file (default: stdout)");

  auto* spiral = app.add_subcommand("spiral-gen", "Write the spiral train/test sets as CSV");
  spiral->add_option("--config", config, "Config with a 'spiral' section")->check(CLI::ExistingFile);
  spiral->add_option("--seed-override", seed_override, "Replace the data seed");
  spiral->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      cola::ExperimentConfig cfg = cola::load_experiment_config(config);
      if (seed_override) cfg.run.seeds = {*seed_override};
      const fs::path dir = out.empty() ? cfg.run.output : fs::path(out);
      const auto result = cola::run_train(cfg, dir);
      int failed = 0;
      for (const auto& s : result.seeds) {
        if (s.failed) {
          ++failed;
          std::cerr << fmt::format("seed {} failed: {}\n", s.seed, s.error);
        } else if (!s.records.empty()) {
          const auto& last = s.records.back();
          std::cerr << fmt::format("seed {}: epoch {} test_acc {:.4f} test_loss {:.4f}\n", s.seed, last.epoch,
                                   last.test_acc, last.test_loss);
        }
      }
      std::cerr << "wrote " << result.aggregate_csv.string() << "\n";
      return failed == 0 ? 0 : 3;
    }
    if (*sample) {
      cola::SampleConfig cfg = cola::load_sample_config(config);
      if (seed_override) cfg.seed = *seed_override;
      emit_json(cola::run_sample(cfg), out);
      return 0;
    }
    if (*verify) {
      const auto checks = cola::run_verify(parse_fault(fault));
      const auto report = cola::to_json(checks);
      emit_json(report, out);
      for (const auto& c : checks)
        std::cerr << fmt::format("{} {} measured={:.3e} tolerance={:.3e}\n", c.pass ? "PASS" : "FAIL", c.check_id,
                                 c.measured, c.tolerance);
      return report["all_pass"].get<bool>() ? 0 : 1;
    }
    if (*gradcheck) {
      cola::GradcheckConfig cfg = cola::load_gradcheck_config(config);
      if (seed_override) cfg.seed = *seed_override;
      const auto report = cola::run_gradcheck(cfg);
      emit_json(report, out);
      return report["pass"].get<bool>() ? 0 : 1;
    }
    if (*spiral) {
      cola::SpiralSpec spec = config.empty() ? cola::SpiralSpec{} : cola::load_spiral_config(config);
      if (seed_override) spec.seed = *seed_override;
      cola::spiral_gen(spec, out);
      std::cerr << "wrote " << (fs::path(out) / "train.csv").string() << " and test.csv\n";
      return 0;
    }
  } catch (const cola::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
