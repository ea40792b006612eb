#include "cola/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include <fmt/format.h>

#include "cola/diagnostics.hpp"
#include "cola/error.hpp"

namespace cola {

namespace {

// Sub-stream ids of a seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

void check_inputs(const Dataset& ds, int expected_inputs, const char* which) {
  if (ds.inputs.cols() != expected_inputs)
    throw ConfigError(fmt::format("{} data has {} features but model.widths[0] is {}", which,
                                  ds.inputs.cols(), expected_inputs));
}

std::string format_real(double x) { return fmt::format("{:.17g}", x); }

}  // namespace

LoadedData load_data(const DataConfig& cfg, int expected_inputs) {
  LoadedData out;
  switch (cfg.source) {
    case DataSource::spiral: {
      auto [train, test] = spiral_generate(cfg.spiral);
      out = {std::move(train), std::move(test)};
      break;
    }
    case DataSource::idx:
    case DataSource::csv: {
      const bool idx = cfg.source == DataSource::idx;
      Dataset train = idx ? load_idx(cfg.train_images, cfg.train_labels)
                          : load_csv(cfg.train_csv, CsvSchema{cfg.label_column});
      if (cfg.n_train) {
        if (*cfg.n_train == 0 || *cfg.n_train >= static_cast<std::size_t>(train.size()))
          throw DataError(fmt::format("n_train = {} must lie in [1, {})", *cfg.n_train, train.size()));
        Rng split(cfg.split_seed);
        auto [a, b] = train_test_split(train, *cfg.n_train, split);
        out = {std::move(a), std::move(b)};
      } else {
        Dataset test = idx ? load_idx(cfg.test_images, cfg.test_labels)
                           : load_csv(cfg.test_csv, CsvSchema{cfg.label_column});
        test.class_count = train.class_count = std::max(train.class_count, test.class_count);
        out = {std::move(train), std::move(test)};
      }
      break;
    }
  }
  check_inputs(out.train, expected_inputs, "training");
  check_inputs(out.test, expected_inputs, "test");
  out.train.validate();
  out.test.validate();
  return out;
}

std::size_t steps_per_epoch(std::size_t n_train, std::size_t batch_size) {
  if (batch_size == 0) throw DataError("batch size must be positive");
  return (n_train + batch_size - 1) / batch_size;
}

SeedResult train_seed(const ExperimentConfig& cfg, const LoadedData& data, std::uint64_t seed,
                      const std::function<void(const RunRecord&)>& on_epoch) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  SeedResult result;
  result.seed = seed;
  try {
    const ParamLayout layout = cfg.layout.resolve(cfg.model);
    const Rng master(seed);
    Rng init_rng = master.substream(kInitStream);
    Rng batch_rng = master.substream(kBatchStream);
    Rng noise_rng = master.substream(kNoiseStream);

    PhasePoint phase;
    phase.position = init_params(cfg.model, layout, init_rng);
    const GradientOracle oracle = make_gradient_oracle(cfg.model, layout);
    const Integrator integrator(cfg.integrator);
    const std::size_t n_train = static_cast<std::size_t>(data.train.size());
    const std::size_t batch_size = cfg.data.batch_size().resolve(n_train);
    const std::size_t steps = steps_per_epoch(n_train, batch_size);

    if (cfg.integrator.scheme == Scheme::ud_oba) {
      const Batch first = minibatch_sample(data.train, cfg.data.batch_size(), batch_rng);
      integrator.initialize(phase, oracle(phase.position, first));
    } else {
      integrator.initialize(phase, GradientStore{});
    }

    for (int epoch = 1; epoch <= cfg.run.epochs; ++epoch) {
      for (std::size_t s = 0; s < steps; ++s) {
        const Batch batch = minibatch_sample(data.train, cfg.data.batch_size(), batch_rng);
        integrator.step(phase, oracle, batch, noise_rng);
      }
      const MlpParams params = from_store(cfg.model, layout, phase.position);
      const Matrix train_logits = mlp_forward(cfg.model, params, data.train.inputs);
      const Matrix test_logits = mlp_forward(cfg.model, params, data.test.inputs);
      RunRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_eval(train_logits, data.train.labels, cfg.model.loss);
      rec.test_loss = loss_eval(test_logits, data.test.labels, cfg.model.loss);
      rec.test_acc = accuracy_eval(test_logits, data.test.labels, cfg.model.loss);
      rec.max_constraint_residual = position_residual(phase.position).max_abs;
      rec.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
      result.records.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
  } catch (const Error& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

std::string format_records_csv(const std::vector<RunRecord>& records) {
  std::string out = std::string(kRecordHeader) + "\n";
  for (const auto& r : records)
    out += fmt::format("{},{},{},{},{},{}\n", r.epoch, format_real(r.train_loss), format_real(r.test_loss),
                       format_real(r.test_acc), format_real(r.max_constraint_residual),
                       format_real(r.wall_seconds));
  return out;
}

std::string format_aggregate_csv(const std::vector<SeedResult>& seeds) {
  std::string out =
      "epoch,seeds,train_loss_mean,train_loss_std,test_loss_mean,test_loss_std,test_acc_mean,test_acc_std,"
      "max_constraint_residual_mean,max_constraint_residual_std\n";
  std::vector<const SeedResult*> done;
  for (const auto& s : seeds)
    if (!s.failed) done.push_back(&s);
  if (done.empty()) return out;
  const std::size_t epochs = done.front()->records.size();
  const double n = static_cast<double>(done.size());
  auto stats = [&](std::size_t e, double RunRecord::*field) {
    double mean = 0.0;
    for (const auto* s : done) mean += s->records[e].*field;
    mean /= n;
    double ss = 0.0;
    for (const auto* s : done) ss += (s->records[e].*field - mean) * (s->records[e].*field - mean);
    const double sd = done.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return fmt::format("{},{}", format_real(mean), format_real(sd));
  };
  for (std::size_t e = 0; e < epochs; ++e)
    out += fmt::format("{},{},{},{},{},{}\n", done.front()->records[e].epoch, done.size(),
                       stats(e, &RunRecord::train_loss), stats(e, &RunRecord::test_loss),
                       stats(e, &RunRecord::test_acc), stats(e, &RunRecord::max_constraint_residual));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << contents;
    out.flush();
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

TrainOutput run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const LoadedData data = load_data(cfg.data, cfg.model.widths.front());
  std::filesystem::create_directories(out_dir);

  const std::size_t n = cfg.run.seeds.size();
  std::size_t workers = cfg.run.threads > 0 ? static_cast<std::size_t>(cfg.run.threads)
                                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);

  TrainOutput out;
  out.seeds.resize(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      out.seeds[i] = train_seed(cfg, data, cfg.run.seeds[i]);
      write_file_atomic(out_dir / fmt::format("seed_{}.csv", cfg.run.seeds[i]),
                        format_records_csv(out.seeds[i].records));
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  out.aggregate_csv = out_dir / "aggregate.csv";
  write_file_atomic(out.aggregate_csv, format_aggregate_csv(out.seeds));

  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : out.seeds) {
    nlohmann::json entry = {{"seed", s.seed},
                            {"csv", fmt::format("seed_{}.csv", s.seed)},
                            {"status", s.failed ? "failed" : "ok"},
                            {"epochs_completed", s.records.size()}};
    if (s.failed) entry["error"] = s.error;
    seeds.push_back(entry);
  }
  const nlohmann::json manifest = {{"code_version", code_version()},
                                   {"command", "train"},
                                   {"config", to_json(cfg)},
                                   {"steps_per_epoch",
                                    steps_per_epoch(static_cast<std::size_t>(data.train.size()),
                                                    cfg.data.batch_size().resolve(data.train.size()))},
                                   {"seeds", seeds},
                                   {"aggregate", "aggregate.csv"}};
  out.manifest = out_dir / "manifest.json";
  write_file_atomic(out.manifest, manifest.dump(2) + "\n");
  return out;
}

// ---- sampling ---------------------------------------------------------------

namespace {

GradientOracle potential_oracle(const SampleConfig& cfg) {
  const double k = cfg.potential == Potential::quadratic ? cfg.stiffness : 0.0;
  return [k](const ParamStore& p, const Batch&) {
    GradientStore g;
    for (const auto& c : p.circles) g.circles.push_back(k * c.theta);
    for (const auto& o : p.orthos) g.orthos.push_back(k * (o.q - Matrix::Identity(o.q.rows(), o.q.cols())));
    return g;
  };
}

PhasePoint sample_start(const SampleConfig& cfg) {
  PhasePoint phase;
  if (cfg.family == SampleFamily::circle) {
    CircleGroup g;
    g.theta = Vector::Zero(cfg.count);
    g.radii = Vector::Constant(cfg.count, cfg.radius);
    g.xi = g.radii;
    phase.position.circles.push_back(std::move(g));
  } else {
    phase.position.orthos.push_back({Matrix::Identity(cfg.rows, cfg.cols), Orientation::as_is});
  }
  return phase;
}

double kinetic(const MomentumStore& m) {
  double e = 0.0;
  for (const auto& c : m.circles) e += c.p_c.squaredNorm() + c.p_xi.squaredNorm();
  for (const auto& p : m.orthos) e += p.squaredNorm();
  return e;
}

}  // namespace

SampleTrace sample_trajectories(const SampleConfig& cfg) {
  cfg.validate();
  const GradientOracle oracle = potential_oracle(cfg);
  const Integrator integrator(cfg.integrator);
  const bool underdamped = cfg.integrator.scheme == Scheme::ud_oba;
  const bool circle = cfg.family == SampleFamily::circle;
  const Batch no_data;
  const Rng master(cfg.seed);

  SampleTrace trace;
  auto& theta = trace.series[circle ? "theta" : "q11"];
  auto& square = trace.series[circle ? "theta_sq" : "q11_sq"];
  std::vector<double>* kin = underdamped ? &trace.series["kinetic"] : nullptr;
  if (!circle) trace.entry_sq_mean = Matrix::Zero(cfg.rows, cfg.cols);

  for (std::size_t c = 0; c < cfg.chains; ++c) {
    Rng rng = master.substream(c + 1);
    PhasePoint phase = sample_start(cfg);
    integrator.initialize(phase, oracle(phase.position, no_data));
    for (std::size_t s = 0; s < cfg.burn_in; ++s) integrator.step(phase, oracle, no_data, rng);
    for (std::size_t s = 1; s <= cfg.steps; ++s) {
      integrator.step(phase, oracle, no_data, rng);
      if (s % cfg.record_every != 0) continue;
      ++trace.recorded;
      trace.max_residual = std::max(trace.max_residual, position_residual(phase.position).max_abs);
      if (kin) kin->push_back(kinetic(phase.momentum));
      if (circle) {
        const CircleGroup& g = phase.position.circles.front();
        theta.push_back(g.theta.mean());
        square.push_back(g.theta.squaredNorm() / static_cast<double>(g.size()));
        for (Eigen::Index i = 0; i < g.size(); ++i) trace.histogram_values.push_back(std::atan2(g.theta(i), g.xi(i)));
      } else {
        const Matrix& q = phase.position.orthos.front().q;
        theta.push_back(q(0, 0));
        square.push_back(q(0, 0) * q(0, 0));
        trace.entry_sq_mean += q.cwiseAbs2();
        trace.histogram_values.push_back(q(0, 0));
      }
    }
  }
  if (!circle) trace.entry_sq_mean /= static_cast<double>(trace.recorded);
  return trace;
}

nlohmann::json run_sample(const SampleConfig& cfg) {
  const SampleTrace trace = sample_trajectories(cfg);
  nlohmann::json observables = nlohmann::json::object();
  for (const auto& [name, series] : trace.series) {
    const double mean = time_average(series);
    const double bmv = batch_means_variance(series, cfg.batches);
    observables[name] = {{"mean", mean},
                         {"batch_means_variance", bmv},
                         {"standard_error", std::sqrt(bmv / static_cast<double>(series.size()))}};
  }

  const bool circle = cfg.family == SampleFamily::circle;
  const double lo = circle ? -std::numbers::pi : -1.0;
  const double hi = circle ? std::numbers::pi : 1.0;
  std::vector<double> edges(cfg.bins + 1);
  for (std::size_t b = 0; b <= cfg.bins; ++b)
    edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(cfg.bins);
  std::vector<std::size_t> counts(cfg.bins, 0);
  for (double v : trace.histogram_values) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(cfg.bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(cfg.bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }

  nlohmann::json out = {{"code_version", code_version()},
                        {"command", "sample"},
                        {"config", to_json(cfg)},
                        {"recorded", trace.recorded},
                        {"max_constraint_residual", trace.max_residual},
                        {"observables", observables},
                        {"histogram",
                         {{"observable", circle ? "angle" : "q11"}, {"edges", edges}, {"counts", counts}}}};
  if (!circle) {
    out["entry_q_sq"] = {{"min", trace.entry_sq_mean.minCoeff()},
                         {"max", trace.entry_sq_mean.maxCoeff()},
                         {"mean", trace.entry_sq_mean.mean()},
                         {"target", 1.0 / static_cast<double>(cfg.rows)}};
  }
  return out;
}

// ---- gradient check -----------------------------------------------------------

nlohmann::json run_gradcheck(const GradcheckConfig& cfg) {
  cfg.model.validate();
  const ParamLayout layout = ParamLayout::unconstrained(cfg.model);
  const Rng master(cfg.seed);
  const int n_in = cfg.model.widths.front();
  const int classes = cfg.model.loss == LossKind::bce_with_logits ? 2 : cfg.model.widths.back();

  std::map<std::string, double> worst;
  std::vector<std::string> order;
  nlohmann::json fixtures = nlohmann::json::array();
  double overall = 0.0;
  for (std::size_t f = 0; f < cfg.fixtures; ++f) {
    Rng rng = master.substream(f + 1);
    const MlpParams params = from_store(cfg.model, layout, init_params(cfg.model, layout, rng));
    Batch batch;
    batch.inputs = standard_normal_matrix(static_cast<Eigen::Index>(cfg.batch), n_in, rng);
    for (std::size_t i = 0; i < cfg.batch; ++i)
      batch.labels.push_back(static_cast<int>(rng.index_below(static_cast<std::size_t>(classes))));
    const Batch kept = drop_near_kink_samples(cfg.model, params, batch, cfg.kink_margin);
    const auto entries = gradient_check(cfg.model, params, kept, mlp_backward, cfg.eps);
    double fixture_max = 0.0;
    for (const auto& e : entries) {
      if (!worst.count(e.block)) order.push_back(e.block);
      worst[e.block] = std::max(worst[e.block], e.max_rel_error);
      fixture_max = std::max(fixture_max, e.max_rel_error);
    }
    overall = std::max(overall, fixture_max);
    fixtures.push_back({{"fixture", f}, {"samples", kept.size()}, {"max_rel_error", fixture_max}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& block : order)
    layers.push_back({{"block", block}, {"max_rel_error", worst[block]}, {"pass", worst[block] <= cfg.tolerance}});
  return {{"code_version", code_version()},
          {"command", "gradcheck"},
          {"config", to_json(cfg)},
          {"layers", layers},
          {"fixtures", fixtures},
          {"max_rel_error", overall},
          {"tolerance", cfg.tolerance},
          {"pass", overall <= cfg.tolerance}};
}

void spiral_gen(const SpiralSpec& spec, const std::filesystem::path& out_dir) {
  const auto [train, test] = spiral_generate(spec);
  std::filesystem::create_directories(out_dir);
  write_csv(out_dir / "train.csv", train, {"x", "y"}, "label");
  write_csv(out_dir / "test.csv", test, {"x", "y"}, "label");
}

}  // namespace cola
