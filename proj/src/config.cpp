#include "cola/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "cola/error.hpp"

#ifndef COLA_VERSION
#define COLA_VERSION "unknown"
#endif
#ifndef COLA_COMMIT
#define COLA_COMMIT "unknown"
#endif

namespace cola {

namespace {

std::string line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.is_null()) return "";
  return fmt::format(" (line {})", mark.line + 1);
}

/// A mapping whose keys must all be consumed; leftovers are reported as
/// unknown keys.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw ConfigError(fmt::format("'{}' must be a mapping{}", path_, line_of(node_)));
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    if (!node_ || !node_.IsMap()) return false;
    const YAML::Node n = at(key);
    return n && !n.IsNull();
  }

  YAML::Node raw(const std::string& key) {
    if (!has(key)) return YAML::Node();
    return at(key);
  }

  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(at(key), field(key));
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(fmt::format("missing required field '{}'{}", field(key), line_of(node_)));
    return convert<T>(at(key), field(key));
  }

  template <class T>
  std::vector<T> list(const std::string& key) {
    const YAML::Node n = raw(key);
    if (!n || n.IsNull()) return {};
    if (n.IsScalar()) return {convert<T>(n, field(key))};
    if (!n.IsSequence()) throw ConfigError(fmt::format("'{}' must be a list{}", field(key), line_of(n)));
    std::vector<T> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(convert<T>(n[i], fmt::format("{}[{}]", field(key), i)));
    return out;
  }

  /// Throws on any key that was never looked up.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key))
        throw ConfigError(fmt::format("unknown key '{}'{}", field(key), line_of(kv.first)));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const YAML::Node& node() const { return node_; }

 private:
  YAML::Node at(const std::string& key) const {
    const YAML::Node& n = node_;
    return n[key];
  }

  template <class T>
  static T convert(const YAML::Node& n, const std::string& name) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("field '{}' has an invalid value{}", name, line_of(n)));
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

YAML::Node parse_yaml(const std::string& text) {
  try {
    YAML::Node root = YAML::Load(text);
    if (root.IsNull()) return YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("config root must be a mapping");
    return root;
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("config is not valid YAML: {}", e.what()));
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Wraps a ConfigError raised by a value parser with the field location.
template <class F>
auto located(Section& s, const std::string& key, F&& parse) {
  const YAML::Node n = s.raw(key);
  try {
    return parse(n.as<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("field '{}': {}{}", s.field(key), e.what(), line_of(n)));
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("field '{}' has an invalid value{}", s.field(key), line_of(n)));
  }
}

LayerConstraint parse_kind(std::string_view name) {
  if (name == "none" || name == "unconstrained") return LayerConstraint::unconstrained;
  if (name == "circle") return LayerConstraint::circle;
  if (name == "orthogonal" || name == "ortho") return LayerConstraint::orthogonal;
  throw ConfigError(fmt::format("unknown constraint kind '{}' (none, circle, orthogonal)", name));
}

std::string_view to_string(LayerConstraint k) {
  switch (k) {
    case LayerConstraint::unconstrained: return "none";
    case LayerConstraint::circle: return "circle";
    case LayerConstraint::orthogonal: return "orthogonal";
  }
  return "?";
}

MlpSpec parse_model(Section s) {
  MlpSpec spec;
  spec.widths = s.list<int>("widths");
  if (s.has("activation")) {
    located(s, "activation", [](const std::string& a) {
      if (a != "relu") throw ConfigError(fmt::format("unsupported activation '{}' (relu)", a));
      return 0;
    });
  }
  if (s.has("loss")) spec.loss = located(s, "loss", [](const std::string& v) { return parse_loss(v); });
  s.finish();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("model: {}{}", e.what(), line_of(s.node())));
  }
  return spec;
}

LayerAssignment parse_assignment(Section& s, const std::string& kind_key) {
  LayerAssignment a;
  if (s.has(kind_key)) a.kind = located(s, kind_key, [](const std::string& v) { return parse_kind(v); });
  a.radius = s.get<double>("radius", 1.0);
  if (!(a.radius > 0.0)) throw ConfigError(fmt::format("'{}' must be positive{}", s.field("radius"), line_of(s.node())));
  return a;
}

LayoutConfig parse_layout(Section s) {
  LayoutConfig out;
  out.hidden = parse_assignment(s, "hidden");
  out.orthogonal_init = s.get<bool>("orthogonal_init", false);
  const YAML::Node layers = s.raw("layers");
  if (layers && !layers.IsNull()) {
    if (!layers.IsSequence()) throw ConfigError(fmt::format("'layout.layers' must be a list{}", line_of(layers)));
    if (s.node()["hidden"]) throw ConfigError(fmt::format("layout: give either 'hidden' or 'layers'{}", line_of(layers)));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Section ls(layers[i], fmt::format("layout.layers[{}]", i));
      LayerAssignment a = parse_assignment(ls, "kind");
      a.orthogonal_init = ls.get<bool>("orthogonal_init", out.orthogonal_init);
      ls.finish();
      out.layers.push_back(a);
    }
  }
  s.finish();
  return out;
}

IntegratorConfig parse_integrator(Section s) {
  IntegratorConfig c;
  if (s.has("scheme")) c.scheme = located(s, "scheme", [](const std::string& v) { return parse_scheme(v); });
  c.h = s.get<double>("h", c.h);
  c.gamma = s.get<double>("gamma", c.gamma);
  c.tau = s.get<double>("tau", c.tau);
  c.k_max = s.get<int>("k_max", c.k_max);
  c.tol = s.get<double>("tol", c.tol);
  if (s.has("projection"))
    c.projection = located(s, "projection", [](const std::string& v) { return parse_projection(v); });
  if (s.has("order")) c.order = located(s, "order", [](const std::string& v) { return parse_order(v); });
  c.momentum = s.get<double>("momentum", c.momentum);
  s.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("integrator: {}{}", e.what(), line_of(s.node())));
  }
  return c;
}

std::filesystem::path data_path(Section& s, const std::string& key, const std::filesystem::path& base) {
  std::filesystem::path p = s.require<std::string>(key);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p))
    throw ConfigError(fmt::format("'{}' refers to a missing file '{}'{}", s.field(key), p.string(),
                                  line_of(s.node()[key])));
  return p;
}

SpiralSpec parse_spiral(Section s) {
  SpiralSpec sp;
  sp.n_train = s.get<std::size_t>("n_train", sp.n_train);
  sp.n_test = s.get<std::size_t>("n_test", sp.n_test);
  sp.noise_sigma = s.get<double>("noise", sp.noise_sigma);
  sp.seed = s.get<std::uint64_t>("seed", sp.seed);
  s.finish();
  try {
    sp.validate();
  } catch (const Error& e) {
    throw ConfigError(fmt::format("spiral: {}{}", e.what(), line_of(s.node())));
  }
  return sp;
}

void parse_split(Section& s, DataConfig& d, bool has_test) {
  if (s.has("n_train")) d.n_train = s.get<std::size_t>("n_train", 0);
  d.split_seed = s.get<std::uint64_t>("split_seed", 0);
  if (!has_test && !d.n_train)
    throw ConfigError(fmt::format("'{}' needs test files or n_train{}", s.field("n_train"), line_of(s.node())));
}

DataConfig parse_data(Section s, const std::filesystem::path& base) {
  DataConfig d;
  int sources = 0;
  if (s.has("spiral")) {
    ++sources;
    d.source = DataSource::spiral;
    d.spiral = parse_spiral(s.child("spiral"));
  }
  if (s.has("idx")) {
    ++sources;
    d.source = DataSource::idx;
    Section x = s.child("idx");
    d.train_images = data_path(x, "train_images", base);
    d.train_labels = data_path(x, "train_labels", base);
    const bool has_test = x.has("test_images") || x.has("test_labels");
    if (has_test) {
      d.test_images = data_path(x, "test_images", base);
      d.test_labels = data_path(x, "test_labels", base);
    }
    parse_split(x, d, has_test);
    x.finish();
  }
  if (s.has("csv")) {
    ++sources;
    d.source = DataSource::csv;
    Section x = s.child("csv");
    d.train_csv = data_path(x, "train", base);
    const bool has_test = x.has("test");
    if (has_test) d.test_csv = data_path(x, "test", base);
    d.label_column = x.get<std::string>("label_column", d.label_column);
    parse_split(x, d, has_test);
    x.finish();
  }
  if (sources > 1) throw ConfigError(fmt::format("data: give only one of spiral, idx, csv{}", line_of(s.node())));
  d.batch_fraction = s.get<double>("batch_fraction", d.batch_fraction);
  d.batch_count = s.get<std::size_t>("batch_size", 0);
  if (!(d.batch_fraction > 0.0 && d.batch_fraction <= 1.0))
    throw ConfigError(fmt::format("'data.batch_fraction' must lie in (0, 1]{}", line_of(s.node())));
  s.finish();
  return d;
}

RunConfig parse_run(Section s, const std::filesystem::path& base) {
  RunConfig r;
  r.epochs = s.get<int>("epochs", r.epochs);
  if (r.epochs < 1) throw ConfigError(fmt::format("'run.epochs' must be >= 1{}", line_of(s.node())));
  if (s.has("seeds")) r.seeds = s.list<std::uint64_t>("seeds");
  if (r.seeds.empty()) throw ConfigError(fmt::format("'run.seeds' must not be empty{}", line_of(s.node())));
  if (s.has("output")) {
    r.output = s.get<std::string>("output", "");
    if (r.output.is_relative() && !base.empty()) r.output = base / r.output;
  }
  r.threads = s.get<int>("threads", r.threads);
  if (r.threads < 0) throw ConfigError("'run.threads' must be >= 0");
  s.finish();
  return r;
}

std::filesystem::path parent_of(const std::filesystem::path& path) {
  const auto p = path.parent_path();
  return p.empty() ? std::filesystem::path(".") : p;
}

}  // namespace

// ---- layout / data helpers ----------------------------------------------

ParamLayout LayoutConfig::resolve(const MlpSpec& spec) const {
  ParamLayout layout;
  if (!layers.empty()) {
    layout.layers = layers;
  } else {
    layout = ParamLayout::hidden(spec, hidden);
    for (auto& a : layout.layers) a.orthogonal_init = orthogonal_init;
  }
  layout.validate(spec);
  return layout;
}

BatchSize DataConfig::batch_size() const {
  return batch_count > 0 ? BatchSize::count(batch_count) : BatchSize::fraction(batch_fraction);
}

void ExperimentConfig::validate() const {
  model.validate();
  const ParamLayout resolved = layout.resolve(model);
  integrator.validate();
  bool constrained = false;
  for (const auto& a : resolved.layers) constrained |= a.kind != LayerConstraint::unconstrained;
  if (constrained && (integrator.scheme == Scheme::baseline_em || integrator.scheme == Scheme::baseline_sgdm))
    throw ConfigError(fmt::format("scheme {} cannot train a constrained layout", to_string(integrator.scheme)));
  if (data.source == DataSource::spiral) {
    if (model.widths.front() != 2) throw ConfigError("the spiral data has 2 input features; set model.widths[0] = 2");
    if (model.loss == LossKind::softmax_cross_entropy && model.widths.back() != 2)
      throw ConfigError("the spiral data has 2 classes");
  }
  if (run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (run.epochs < 1) throw ConfigError("run.epochs must be >= 1");
}

void SampleConfig::validate() const {
  integrator.validate();
  if (integrator.scheme != Scheme::od && integrator.scheme != Scheme::ud_oba)
    throw ConfigError("sampling supports the od and ud_oba schemes");
  if (family == SampleFamily::circle && (count < 1 || !(radius > 0.0)))
    throw ConfigError("circle sampling needs count >= 1 and radius > 0");
  if (family == SampleFamily::orthogonal && (cols < 1 || rows < cols))
    throw ConfigError("orthogonal sampling needs rows >= cols >= 1");
  if (steps < 1 || record_every < 1 || chains < 1) throw ConfigError("steps, record_every and chains must be >= 1");
  const std::size_t recorded = chains * (steps / record_every);
  if (batches < 2 || recorded < batches)
    throw ConfigError(fmt::format("{} recorded states cannot fill {} batches (need batches >= 2)", recorded, batches));
  if (bins < 1) throw ConfigError("bins must be >= 1");
}

// ---- loaders --------------------------------------------------------------

ExperimentConfig parse_experiment_config(const std::string& yaml, const std::filesystem::path& base_dir) {
  Section root(parse_yaml(yaml), "");
  ExperimentConfig cfg;
  if (!root.has("model")) throw ConfigError("missing required section 'model'");
  cfg.model = parse_model(root.child("model"));
  cfg.layout = parse_layout(root.child("layout"));
  cfg.integrator = parse_integrator(root.child("integrator"));
  cfg.data = parse_data(root.child("data"), base_dir);
  cfg.run = parse_run(root.child("run"), base_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_text(path), parent_of(path));
}

SampleConfig parse_sample_config(const std::string& yaml) {
  Section root(parse_yaml(yaml), "");
  Section s = root.child("sample");
  SampleConfig c;
  if (s.has("family")) {
    c.family = located(s, "family", [](const std::string& v) {
      if (v == "circle") return SampleFamily::circle;
      if (v == "orthogonal" || v == "ortho") return SampleFamily::orthogonal;
      throw ConfigError(fmt::format("unknown family '{}' (circle, orthogonal)", v));
    });
  }
  c.count = s.get<Eigen::Index>("count", c.count);
  c.radius = s.get<double>("radius", c.radius);
  c.rows = s.get<Eigen::Index>("rows", c.rows);
  c.cols = s.get<Eigen::Index>("cols", c.cols);
  if (s.has("potential")) {
    c.potential = located(s, "potential", [](const std::string& v) {
      if (v == "zero") return Potential::zero;
      if (v == "quadratic") return Potential::quadratic;
      throw ConfigError(fmt::format("unknown potential '{}' (zero, quadratic)", v));
    });
  }
  c.stiffness = s.get<double>("stiffness", c.stiffness);
  c.steps = s.get<std::size_t>("steps", c.steps);
  c.burn_in = s.get<std::size_t>("burn_in", c.burn_in);
  c.record_every = s.get<std::size_t>("record_every", c.record_every);
  c.chains = s.get<std::size_t>("chains", c.chains);
  c.batches = s.get<std::size_t>("batches", c.batches);
  c.bins = s.get<std::size_t>("bins", c.bins);
  c.seed = s.get<std::uint64_t>("seed", c.seed);
  s.finish();
  c.integrator = parse_integrator(root.child("integrator"));
  root.finish();
  c.validate();
  return c;
}

SampleConfig load_sample_config(const std::filesystem::path& path) { return parse_sample_config(read_text(path)); }

GradcheckConfig parse_gradcheck_config(const std::string& yaml) {
  Section root(parse_yaml(yaml), "");
  GradcheckConfig c;
  c.model = parse_model(root.child("model"));
  Section s = root.child("gradcheck");
  c.fixtures = s.get<std::size_t>("fixtures", c.fixtures);
  c.batch = s.get<std::size_t>("batch", c.batch);
  c.eps = s.get<double>("eps", c.eps);
  c.kink_margin = s.get<double>("kink_margin", c.kink_margin);
  c.tolerance = s.get<double>("tolerance", c.tolerance);
  c.seed = s.get<std::uint64_t>("seed", c.seed);
  s.finish();
  root.finish();
  if (c.fixtures < 1 || !(c.eps > 0.0)) throw ConfigError("gradcheck needs fixtures >= 1 and eps > 0");
  return c;
}

GradcheckConfig load_gradcheck_config(const std::filesystem::path& path) {
  return parse_gradcheck_config(read_text(path));
}

SpiralSpec load_spiral_config(const std::filesystem::path& path) {
  Section root(parse_yaml(read_text(path)), "");
  SpiralSpec spec = parse_spiral(root.child("spiral"));
  root.finish();
  return spec;
}

// ---- JSON -----------------------------------------------------------------

nlohmann::json to_json(const MlpSpec& spec) {
  return {{"widths", spec.widths}, {"activation", "relu"}, {"loss", std::string(to_string(spec.loss))}};
}

nlohmann::json to_json(const IntegratorConfig& c) {
  return {{"scheme", std::string(to_string(c.scheme))},
          {"h", c.h},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"k_max", c.k_max},
          {"tol", c.tol},
          {"projection", std::string(to_string(c.projection))},
          {"order", std::string(to_string(c.order))},
          {"momentum", c.momentum}};
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& a : cfg.layout.resolve(cfg.model).layers)
    layers.push_back({{"kind", std::string(to_string(a.kind))},
                      {"radius", a.radius},
                      {"orthogonal_init", a.orthogonal_init}});
  nlohmann::json data;
  switch (cfg.data.source) {
    case DataSource::spiral:
      data["spiral"] = {{"n_train", cfg.data.spiral.n_train},
                        {"n_test", cfg.data.spiral.n_test},
                        {"noise", cfg.data.spiral.noise_sigma},
                        {"seed", cfg.data.spiral.seed}};
      break;
    case DataSource::idx:
      data["idx"] = {{"train_images", cfg.data.train_images.string()},
                     {"train_labels", cfg.data.train_labels.string()},
                     {"test_images", cfg.data.test_images.string()},
                     {"test_labels", cfg.data.test_labels.string()}};
      break;
    case DataSource::csv:
      data["csv"] = {{"train", cfg.data.train_csv.string()},
                     {"test", cfg.data.test_csv.string()},
                     {"label_column", cfg.data.label_column}};
      break;
  }
  if (cfg.data.n_train) {
    data["n_train"] = *cfg.data.n_train;
    data["split_seed"] = cfg.data.split_seed;
  }
  if (cfg.data.batch_count > 0)
    data["batch_size"] = cfg.data.batch_count;
  else
    data["batch_fraction"] = cfg.data.batch_fraction;
  return {{"model", to_json(cfg.model)},
          {"layout", {{"layers", layers}}},
          {"integrator", to_json(cfg.integrator)},
          {"data", data},
          {"run", {{"epochs", cfg.run.epochs}, {"seeds", cfg.run.seeds}}}};
}

nlohmann::json to_json(const SampleConfig& c) {
  nlohmann::json j = {{"family", c.family == SampleFamily::circle ? "circle" : "orthogonal"},
                      {"potential", c.potential == Potential::zero ? "zero" : "quadratic"},
                      {"stiffness", c.stiffness},
                      {"steps", c.steps},
                      {"burn_in", c.burn_in},
                      {"record_every", c.record_every},
                      {"chains", c.chains},
                      {"batches", c.batches},
                      {"bins", c.bins},
                      {"seed", c.seed},
                      {"integrator", to_json(c.integrator)}};
  if (c.family == SampleFamily::circle) {
    j["count"] = c.count;
    j["radius"] = c.radius;
  } else {
    j["rows"] = c.rows;
    j["cols"] = c.cols;
  }
  return j;
}

nlohmann::json to_json(const GradcheckConfig& c) {
  return {{"model", to_json(c.model)}, {"fixtures", c.fixtures}, {"batch", c.batch},
          {"eps", c.eps},             {"kink_margin", c.kink_margin}, {"tolerance", c.tolerance},
          {"seed", c.seed}};
}

std::string code_version() { return fmt::format("{} ({})", COLA_VERSION, COLA_COMMIT); }

}  // namespace cola
