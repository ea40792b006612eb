#include "cola/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "cola/error.hpp"

namespace cola {

void Dataset::validate() const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size())
    throw DataError(fmt::format("dataset has {} rows but {} labels", inputs.rows(), labels.size()));
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw DataError(fmt::format("label {} outside [0, {})", y, class_count));
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out{Matrix(static_cast<Eigen::Index>(indices.size()), ds.inputs.cols()), {}, ds.class_count};
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = ds.inputs.row(static_cast<Eigen::Index>(indices[k]));
    out.labels.push_back(ds.labels[indices[k]]);
  }
  return out;
}

Batch as_batch(const Dataset& ds) { return {ds.inputs, ds.labels}; }

// ---- spiral -----------------------------------------------------------------

void SpiralSpec::validate() const {
  if (n_train == 0 || n_test == 0) throw ConfigError("spiral sizes must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("spiral noise sigma must be >= 0");
}

Eigen::Vector2d spiral_point(double t, int cls) {
  const double root = std::sqrt(t);
  const double arg = 8.0 * root * std::numbers::pi + (cls == 0 ? 0.0 : std::numbers::pi);
  return {2.0 * root * std::cos(arg), 2.0 * root * std::sin(arg)};
}

namespace {

Dataset spiral_set(std::size_t n, double sigma, Rng& rng) {
  Dataset ds{Matrix(static_cast<Eigen::Index>(n), 2), std::vector<int>(n), 2};
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double t = rng.uniform();
    const double nx = rng.normal();
    const double ny = rng.normal();
    const Eigen::Vector2d p = spiral_point(t, cls);
    ds.inputs(static_cast<Eigen::Index>(i), 0) = p.x() + sigma * nx;
    ds.inputs(static_cast<Eigen::Index>(i), 1) = p.y() + sigma * ny;
    ds.labels[i] = cls;
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> spiral_generate(const SpiralSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset train = spiral_set(spec.n_train, spec.noise_sigma, rng);
  Dataset test = spiral_set(spec.n_test, spec.noise_sigma, rng);
  return {std::move(train), std::move(test)};
}

// ---- batching ---------------------------------------------------------------

BatchSize BatchSize::fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw ConfigError(fmt::format("batch fraction must be in (0, 1], got {}", f));
  return BatchSize(f, 0);
}

BatchSize BatchSize::count(std::size_t n) {
  if (n == 0) throw ConfigError("batch size must be positive");
  return BatchSize(0.0, n);
}

std::size_t BatchSize::resolve(std::size_t n) const {
  std::size_t k = count_;
  if (count_ == 0) k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction_ * static_cast<double>(n))));
  if (k > n) throw DataError(fmt::format("batch size {} exceeds dataset size {}", k, n));
  return k;
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw DataError(fmt::format("cannot draw {} distinct indices from {}", k, n));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index_below(n - i)]);
  pool.resize(k);
  return pool;
}

Batch minibatch_sample(const Dataset& ds, BatchSize size, Rng& rng) {
  const auto n = static_cast<std::size_t>(ds.size());
  const auto picked = sample_without_replacement(n, size.resolve(n), rng);
  Batch b{Matrix(static_cast<Eigen::Index>(picked.size()), ds.inputs.cols()), {}};
  b.labels.reserve(picked.size());
  for (std::size_t k = 0; k < picked.size(); ++k) {
    b.inputs.row(static_cast<Eigen::Index>(k)) = ds.inputs.row(static_cast<Eigen::Index>(picked[k]));
    b.labels.push_back(ds.labels[picked[k]]);
  }
  return b;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, std::size_t n_train, Rng& rng) {
  const auto n = static_cast<std::size_t>(ds.size());
  if (n_train > n) throw DataError(fmt::format("n_train {} exceeds dataset size {}", n_train, n));
  const auto order = sample_without_replacement(n, n, rng);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {subset(ds, train), subset(ds, test)};
}

// ---- IDX --------------------------------------------------------------------

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open IDX file {}", path.string()));
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4))
    throw DataError(fmt::format("{}: truncated IDX header", path.string()));
  if (magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 || magic[3] == 0)
    throw DataError(fmt::format("{}: bad IDX magic {:02x}{:02x}{:02x}{:02x} (expected 000008nn)",
                                path.string(), magic[0], magic[1], magic[2], magic[3]));
  IdxArray out;
  std::size_t count = 1;
  for (int d = 0; d < magic[3]; ++d) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw DataError(fmt::format("{}: truncated IDX dimensions", path.string()));
    const std::uint32_t dim = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                              (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
    out.dims.push_back(dim);
    count *= dim;
  }
  out.values.resize(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(count)))
    throw DataError(fmt::format("{}: IDX body shorter than its dimensions ({} bytes)", path.string(), count));
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(fmt::format("{}: trailing bytes after IDX body", path.string()));
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(array.dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (std::uint32_t d : array.dims) {
    const unsigned char b[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  out.write(reinterpret_cast<const char*>(array.values.data()), static_cast<std::streamsize>(array.values.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.dims.size() < 2) throw DataError("IDX image file needs at least two dimensions");
  if (lab.dims.size() != 1) throw DataError("IDX label file must be one-dimensional");
  if (img.dims[0] != lab.dims[0])
    throw DataError(fmt::format("IDX dimension mismatch: {} images, {} labels", img.dims[0], lab.dims[0]));
  const std::size_t n = img.dims[0];
  const std::size_t d = n == 0 ? 0 : img.values.size() / n;
  Dataset ds{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)), {}, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img.values[i * d + j] / 255.0;
  int top = -1;
  for (std::uint8_t y : lab.values) {
    ds.labels.push_back(y);
    top = std::max(top, static_cast<int>(y));
  }
  ds.class_count = top + 1;
  if (n == 0) throw DataError("IDX files contain no samples");
  return ds;
}

// ---- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto first = field.find_first_not_of(" \t\r");
    const auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? std::string{} : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw DataError(fmt::format("line {}: column '{}' is not a number: '{}'", line, column, text));
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open CSV file {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{}: missing header row", path.string()));
  const auto header = split_fields(line);
  const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end())
    throw DataError(fmt::format("{}: no label column '{}'", path.string(), schema.label_column));
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError(fmt::format("line {}: {} fields, header has {}", line_no, fields.size(), header.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v = parse_number(fields[c], line_no, header[c]);
      if (c == label_col) {
        if (v != std::floor(v) || v < 0.0)
          throw DataError(fmt::format("line {}: label must be a non-negative integer", line_no));
        labels.push_back(static_cast<int>(v));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(fmt::format("{}: empty dataset (no data rows)", path.string()));
  Dataset ds{Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1)),
             std::move(labels), 0};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::vector<std::string>& feature_names, const std::string& label_column) {
  if (feature_names.size() != static_cast<std::size_t>(ds.inputs.cols()))
    throw DataError("feature name count differs from the input width");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  for (const auto& name : feature_names) out << name << ',';
  out << label_column << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) out << fmt::format("{:.17g},", ds.inputs(i, j));
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace cola
