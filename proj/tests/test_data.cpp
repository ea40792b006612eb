#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "cola/data.hpp"
#include "cola/error.hpp"

using namespace cola;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cola-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset small_dataset(int n) {
  Dataset ds;
  ds.inputs = Matrix(n, 1);
  for (int i = 0; i < n; ++i) {
    ds.inputs(i, 0) = i;
    ds.labels.push_back(i % 2);
  }
  ds.class_count = 2;
  return ds;
}

}  // namespace

TEST_CASE("spiral_point") {
  const auto a = spiral_point(0.25, 0);
  CHECK(a.x() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(a.y()) <= 1e-14);
  const auto b = spiral_point(1.0, 0);
  CHECK(b.x() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(b.y()) <= 1e-14);
  const auto c = spiral_point(1.0, 1);
  CHECK(c.x() == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(std::abs(c.y()) <= 1e-14);
}

TEST_CASE("spiral_generate") {
  SpiralSpec spec;
  const auto [train, test] = spiral_generate(spec);
  CHECK(train.size() == 500);
  CHECK(test.size() == 1000);
  CHECK(train.inputs.cols() == 2);
  CHECK(train.class_count == 2);

  SUBCASE("determinism") {
    const auto [train2, test2] = spiral_generate(spec);
    CHECK(train2.inputs == train.inputs);
    CHECK(train2.labels == train.labels);
    CHECK(test2.inputs == test.inputs);
    spec.seed = 1;
    CHECK(spiral_generate(spec).first.inputs != train.inputs);
  }
  SUBCASE("class balance for any total") {
    for (std::size_t n : {1u, 2u, 7u, 500u, 1001u}) {
      SpiralSpec s;
      s.n_train = n;
      s.n_test = n + 2;
      const auto [tr, te] = spiral_generate(s);
      for (const Dataset* ds : {&tr, &te}) {
        const auto ones = std::count(ds->labels.begin(), ds->labels.end(), 1);
        const auto zeros = static_cast<std::ptrdiff_t>(ds->labels.size()) - ones;
        CHECK(std::abs(ones - zeros) <= 1);
      }
    }
  }
  SUBCASE("radius law without noise") {
    // Recover t from r = 2 sqrt(t) and regenerate the point.
    SpiralSpec s;
    s.noise_sigma = 0.0;
    const auto [tr, te] = spiral_generate(s);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < tr.size(); ++i) {
      const double x = tr.inputs(i, 0);
      const double y = tr.inputs(i, 1);
      const double t = (x * x + y * y) / 4.0;
      CHECK(t <= 1.0 + 1e-12);
      const auto p = spiral_point(t, tr.labels[static_cast<std::size_t>(i)]);
      worst = std::max({worst, std::abs(p.x() - x), std::abs(p.y() - y)});
    }
    CHECK(worst <= 1e-9);
  }
  SUBCASE("noise level") {
    SpiralSpec s;
    s.n_train = 20000;
    SpiralSpec clean = s;
    clean.noise_sigma = 0.0;
    const Matrix diff = spiral_generate(s).first.inputs - spiral_generate(clean).first.inputs;
    const double var = diff.squaredNorm() / static_cast<double>(diff.size());
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.02));
  }
  SUBCASE("validation") {
    SpiralSpec s;
    s.noise_sigma = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SpiralSpec{};
    s.n_train = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("minibatch_sample") {
  const Dataset ds = small_dataset(500);
  Rng rng(1);
  CHECK(BatchSize::fraction(0.05).resolve(500) == 25);
  CHECK(BatchSize::count(7).resolve(500) == 7);
  CHECK_THROWS_AS(BatchSize::count(501).resolve(500), DataError);
  CHECK_THROWS_AS(BatchSize::count(0).resolve(500), Error);

  const Batch full = minibatch_sample(ds, BatchSize::fraction(1.0), rng);
  CHECK(full.size() == 500);
  std::set<double> seen(full.inputs.data(), full.inputs.data() + 500);
  CHECK(seen.size() == 500);
  for (Eigen::Index i = 0; i < 500; ++i)
    CHECK(full.labels[static_cast<std::size_t>(i)] == static_cast<int>(full.inputs(i, 0)) % 2);

  for (int k = 0; k < 200; ++k) {
    const Batch b = minibatch_sample(ds, BatchSize::fraction(0.05), rng);
    CHECK(b.size() == 25);
    CHECK(std::set<double>(b.inputs.data(), b.inputs.data() + 25).size() == 25);
  }

  Rng a(9), b(9);
  CHECK(sample_without_replacement(100, 10, a) == sample_without_replacement(100, 10, b));
}

TEST_CASE("sample_without_replacement is uniform") {
  Rng rng(2);
  std::vector<int> counts(10, 0);
  for (int k = 0; k < 50000; ++k)
    for (auto i : sample_without_replacement(10, 3, rng)) ++counts[i];
  for (int c : counts) CHECK(c == doctest::Approx(15000).epsilon(0.03));
}

TEST_CASE("train_test_split") {
  const Dataset ds = small_dataset(40);
  Rng rng(3);
  const auto [tr, te] = train_test_split(ds, 30, rng);
  CHECK(tr.size() == 30);
  CHECK(te.size() == 10);
  std::set<double> all(tr.inputs.data(), tr.inputs.data() + 30);
  all.insert(te.inputs.data(), te.inputs.data() + 10);
  CHECK(all.size() == 40);

  Rng again(3);
  CHECK(train_test_split(ds, 30, again).first.inputs == tr.inputs);
  Rng r2(4);
  CHECK(train_test_split(ds, 40, r2).second.size() == 0);
  CHECK_THROWS_AS(train_test_split(ds, 41, r2), DataError);
}

TEST_CASE("IDX files") {
  TempDir dir("idx");
  SUBCASE("hand-written fixture") {
    // 4 images of 1x2 pixels, then 4 labels.
    write_bytes(dir.path / "img", {0, 0, 0x08, 3, 0, 0, 0, 4, 0, 0, 0, 1, 0, 0, 0, 2,  //
                                   0, 255, 51, 102, 255, 0, 1, 2});
    write_bytes(dir.path / "lbl", {0, 0, 0x08, 1, 0, 0, 0, 4, 3, 0, 9, 1});
    const Dataset ds = load_idx(dir.path / "img", dir.path / "lbl");
    CHECK(ds.size() == 4);
    CHECK(ds.inputs.cols() == 2);
    CHECK(ds.inputs(0, 0) == 0.0);
    CHECK(ds.inputs(0, 1) == 1.0);
    CHECK(ds.inputs(1, 0) == doctest::Approx(0.2));
    CHECK(ds.inputs(3, 1) == doctest::Approx(2.0 / 255.0));
    CHECK(ds.labels == std::vector<int>{3, 0, 9, 1});
    CHECK(ds.class_count == 10);
  }
  SUBCASE("round trip") {
    IdxArray a{{2, 3}, {1, 2, 3, 4, 5, 6}};
    write_idx(dir.path / "a", a);
    const IdxArray b = read_idx(dir.path / "a");
    CHECK(b.dims == a.dims);
    CHECK(b.values == a.values);
  }
  SUBCASE("malformed files") {
    write_bytes(dir.path / "magic", {0, 1, 0x08, 1, 0, 0, 0, 1, 7});
    CHECK_THROWS_AS(read_idx(dir.path / "magic"), DataError);
    write_bytes(dir.path / "type", {0, 0, 0x0D, 1, 0, 0, 0, 1, 7});
    CHECK_THROWS_AS(read_idx(dir.path / "type"), DataError);
    write_bytes(dir.path / "short", {0, 0, 0x08, 1, 0, 0, 0, 3, 7});
    CHECK_THROWS_AS(read_idx(dir.path / "short"), DataError);
    write_bytes(dir.path / "long", {0, 0, 0x08, 1, 0, 0, 0, 1, 7, 8});
    CHECK_THROWS_AS(read_idx(dir.path / "long"), DataError);
    CHECK_THROWS_AS(read_idx(dir.path / "missing"), DataError);

    write_idx(dir.path / "img", {{3, 2}, {1, 2, 3, 4, 5, 6}});
    write_idx(dir.path / "lbl", {{2}, {0, 1}});
    CHECK_THROWS_AS(load_idx(dir.path / "img", dir.path / "lbl"), DataError);
  }
}

TEST_CASE("CSV files") {
  TempDir dir("csv");
  SUBCASE("empty body") {
    std::ofstream(dir.path / "e.csv") << "x,y,label\n";
    CHECK_THROWS_AS(load_csv(dir.path / "e.csv", {}), DataError);
  }
  SUBCASE("label column anywhere") {
    std::ofstream(dir.path / "a.csv") << "class,f1,f2\n1,0.5,-2\n0,3,4e-1\n";
    const Dataset ds = load_csv(dir.path / "a.csv", {"class"});
    CHECK(ds.size() == 2);
    CHECK(ds.inputs(0, 1) == -2.0);
    CHECK(ds.inputs(1, 1) == 0.4);
    CHECK(ds.labels == std::vector<int>{1, 0});
    CHECK(ds.class_count == 2);
  }
  SUBCASE("errors") {
    std::ofstream(dir.path / "n.csv") << "x,label\n1\n";
    CHECK_THROWS_AS(load_csv(dir.path / "n.csv", {}), DataError);
    std::ofstream(dir.path / "m.csv") << "x,y\n1,2\n";
    CHECK_THROWS_AS(load_csv(dir.path / "m.csv", {}), DataError);
    std::ofstream(dir.path / "v.csv") << "x,label\nabc,1\n";
    CHECK_THROWS_AS(load_csv(dir.path / "v.csv", {}), DataError);
  }
  SUBCASE("round trip is exact") {
    const auto [tr, te] = spiral_generate(SpiralSpec{});
    write_csv(dir.path / "s.csv", tr, {"x", "y"}, "label");
    const Dataset back = load_csv(dir.path / "s.csv", {});
    CHECK(back.inputs == tr.inputs);
    CHECK(back.labels == tr.labels);
  }
}
