#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "doctest.h"
#include "fsloc/csi_data.hpp"
#include "fsloc/error.hpp"

using namespace fsloc;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fsloc_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::filesystem::path write_file(const std::string& name, const std::string& text) {
  const auto p = temp_path(name);
  std::ofstream os(p);
  os << text;
  return p;
}

SynthesisConfig small_cfg(std::uint64_t seed = 3) {
  SynthesisConfig c;
  c.W = 16;
  c.M = 4;
  c.N = 3;
  c.samples_per_source_location = 20;
  c.samples_per_target_location = 15;
  c.seed = seed;
  return c;
}

using Key = std::tuple<int, int, int>;
std::set<Key> keys(const std::vector<ClassPool>& pools) {
  std::set<Key> out;
  for (const auto& p : pools)
    for (const auto& s : p.samples) out.insert({s.domain_id, s.location_id, s.sample_id});
  return out;
}

}  // namespace

TEST_CASE("load: minimal csv") {
  const auto p = write_file("min.csv", "# csif v1 W=4\n0,0,0,1,2,3,4\n0,0,1,5,6,7,8\n");
  const auto ds = load_dataset(p, DatasetFormat::Csv);
  CHECK(ds.W == 4);
  CHECK(ds.sample_count() == 2);
  CHECK(ds.domains.size() == 1);
  CHECK(ds.domain(0).num_locations() == 1);
  CHECK(ds.domain(0).locations[0][1].features == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("load: short third row is reported at line 3") {
  const auto p = write_file("short.csv", "# csif v1 W=4\n0,0,0,1,2,3,4\n0,0,1,5,6,7\n");
  try {
    load_dataset(p, DatasetFormat::Csv);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("load: malformed input") {
  CHECK_THROWS_AS(load_dataset(write_file("nan.csv", "# csif v1 W=2\n0,0,0,1,abc\n"), DatasetFormat::Csv),
                  ParseError);
  CHECK_THROWS_AS(load_dataset(write_file("dup.csv", "# csif v1 W=1\n0,0,0,1\n0,0,0,2\n"), DatasetFormat::Csv),
                  ParseError);
  CHECK_THROWS_AS(load_dataset(write_file("hdr.csv", "0,0,0,1\n"), DatasetFormat::Csv), ParseError);
  CHECK_THROWS_AS(load_dataset(temp_path("nope.csv"), DatasetFormat::Csv), IoError);
}

TEST_CASE("save: empty dataset is an error, one sample gives one row") {
  FingerprintDataset empty;
  empty.W = 3;
  empty.domains.push_back({});
  try {
    save_dataset(empty, temp_path("empty.csv"), DatasetFormat::Csv);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()) == "dataset has no samples");
  }

  FingerprintDataset one;
  one.W = 2;
  one.domains.push_back({0, {{CsiSample{{0.5, -1.25}, 0, 0, 0}}}});
  const auto p = temp_path("one.csv");
  save_dataset(one, p, DatasetFormat::Csv);
  std::ifstream is(p);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 2);
}

TEST_CASE("save/load round-trip is bit-identical in both formats") {
  auto cfg = small_cfg();
  const auto ds = synthesize(cfg);
  for (auto fmt : {DatasetFormat::Csv, DatasetFormat::Binary}) {
    const auto p = temp_path(fmt == DatasetFormat::Csv ? "rt.csv" : "rt.bin");
    save_dataset(ds, p, fmt);
    CHECK(format_from_path(p) == fmt);
    CHECK(load_dataset(p, fmt) == ds);
  }
}

TEST_CASE("synthesize: paper-size counts") {
  SynthesisConfig c;  // W=120, M=16 x 600, N=18 x 500
  c.seed = 1;
  const auto ds = synthesize(c);
  CHECK(ds.domain(0).sample_count() == 9600);
  CHECK(ds.domain(1).sample_count() == 9000);
  CHECK(ds.domain(0).num_locations() == 16);
  CHECK(ds.domain(1).num_locations() == 18);
  ds.validate();
}

TEST_CASE("synthesize: deterministic in the seed") {
  CHECK(synthesize(small_cfg(3)) == synthesize(small_cfg(3)));
  CHECK_FALSE(synthesize(small_cfg(3)) == synthesize(small_cfg(4)));
  auto bad = small_cfg();
  bad.cluster_spread = 0;
  CHECK_THROWS_AS(synthesize(bad), ConfigError);
  bad = small_cfg();
  bad.M = 0;
  CHECK_THROWS_AS(synthesize(bad), ConfigError);
}

TEST_CASE("synthesize: separated classes when separation / spread > 4") {
  SynthesisConfig c;
  c.W = 32;
  c.M = 5;
  c.N = 5;
  c.samples_per_source_location = 200;
  c.samples_per_target_location = 200;
  c.class_separation = 4.5;
  c.cluster_spread = 1.0;
  c.seed = 8;
  const auto ds = synthesize(c);
  for (int d : {0, 1}) {
    const auto& locs = ds.domain(d).locations;
    std::vector<std::vector<double>> means;
    double within = 0;
    std::size_t count = 0;
    for (const auto& loc : locs) {
      std::vector<double> m(c.W, 0.0);
      for (const auto& s : loc)
        for (std::size_t i = 0; i < c.W; ++i) m[i] += s.features[i] / loc.size();
      for (const auto& s : loc)
        for (std::size_t i = 0; i < c.W; ++i) within += std::pow(s.features[i] - m[i], 2);
      count += loc.size() * c.W;
      means.push_back(m);
    }
    within /= static_cast<double>(count);  // per-feature within-class variance
    double closest = 1e300;
    for (std::size_t a = 0; a < means.size(); ++a)
      for (std::size_t b = a + 1; b < means.size(); ++b) {
        double dd = 0;
        for (std::size_t i = 0; i < c.W; ++i) dd += std::pow(means[a][i] - means[b][i], 2);
        closest = std::min(closest, std::sqrt(dd));
      }
    CHECK(closest / within > 2.0);
  }
}

TEST_CASE("split: counts, disjointness and determinism") {
  SynthesisConfig c = small_cfg();
  c.samples_per_target_location = 500;
  c.N = 2;
  const auto ds = synthesize(c);
  const auto s = split_target(ds, 5, 12, 99);
  for (const auto& p : s.target_train) CHECK(p.samples.size() == 6);
  for (const auto& p : s.target_test) CHECK(p.samples.size() == 494);
  for (const auto& p : s.source_train) CHECK(p.samples.size() == 12);
  CHECK(s.training_pool_size() == 12 * 4 + 6 * 2);
  const auto tr = keys(s.target_train), te = keys(s.target_test);
  for (const auto& k : tr) CHECK(te.count(k) == 0);
  CHECK(tr.size() + te.size() == 1000);
  CHECK(split_target(ds, 5, 12, 99) == s);
  CHECK_FALSE(split_target(ds, 5, 12, 100) == s);

  SynthesisConfig c2 = small_cfg();
  c2.samples_per_target_location = 600;
  c2.N = 1;
  const auto s2 = split_target(synthesize(c2), 10, 5, 1);
  CHECK(s2.target_train[0].samples.size() == 11);
  CHECK(s2.target_test[0].samples.size() == 589);
}

TEST_CASE("split: insufficient samples") {
  SynthesisConfig c = small_cfg();
  c.samples_per_target_location = 6;
  const auto ds = synthesize(c);
  CHECK_THROWS_AS(split_target(ds, 5, 10, 1), ConfigError);  // K+1 = all samples, test set empty
  CHECK_NOTHROW(split_target(ds, 4, 10, 1));
  CHECK_THROWS_AS(split_target(ds, 1, 21, 1), ConfigError);
}

TEST_CASE("normalize: statistics come from the training part only") {
  const auto ds = synthesize(small_cfg());
  const auto s = split_target(ds, 2, 10, 5);
  const auto n = normalize(s);
  // Two-pass oracle over the fitting set.
  const std::size_t W = ds.W;
  std::vector<double> mean(W, 0.0), var(W, 0.0);
  std::size_t count = 0;
  for (const auto* pools : {&s.source_train, &s.target_train})
    for (const auto& p : *pools)
      for (const auto& x : p.samples) {
        for (std::size_t i = 0; i < W; ++i) mean[i] += x.features[i];
        ++count;
      }
  for (auto& m : mean) m /= static_cast<double>(count);
  for (const auto* pools : {&s.source_train, &s.target_train})
    for (const auto& p : *pools)
      for (const auto& x : p.samples)
        for (std::size_t i = 0; i < W; ++i) var[i] += std::pow(x.features[i] - mean[i], 2);
  for (auto& v : var) v = std::sqrt(v / static_cast<double>(count));
  const auto& raw = s.target_test[1].samples[3].features;
  const auto& got = n.target_test[1].samples[3].features;
  for (std::size_t i = 0; i < W; ++i) CHECK(got[i] == doctest::Approx((raw[i] - mean[i]) / var[i]).epsilon(1e-12));

  // Fitting set is standardized; normalizing again is the identity up to rounding.
  const auto again = normalize(n);
  const auto st = fit_feature_stats(n);
  for (std::size_t i = 0; i < W; ++i) {
    CHECK(std::abs(st.mean[i]) < 1e-6);
    CHECK(std::abs(st.stddev[i] - 1.0) < 1e-6);
    CHECK(std::abs(again.target_test[0].samples[0].features[i] - n.target_test[0].samples[0].features[i]) < 1e-6);
  }

  const auto nd = normalize(ds, s);
  CHECK(nd.domain(1).sample_count() == ds.domain(1).sample_count());
}

TEST_CASE("normalize: constant feature becomes zero") {
  auto ds = synthesize(small_cfg());
  for (auto& d : ds.domains)
    for (auto& loc : d.locations)
      for (auto& x : loc) x.features[4] = 2.5;
  const auto n = normalize(split_target(ds, 2, 10, 5));
  for (const auto* pools : {&n.source_train, &n.target_train, &n.target_test})
    for (const auto& p : *pools)
      for (const auto& x : p.samples) CHECK(x.features[4] == 0.0);
}
