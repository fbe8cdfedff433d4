#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "fsloc/episode.hpp"
#include "fsloc/error.hpp"

using namespace fsloc;

namespace {

SplitResult make_split(std::size_t M, std::size_t N, std::size_t K, std::size_t K_s, std::uint64_t seed = 1) {
  SynthesisConfig c;
  c.W = 24;
  c.M = M;
  c.N = N;
  c.samples_per_source_location = K_s + 5;
  c.samples_per_target_location = K + 20;
  c.seed = seed;
  return split_target(synthesize(c), K, K_s, seed);
}

const ClassPool& pool_of(const SplitResult& s, const ClassKey& k) {
  for (const auto* pools : {&s.source_train, &s.target_train})
    for (const auto& p : *pools)
      if (p.domain_id == k.domain_id && p.location_id == k.location_id) return p;
  throw std::runtime_error("no pool");
}

bool contains(const ClassPool& p, const CsiSample& x) {
  for (const auto& s : p.samples)
    if (s == x) return true;
  return false;
}

}  // namespace

TEST_CASE("training episode structure, 18-way 5-shot") {
  const auto s = make_split(16, 18, 5, 20);
  Rng rng(4);
  const auto ep = sample_training_episode(s, 18, 5, rng);
  CHECK(ep.support.size() == 90);
  CHECK(ep.total_nodes() == 91);
  CHECK(ep.query_index() == 90);
  std::map<int, int> per_class;
  for (const auto& n : ep.support) ++per_class[n.episode_class];
  CHECK(per_class.size() == 18);
  for (auto [c, k] : per_class) CHECK(k == 5);
  // Node order: support sorted by episode class.
  for (std::size_t i = 1; i < ep.support.size(); ++i)
    CHECK(ep.support[i - 1].episode_class <= ep.support[i].episode_class);
  CHECK(ep.features().shape() == Shape{91, 24});
  const auto nc = ep.node_classes();
  CHECK(nc.back() == ep.query.episode_class);
}

TEST_CASE("training episode: support and query come from the class pool, query is not a support shot") {
  const auto s = make_split(4, 4, 2, 10);
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    const auto ep = sample_training_episode(s, 4, 2, rng);
    REQUIRE(ep.query.episode_class >= 0);
    REQUIRE(ep.query.episode_class < 4);
    for (const auto& n : ep.support) CHECK(contains(pool_of(s, ep.class_map[n.episode_class]), n.sample));
    const auto& qp = pool_of(s, ep.class_map[ep.query.episode_class]);
    CHECK(contains(qp, ep.query.sample));
    for (const auto& n : ep.support) CHECK_FALSE(n.sample == ep.query.sample);
  }
}

TEST_CASE("training episode: a target class with K+1 shots forces the leftover as query") {
  const auto s = make_split(1, 3, 3, 10);
  Rng rng(6);
  int seen = 0;
  for (int t = 0; t < 200; ++t) {
    const auto ep = sample_training_episode(s, 4, 3, rng);
    const auto key = ep.class_map[ep.query.episode_class];
    if (key.domain_id != 1) continue;
    ++seen;
    const auto& pool = pool_of(s, key);
    std::set<int> used;
    for (const auto& n : ep.support)
      if (n.episode_class == ep.query.episode_class) used.insert(n.sample.sample_id);
    CHECK(used.size() == 3);
    int leftover = -1;
    for (const auto& x : pool.samples)
      if (!used.count(x.sample_id)) leftover = x.sample_id;
    CHECK(ep.query.sample.sample_id == leftover);
  }
  CHECK(seen > 0);
}

TEST_CASE("training episode: exhaustive selection") {
  const auto s = make_split(3, 2, 1, 4);
  Rng rng(7);
  const auto ep = sample_training_episode(s, 5, 1, rng);
  std::set<std::pair<int, int>> classes;
  for (const auto& k : ep.class_map) classes.insert({k.domain_id, k.location_id});
  CHECK(classes.size() == 5);
  CHECK(ep.support.size() == 5);
  CHECK_THROWS_AS(sample_training_episode(s, 6, 1, rng), ConfigError);
}

TEST_CASE("training episode: class selection is uniform over the M+N classes") {
  const auto s = make_split(4, 4, 1, 5);
  Rng rng(8);
  const int episodes = 10000;
  std::map<std::pair<int, int>, int> hits;
  std::vector<int> query_slot(4, 0);
  for (int t = 0; t < episodes; ++t) {
    const auto ep = sample_training_episode(s, 4, 1, rng);
    for (const auto& k : ep.class_map) ++hits[{k.domain_id, k.location_id}];
    ++query_slot[ep.query.episode_class];
  }
  REQUIRE(hits.size() == 8);
  const double p = 4.0 / 8.0, sd = std::sqrt(episodes * p * (1 - p));
  for (const auto& [k, h] : hits) CHECK(std::abs(h - episodes * p) < 3 * sd);
  const double q = 0.25, qsd = std::sqrt(episodes * q * (1 - q));
  for (int h : query_slot) CHECK(std::abs(h - episodes * q) < 3 * qsd);
}

TEST_CASE("training episodes replay from the same seed") {
  const auto s = make_split(4, 3, 2, 8);
  Rng a(9), b(9);
  for (int t = 0; t < 20; ++t) {
    const auto x = sample_training_episode(s, 3, 2, a), y = sample_training_episode(s, 3, 2, b);
    CHECK(x.features() == y.features());
    CHECK(x.node_classes() == y.node_classes());
    CHECK(x.class_map == y.class_map);
  }
}

TEST_CASE("test episode: only stored target shots, one omitted per class") {
  const auto s = make_split(3, 4, 10, 5);
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const auto& pool = s.target_test[t % 4].samples;
    const auto& q = pool[static_cast<std::size_t>(t) % pool.size()];
    const auto ep = build_test_episode(s, q, 4, 10, rng);
    CHECK(ep.support.size() == 40);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(ep.class_map[c].domain_id == 1);
      std::set<int> used;
      for (const auto& n : ep.support)
        if (n.episode_class == static_cast<int>(c)) {
          CHECK(n.sample.domain_id == 1);
          CHECK(contains(s.target_train[c], n.sample));
          used.insert(n.sample.sample_id);
        }
      CHECK(used.size() == 10);  // 11 stored, exactly one left out
    }
    CHECK(ep.query.sample == q);
    CHECK(ep.query.episode_class == q.location_id);
  }
}

TEST_CASE("test episode: 16-way 1-shot and protocol violations") {
  const auto s = make_split(2, 16, 1, 3);
  Rng rng(11);
  const auto ep = build_test_episode(s, s.target_test[3].samples[0], 16, 1, rng);
  CHECK(ep.total_nodes() == 17);
  CHECK_THROWS(build_test_episode(s, s.target_train[3].samples[0], 16, 1, rng));
  CHECK_THROWS(build_test_episode(s, s.source_train[0].samples[0], 16, 1, rng));
}

TEST_CASE("label encoding") {
  const auto s = make_split(2, 4, 1, 3);
  Rng rng(12);
  const auto ep = build_test_episode(s, s.target_test[0].samples[0], 4, 1, rng);
  const auto y = encode_labels(ep);
  CHECK(y.shape() == Shape{5, 4});
  // support node of class 2 is row 2
  CHECK(ep.support[2].episode_class == 2);
  for (std::size_t c = 0; c < 4; ++c) CHECK(y.at(2, c) == (c == 2 ? 1.0 : 0.0));
  for (std::size_t c = 0; c < 4; ++c) CHECK(y.at(4, c) == 0.25);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 4; ++c) sum += y.at(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("episode dump writes dataset and sidecar") {
  const auto s = make_split(2, 3, 1, 3);
  Rng rng(13);
  const auto ep = sample_training_episode(s, 3, 1, rng);
  auto dir = std::filesystem::temp_directory_path() / "fsloc_tests";
  std::filesystem::create_directories(dir);
  dump_episode(ep, dir / "ep.csv");
  const auto back = load_dataset(dir / "ep.csv", DatasetFormat::Csv);
  CHECK(back.sample_count() == ep.total_nodes());
  std::ifstream is(dir / "ep.episode");
  std::string first;
  std::getline(is, first);
  CHECK(first == "ways=3");
}
