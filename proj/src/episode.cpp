#include "fsloc/episode.hpp"

#include <algorithm>
#include <fstream>

#include "fsloc/error.hpp"

namespace fsloc {

Tensor Episode::features() const {
  const std::size_t W = query.sample.features.size();
  Tensor x({total_nodes(), W});
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i].sample.features.size() != W) throw ShapeError("episode: inconsistent feature width");
    std::copy(support[i].sample.features.begin(), support[i].sample.features.end(), x.ptr() + i * W);
  }
  std::copy(query.sample.features.begin(), query.sample.features.end(), x.ptr() + support.size() * W);
  return x;
}

std::vector<int> Episode::node_classes() const {
  std::vector<int> c;
  c.reserve(total_nodes());
  for (const auto& s : support) c.push_back(s.episode_class);
  c.push_back(query.episode_class);
  return c;
}

Episode sample_training_episode(const SplitResult& split, std::size_t ways, std::size_t shots, Rng& rng) {
  std::vector<const ClassPool*> pools;
  for (const auto& p : split.source_train) pools.push_back(&p);
  for (const auto& p : split.target_train) pools.push_back(&p);
  if (ways == 0 || shots == 0) throw ConfigError("episode needs ways >= 1 and shots >= 1");
  if (ways > pools.size())
    throw ConfigError(std::to_string(ways) + "-way episode but only " + std::to_string(pools.size()) +
                      " classes available");

  // Selection order doubles as the episode-class permutation.
  const auto chosen = rng.choose(pools.size(), ways);
  const auto query_class = rng.below(ways);

  Episode ep;
  ep.ways = ways;
  ep.shots = shots;
  ep.support.reserve(ways * shots);
  for (std::size_t c = 0; c < ways; ++c) {
    const ClassPool& pool = *pools[chosen[c]];
    ep.class_map.push_back({pool.domain_id, pool.location_id});
    const bool is_query = c == query_class;
    const std::size_t need = shots + (is_query ? 1 : 0);
    if (pool.samples.size() < need)
      throw ConfigError("class pool (" + std::to_string(pool.domain_id) + "," + std::to_string(pool.location_id) +
                        ") exhausted: " + std::to_string(pool.samples.size()) + " samples for " +
                        std::to_string(need) + " draws");
    const auto picks = rng.choose(pool.samples.size(), need);
    for (std::size_t k = 0; k < shots; ++k) ep.support.push_back({pool.samples[picks[k]], static_cast<int>(c)});
    if (is_query) ep.query = {pool.samples[picks[shots]], static_cast<int>(c)};
  }
  return ep;
}

Episode build_test_episode(const SplitResult& split, const CsiSample& test_sample, std::size_t ways,
                           std::size_t shots, Rng& rng) {
  if (test_sample.domain_id != split.target_domain)
    throw std::invalid_argument("test query must come from the target domain");
  if (ways != split.target_train.size())
    throw ConfigError("test episodes are " + std::to_string(split.target_train.size()) + "-way, requested " +
                      std::to_string(ways));
  if (shots > split.K) throw ConfigError("test shots exceed the stored K+1 shots minus one");
  const auto loc = static_cast<std::size_t>(test_sample.location_id);
  if (loc >= split.target_test.size()) throw std::invalid_argument("test query has unknown location");
  const auto& test_pool = split.target_test[loc].samples;
  const bool in_test = std::any_of(test_pool.begin(), test_pool.end(),
                                   [&](const CsiSample& s) { return s.sample_id == test_sample.sample_id; });
  if (!in_test) throw std::invalid_argument("test query is not a target_test sample (protocol violation)");

  Episode ep;
  ep.ways = ways;
  ep.shots = shots;
  for (std::size_t c = 0; c < ways; ++c) {
    const ClassPool& pool = split.target_train[c];
    ep.class_map.push_back({pool.domain_id, pool.location_id});
    for (std::size_t i : rng.choose(pool.samples.size(), shots))
      ep.support.push_back({pool.samples[i], static_cast<int>(c)});
  }
  ep.query = {test_sample, static_cast<int>(loc)};
  return ep;
}

Tensor encode_labels(const Episode& episode) {
  const std::size_t n = episode.total_nodes(), N = episode.ways;
  Tensor y({n, N});
  for (std::size_t i = 0; i < episode.support.size(); ++i) y.at(i, episode.support[i].episode_class) = 1.0;
  for (std::size_t c = 0; c < N; ++c) y.at(n - 1, c) = 1.0 / static_cast<double>(N);
  return y;
}

void dump_episode(const Episode& episode, const std::filesystem::path& csv_path) {
  FingerprintDataset ds;
  ds.W = episode.query.sample.features.size();
  // Node order is kept by filing every node under domain 0, location = node index.
  DomainTable t;
  t.domain_id = 0;
  std::size_t idx = 0;
  auto add = [&](const CsiSample& s) {
    CsiSample c = s;
    c.domain_id = 0;
    c.location_id = static_cast<int>(idx);
    c.sample_id = 0;
    t.locations.push_back({c});
    ++idx;
  };
  for (const auto& s : episode.support) add(s.sample);
  add(episode.query.sample);
  ds.domains.push_back(std::move(t));
  save_dataset(ds, csv_path, DatasetFormat::Csv);

  auto sidecar = csv_path;
  sidecar.replace_extension(".episode");
  std::ofstream os(sidecar);
  if (!os) throw IoError("cannot write " + sidecar.string());
  os << "ways=" << episode.ways << "\nshots=" << episode.shots << "\nnodes=" << episode.total_nodes()
     << "\nquery_node=" << episode.query_index() << '\n';
  for (std::size_t c = 0; c < episode.class_map.size(); ++c)
    os << "class." << c << "=" << episode.class_map[c].domain_id << ':' << episode.class_map[c].location_id << '\n';
  const auto nodes = episode.node_classes();
  const auto source = [&](std::size_t i) -> const CsiSample& {
    return i < episode.support.size() ? episode.support[i].sample : episode.query.sample;
  };
  for (std::size_t i = 0; i < nodes.size(); ++i)
    os << "node." << i << "=" << nodes[i] << ' ' << source(i).domain_id << ':' << source(i).location_id << ':'
       << source(i).sample_id << '\n';
}

}  // namespace fsloc
