#pragma once

#include <filesystem>
#include <vector>

#include "fsloc/csi_data.hpp"
#include "fsloc/rng.hpp"
#include "fsloc/tensor.hpp"

namespace fsloc {

struct EpisodeNode {
  CsiSample sample;
  int episode_class = 0;  // 0..ways-1
};

struct ClassKey {
  int domain_id = 0;
  int location_id = 0;
  bool operator==(const ClassKey&) const = default;
};

/// One N-way K-shot task. Graph node order: support entries sorted by
/// (episode_class, draw order), then the query as the last node.
struct Episode {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::vector<EpisodeNode> support;
  EpisodeNode query;  // episode_class is the ground truth, never fed to the model
  std::vector<ClassKey> class_map;

  std::size_t total_nodes() const { return support.size() + 1; }
  std::size_t query_index() const { return support.size(); }
  /// [K_total x W] feature matrix in node order.
  Tensor features() const;
  /// Episode class of every node in node order (query uses its true class).
  std::vector<int> node_classes() const;
};

/// Training task: `ways` distinct classes drawn uniformly from the M+N
/// source and target training pools; K support shots per class; the query
/// class is uniform over the selected classes and its sample comes from the
/// pool minus that class's support shots.
Episode sample_training_episode(const SplitResult& split, std::size_t ways, std::size_t shots, Rng& rng);

/// Test task: all N target locations (episode class = location index),
/// support drawn from the stored K+1 shots, query = `test_sample`, which must
/// belong to target_test.
Episode build_test_episode(const SplitResult& split, const CsiSample& test_sample, std::size_t ways,
                           std::size_t shots, Rng& rng);

/// [K_total x N]: one-hot rows for support nodes, 1/N for the query row.
Tensor encode_labels(const Episode& episode);

/// Writes the episode as a CSV dataset (node order) plus `<stem>.episode`,
/// a line-oriented key=value sidecar with the class map and node classes.
void dump_episode(const Episode& episode, const std::filesystem::path& csv_path);

}  // namespace fsloc
