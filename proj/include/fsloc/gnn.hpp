#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fsloc/episode.hpp"
#include "fsloc/feature_extractor.hpp"
#include "fsloc/layers.hpp"

namespace fsloc {

enum class Variant { Plain, Attentive, Egnn, ChebyNet };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
inline constexpr Variant kAllVariants[] = {Variant::Plain, Variant::Attentive, Variant::Egnn, Variant::ChebyNet};

struct GnnConfig {
  std::size_t ways = 18;        // N
  std::size_t feature_dim = 32; // d, output of the extractor
  std::size_t layers = 2;       // L
  std::vector<std::size_t> edge_hidden{32, 16};
  double leaky_slope = 0.2;
  Variant variant = Variant::Plain;
  double beta = 0.5;             // attentive: kept fraction per adjacency row
  double gamma = 1.0;            // egnn: edge-loss weight
  std::size_t cheb_order = 3;    // chebynet: n
  double lambda_max = 2.0;       // chebynet: <= 0 selects power iteration
  bool symmetrize_laplacian = true;
  bool egnn_double_softmax = true;  // edge weights = softmax(A^(L+1)) on the softmaxed adjacency
  // Added to the classifier weights that read the label block of X^(L)
  // (its last N columns): at init the query is scored by label propagation
  // through A^(L+1). 0 leaves the plain fan-in init.
  double label_readout_gain = 3.0;

  /// d_0 .. d_L with d_0 = d + N and d_l = floor(d_{l-1} / 2) + d_{l-1}.
  std::vector<std::size_t> widths() const;
  void validate() const;
};

/// f_theta: pointwise maps over |x_i - x_j| (edge_hidden..., 1), each hidden
/// map followed by batch norm over all n^2 pair positions and LeakyReLU.
class EdgeNetwork {
 public:
  static EdgeNetwork create(ParameterStore& store, const std::string& prefix, std::size_t in,
                            const std::vector<std::size_t>& hidden, Rng& rng);
  /// X [n x d] -> raw scores [n x n]
  ad::Var scores(ForwardContext& ctx, ad::Var x, double slope) const;

 private:
  std::vector<Linear> maps_;
  std::vector<BatchNorm> norms_;
};

struct GnnOutput {
  ad::Var probs;                         // [1 x N]
  std::vector<ad::Var> features;         // X^(0) .. X^(L)
  std::vector<ad::Var> adjacencies;      // A^(1) .. A^(L+1) as used by the updates
  ad::Var final_scores;                  // A^(L+1) before the row softmax
};

class GnnModel {
 public:
  static GnnModel create(ParameterStore& store, const std::string& prefix, const GnnConfig& cfg, Rng& rng);

  /// Runs L graph layers and the classification layer on X^(0); the query is
  /// the last node.
  GnnOutput forward(ForwardContext& ctx, ad::Var x0) const;

  /// A = row_softmax(f(|x_i - x_j|)), top-k sparsified for the attentive variant.
  ad::Var edge_update(ForwardContext& ctx, const EdgeNetwork& net, ad::Var x, ad::Var* raw_scores = nullptr) const;

  const GnnConfig& config() const { return cfg_; }
  std::size_t node_weight_slot(std::size_t layer) const { return node_weights_.at(layer); }
  std::size_t classifier_slot() const { return classifier_; }

 private:
  GnnConfig cfg_;
  std::vector<EdgeNetwork> edges_;   // L + 1 networks, the last feeds classification
  std::vector<std::size_t> node_weights_;
  std::size_t classifier_ = 0;
};

/// [rho(A X W), X]
ad::Var node_update(ad::Tape& t, ad::Var adjacency, ad::Var x, ad::Var weight, double slope);

/// softmax(W (A X)_query^T) for W [N x d_L]
ad::Var classify(ad::Tape& t, ad::Var adjacency, ad::Var x, ad::Var weight, std::size_t query);

inline constexpr double kLogClip = 1e-12;
/// -sum_n y_n log max(yhat_n, 1e-12) against a one-hot target.
ad::Var loss_gnn(ad::Tape& t, ad::Var probs, std::size_t true_class);

/// X^(0) = [phi(x_i), y_i]
ad::Var init_node_features(ad::Tape& t, ad::Var features, const Tensor& labels);

struct ModelConfig {
  ExtractorConfig extractor;
  GnnConfig gnn;
};

struct EpisodeResult {
  double loss = 0.0;
  Tensor probs;  // [1 x N]
  Gradients grads;
  std::vector<StatUpdate> stats;
};

/// Feature extractor + GNN sharing one parameter store.
class FewShotModel {
 public:
  static FewShotModel create(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const FeatureExtractor& extractor() const { return extractor_; }
  const GnnModel& gnn() const { return gnn_; }

  GnnOutput forward(ForwardContext& ctx, const Episode& episode) const;
  GnnOutput forward_embedded(ForwardContext& ctx, ad::Var phi, const Episode& episode) const;
  /// L_GNN, plus gamma * L_E for the EGNN variant.
  ad::Var loss(ForwardContext& ctx, const Episode& episode, const GnnOutput& out) const;

  /// Train-mode forward + backward of one episode against the current
  /// parameters. Safe to call concurrently: nothing shared is written.
  EpisodeResult episode_gradients(const Episode& episode) const;

  /// Eval-mode class distribution for the query.
  Tensor predict(const Episode& episode) const;

  /// Eval-mode phi for each row of `features` [B x W]. In eval mode batch
  /// norm is per-sample, so rows can be embedded once and reused across
  /// test episodes.
  Tensor embed(const Tensor& features) const;
  /// predict() with the extractor output supplied in node order.
  Tensor predict_embedded(const Tensor& phi, const Episode& episode) const;

  void freeze_extractor(bool frozen);

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  FeatureExtractor extractor_;
  GnnModel gnn_;
};

std::size_t argmax(std::span<const double> values);

}  // namespace fsloc
