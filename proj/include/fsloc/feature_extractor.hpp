#pragma once

#include <vector>

#include "fsloc/adam.hpp"
#include "fsloc/csi_data.hpp"
#include "fsloc/layers.hpp"

namespace fsloc {

/// Three 1D conv stages (stride 2, "halving" padding) each followed by
/// batch norm + ReLU, then a fully-connected map to `d` features.
struct ExtractorConfig {
  std::size_t W = 120;
  std::size_t channels = 32;
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t stages = 3;
  std::size_t d = 32;

  /// Sequence length after each conv stage, e.g. 60, 30, 15 for W = 120.
  std::vector<std::size_t> stage_lengths() const;
};

class FeatureExtractor {
 public:
  static FeatureExtractor create(ParameterStore& store, const std::string& prefix, const ExtractorConfig& cfg,
                                 Rng& rng);

  /// x: [B x W] -> [B x d]
  ad::Var operator()(ForwardContext& ctx, ad::Var x) const;
  const ExtractorConfig& config() const { return cfg_; }
  std::vector<std::size_t> parameter_slots() const;
  std::vector<std::size_t> buffer_slots() const;

 private:
  ExtractorConfig cfg_;
  std::vector<Conv1d> convs_;
  std::vector<BatchNorm> norms_;
  Linear fc_;
};

/// Plain supervised classifier: extractor followed by a linear head, trained
/// with softmax cross-entropy on labelled pools (class = pool index).
struct ClassifierFit {
  ParameterStore store;  // base parameters followed by the head's
  Linear head;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

struct ClassifierTraining {
  std::size_t epochs = 10;
  std::size_t batch = 32;
  AdamConfig adam;
};

/// Trains a copy of `base` plus a fresh `pools.size()`-way head. Only the
/// extractor and the head move; anything else in `base` is held fixed.
ClassifierFit fit_classifier(const ParameterStore& base, const FeatureExtractor& fx,
                             const std::vector<ClassPool>& pools, const ClassifierTraining& opts, Rng& rng);

/// Copies the extractor part of `fitted` back into `base` (head stripped).
void strip_head(ParameterStore& base, const ParameterStore& fitted, const FeatureExtractor& fx);

/// Eval-mode class probabilities for each row of `features` [B x W].
Tensor classifier_probabilities(const ParameterStore& store, const FeatureExtractor& fx, const Linear& head,
                                const Tensor& features);
double classifier_accuracy(const ParameterStore& store, const FeatureExtractor& fx, const Linear& head,
                           const std::vector<ClassPool>& pools);

struct PhaseReport {
  double accuracy_before = 0.0;  // head accuracy right after init (fine-tune only)
  double accuracy = 0.0;         // head accuracy on the training pools after training
  std::vector<double> epoch_loss;
};

/// M-way source pretraining; on return `store` holds the trained extractor.
PhaseReport pretrain_extractor(ParameterStore& store, const FeatureExtractor& fx,
                               const std::vector<ClassPool>& source_train, const ClassifierTraining& opts, Rng& rng);
/// N-way fine-tuning on the K+1 target shots per location.
PhaseReport finetune_extractor(ParameterStore& store, const FeatureExtractor& fx,
                               const std::vector<ClassPool>& target_train, const ClassifierTraining& opts, Rng& rng);

/// Flattens pools into a [B x W] matrix plus labels (pool index).
Tensor stack_features(const std::vector<const CsiSample*>& samples);

}  // namespace fsloc
