#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsloc/adam.hpp"
#include "fsloc/checkpoint.hpp"
#include "fsloc/csi_data.hpp"
#include "fsloc/feature_extractor.hpp"
#include "fsloc/gnn.hpp"
#include "fsloc/gradcheck.hpp"
#include "fsloc/run_config.hpp"

namespace fsloc {

/// Dataset after load/synthesis, split and z-scoring.
struct PreparedData {
  FingerprintDataset dataset;  // normalized
  SplitResult split;           // normalized
};

PreparedData prepare_data(const RunConfig& cfg);

FewShotModel build_model(const RunConfig& cfg, std::size_t W);

struct TrainingReport {
  PhaseReport pretrain;
  PhaseReport finetune;
  std::vector<double> loss_curve;  // mean episode loss per Adam step
  std::vector<double> batch_accuracy;
  std::size_t episodes = 0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
};

struct TrainedModel {
  FewShotModel model;
  Adam adam;
  TrainingReport report;
};

/// Writes checkpoint.fslm and loss_curve.csv (plus snapshots) into `out`
/// when given. A non-finite loss dumps the offending episode there and
/// throws NumericalError.
TrainedModel run_training(const RunConfig& cfg, const PreparedData& data,
                          const std::optional<std::filesystem::path>& out = std::nullopt);

/// Only the pretraining phase (source, M-way).
TrainedModel run_pretraining(const RunConfig& cfg, const PreparedData& data);

/// Episodic phase alone, continuing from `tm`.
void train_episodes(TrainedModel& tm, const RunConfig& cfg, const SplitResult& split,
                    const std::optional<std::filesystem::path>& out = std::nullopt);

/// One averaged-gradient Adam step over the given episodes. Members run in
/// parallel; gradients are reduced and batch-norm statistics applied in
/// episode order, so the result does not depend on the thread count.
double episode_batch_step(FewShotModel& model, Adam& adam, const std::vector<Episode>& batch,
                          std::vector<EpisodeResult>* results = nullptr);

Checkpoint make_checkpoint(const TrainedModel& tm, const RunConfig& cfg);
/// Rebuilds the model for `cfg` and loads parameters; throws ConfigError if
/// N, K or the variant disagree with the checkpoint.
TrainedModel restore_model(const Checkpoint& ckpt, const RunConfig& cfg, std::size_t W);

struct EvalReport {
  std::string method;
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t draws = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string config;

  std::vector<std::size_t> draws_per_location() const;
};

/// eval_draws test episodes: a uniformly drawn target_test query with
/// support taken from the stored K+1 shots per location.
EvalReport run_evaluation(const FewShotModel& model, const RunConfig& cfg, const SplitResult& split);

/// Extractor + N-way head trained only on `shots_per_location` target
/// samples per location. K+1 uses the stored shots; larger counts add the
/// leading test samples of each location, which are then excluded from
/// evaluation.
EvalReport run_cnn_baseline(const RunConfig& cfg, const PreparedData& data, std::size_t shots_per_location);

struct TableCell {
  std::string method;  // "CNN" or a variant name
  std::size_t K = 0;
};

struct TableResult {
  std::string method;
  std::size_t K = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;
  double mean_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::string error;  // non-empty when the cell failed
};

std::string method_label(const std::string& method);
/// Full Table I/II layout: {CNN, the four variants} x {1, 5, 10}.
std::vector<TableCell> default_table_cells();
/// Seeds cfg.seed, cfg.seed + 1, ... Failed cells are recorded and skipped.
std::vector<TableResult> run_table(const RunConfig& cfg, const std::vector<TableCell>& cells, std::size_t seeds);
std::string format_table_markdown(const std::vector<TableResult>& rows, std::size_t ways);
std::string format_table_csv(const std::vector<TableResult>& rows);

struct VariantGradCheck {
  Variant variant;
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<VariantGradCheck> variants;
  double wall_seconds = 0.0;
  bool passed() const;
  std::string format() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double eps = 1e-5;
  std::uint64_t seed = 7;
  /// Negative control: flips the sign of the analytic gradient of the first
  /// node-update weight before comparison.
  bool inject_sign_error = false;
};

/// Finite-difference check of every parameter for every variant on a tiny
/// config (W=8, d=4, N=3, K=1, L=1).
GradCheckReport run_gradcheck(const GradCheckOptions& opts = {});

void write_text(const std::filesystem::path& path, const std::string& text);
std::string format_eval_report(const EvalReport& r);
std::string eval_report_csv(const EvalReport& r);

}  // namespace fsloc
