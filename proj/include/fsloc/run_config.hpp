#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fsloc/adam.hpp"
#include "fsloc/csi_data.hpp"
#include "fsloc/gnn.hpp"

namespace fsloc {

/// Everything one experiment needs. Loaded from an INI file with sections
/// [data], [model], [train], [eval] and a top-level `seed`/`out`.
struct RunConfig {
  // [data]
  std::optional<std::filesystem::path> dataset_path;  // unset: synthesize
  SynthesisConfig synthesis{.W = 32, .M = 8, .N = 6, .samples_per_source_location = 100,
                            .samples_per_target_location = 100};
  int source_domain = 0;  // case direction
  int target_domain = 1;

  // [model]
  ModelConfig model;

  // [train]
  std::size_t K = 5;
  std::size_t K_s = 100;
  std::size_t episodes_total = 10000;
  std::size_t episode_batch = 20;
  AdamConfig adam;
  std::size_t pretrain_epochs = 10;
  std::size_t finetune_epochs = 10;
  std::size_t classifier_batch = 32;
  std::size_t baseline_epochs = 50;  // CNN reference
  bool freeze_extractor = false;
  std::size_t snapshot_every = 0;     // in Adam steps, 0 = off
  std::size_t early_stop_patience = 0;  // in validation rounds, 0 = off
  std::size_t validation_every = 50;
  std::size_t validation_episodes = 50;
  int threads = 0;  // 0 = OpenMP default

  // [eval]
  std::size_t eval_draws = 6400;

  std::uint64_t seed = 1;
  std::filesystem::path out = "run";

  std::size_t ways() const { return model.gnn.ways; }
  void validate() const;
};

/// Throws ConfigError on unknown keys or unparsable values, IoError when the
/// file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);
std::string format_run_config(const RunConfig& cfg);

}  // namespace fsloc
