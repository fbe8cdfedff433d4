#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fsloc {

/// One fingerprint: W real CSI magnitudes plus its labels.
struct CsiSample {
  std::vector<double> features;
  int domain_id = 0;
  int location_id = 0;
  int sample_id = 0;
  bool operator==(const CsiSample&) const = default;
};

struct DomainTable {
  int domain_id = 0;
  /// locations[l] holds every sample of location l, in file/generation order.
  std::vector<std::vector<CsiSample>> locations;

  std::size_t num_locations() const { return locations.size(); }
  std::size_t sample_count() const;
  bool operator==(const DomainTable&) const = default;
};

struct FingerprintDataset {
  std::size_t W = 0;
  std::vector<DomainTable> domains;  // sorted by domain_id

  std::size_t sample_count() const;
  const DomainTable& domain(int domain_id) const;
  /// Throws ParseError on a broken invariant (feature width, non-finite
  /// values, empty locations, duplicate ids).
  void validate() const;
  bool operator==(const FingerprintDataset&) const = default;
};

enum class DatasetFormat { Csv, Binary };

/// CSV:   "# csif v1 W=<int>" header, then
///        domain_id,location_id,sample_id,f0,...,f{W-1}   (LF line endings)
/// Binary: "CSIF", u16 version=1, u32 W, u64 count, then per sample
///        u16 domain, u32 location, u32 sample, W x f64; all little-endian.
FingerprintDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const FingerprintDataset& dataset, const std::filesystem::path& path, DatasetFormat format);
/// Csv unless the extension is .bin / .csif.
DatasetFormat format_from_path(const std::filesystem::path& path);

/// Parameters of the two-domain Gaussian-cluster generator.
///
/// Both domains place their class means inside one shared subspace of
/// smooth profiles over the W features (latent_rank directions, 0 =
/// max(M, N)). Each class gets its own direction in that subspace,
/// orthonormal within a domain when the rank allows, at radius
/// class_separation; neighbouring means therefore sit class_separation *
/// sqrt(2) apart. The target domain applies a smooth per-feature gain
/// 1 + domain_shift * g(f) and offset domain_shift * class_separation * o(f).
/// Samples are the class mean plus white Gaussian noise of std
/// cluster_spread, plus, when nuisance_rank > 0, fading-like variation of
/// std nuisance_scale along nuisance_rank smooth directions orthogonal to
/// the class subspace and shared by both domains.
struct SynthesisConfig {
  std::size_t W = 120;
  std::size_t M = 16;  // source locations
  std::size_t N = 18;  // target locations
  std::size_t samples_per_source_location = 600;
  std::size_t samples_per_target_location = 500;
  double cluster_spread = 1.0;
  double class_separation = 4.0;
  double domain_shift = 0.3;
  std::size_t latent_rank = 0;
  std::size_t nuisance_rank = 0;
  double nuisance_scale = 0.0;
  std::uint64_t seed = 0;

  std::size_t subspace_rank() const { return latent_rank ? latent_rank : std::max(M, N); }
  void validate() const;
};

/// Domain 0 = source (M locations), domain 1 = target (N locations).
FingerprintDataset synthesize(const SynthesisConfig& cfg);

struct ClassPool {
  int domain_id = 0;
  int location_id = 0;
  std::vector<CsiSample> samples;
  bool operator==(const ClassPool&) const = default;
};

struct SplitResult {
  std::size_t W = 0;
  std::size_t K = 0;
  std::size_t K_s = 0;
  int source_domain = 0;
  int target_domain = 1;
  std::vector<ClassPool> source_train;  // K_s per source location
  std::vector<ClassPool> target_train;  // K+1 per target location
  std::vector<ClassPool> target_test;   // the rest of each target location

  /// K_s * M + (K+1) * N
  std::size_t training_pool_size() const;
  std::size_t target_test_size() const;
  bool operator==(const SplitResult&) const = default;
};

/// Draws K+1 train shots per target location and K_s per source location,
/// uniformly without replacement. Every target location needs >= K+2 samples.
SplitResult split_target(const FingerprintDataset& dataset, std::size_t K, std::size_t K_s, std::uint64_t seed,
                         int source_domain = 0, int target_domain = 1);

/// Per-feature mean and (population) standard deviation, floored at 1e-8.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-8;

/// Statistics over source_train and target_train only.
FeatureStats fit_feature_stats(const SplitResult& split);
void standardize(std::vector<double>& features, const FeatureStats& stats);
/// z-scores every sample of the dataset with statistics fitted on the split's
/// training part.
FingerprintDataset normalize(const FingerprintDataset& dataset, const SplitResult& split);
/// Same statistics, applied to all three parts of the split.
SplitResult normalize(const SplitResult& split);

}  // namespace fsloc
