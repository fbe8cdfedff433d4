#include "fsloc/csi_data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "fsloc/error.hpp"
#include "fsloc/rng.hpp"

namespace fsloc {

std::size_t DomainTable::sample_count() const {
  std::size_t n = 0;
  for (const auto& loc : locations) n += loc.size();
  return n;
}

std::size_t FingerprintDataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.sample_count();
  return n;
}

const DomainTable& FingerprintDataset::domain(int domain_id) const {
  for (const auto& d : domains)
    if (d.domain_id == domain_id) return d;
  throw std::out_of_range("dataset has no domain " + std::to_string(domain_id));
}

void FingerprintDataset::validate() const {
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& d : domains) {
    for (std::size_t l = 0; l < d.locations.size(); ++l) {
      if (d.locations[l].empty())
        throw ParseError("domain " + std::to_string(d.domain_id) + " location " + std::to_string(l) +
                             " has no samples",
                         0);
      for (const auto& s : d.locations[l]) {
        if (s.features.size() != W)
          throw ParseError("sample has " + std::to_string(s.features.size()) + " features, expected " +
                               std::to_string(W),
                           0);
        if (!std::all_of(s.features.begin(), s.features.end(), [](double v) { return std::isfinite(v); }))
          throw ParseError("non-finite feature value", 0);
        if (s.domain_id != d.domain_id || s.location_id != static_cast<int>(l))
          throw ParseError("sample filed under the wrong domain/location", 0);
        if (!seen.insert({s.domain_id, s.location_id, s.sample_id}).second)
          throw ParseError("duplicate (domain, location, sample) triple", 0);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// file I/O

DatasetFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".bin" || ext == ".csif") ? DatasetFormat::Binary : DatasetFormat::Csv;
}

namespace {

// Collects samples in file order and assembles the domain tables.
class DatasetBuilder {
 public:
  explicit DatasetBuilder(std::size_t W) : W_(W) {}

  void add(CsiSample s, std::size_t line) {
    if (s.domain_id < 0 || s.location_id < 0) throw ParseError("negative domain or location id", line);
    if (!seen_.insert({s.domain_id, s.location_id, s.sample_id}).second)
      throw ParseError("duplicate (domain, location, sample) triple", line);
    auto& locs = by_domain_[s.domain_id];
    if (locs.size() <= static_cast<std::size_t>(s.location_id)) locs.resize(s.location_id + 1);
    locs[s.location_id].push_back(std::move(s));
  }

  FingerprintDataset finish() {
    FingerprintDataset ds;
    ds.W = W_;
    for (auto& [id, locs] : by_domain_) {
      for (std::size_t l = 0; l < locs.size(); ++l)
        if (locs[l].empty())
          throw ParseError("domain " + std::to_string(id) + " location " + std::to_string(l) + " has no samples",
                           0);
      ds.domains.push_back({id, std::move(locs)});
    }
    return ds;
  }

 private:
  std::size_t W_;
  std::set<std::tuple<int, int, int>> seen_;
  std::map<int, std::vector<std::vector<CsiSample>>> by_domain_;
};

template <class T>
T parse_number(std::string_view field, std::size_t line) {
  T v{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError("not a number: '" + std::string(field) + "'", line);
  return v;
}

FingerprintDataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty file", 1);
  constexpr std::string_view kPrefix = "# csif v1 W=";
  if (line.rfind(kPrefix, 0) != 0) throw ParseError("missing '# csif v1 W=<int>' header", 1);
  const auto W = parse_number<std::size_t>(std::string_view(line).substr(kPrefix.size()), 1);
  if (W == 0) throw ParseError("W must be positive", 1);

  DatasetBuilder builder(W);
  std::size_t lineno = 1;
  std::vector<std::string_view> fields;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != W + 3)
      throw ParseError("expected " + std::to_string(W + 3) + " columns, found " + std::to_string(fields.size()),
                       lineno);
    CsiSample s;
    s.domain_id = parse_number<int>(fields[0], lineno);
    s.location_id = parse_number<int>(fields[1], lineno);
    s.sample_id = parse_number<int>(fields[2], lineno);
    s.features.resize(W);
    for (std::size_t i = 0; i < W; ++i) {
      s.features[i] = parse_number<double>(fields[i + 3], lineno);
      if (!std::isfinite(s.features[i])) throw ParseError("non-finite feature value", lineno);
    }
    builder.add(std::move(s), lineno);
  }
  return builder.finish();
}

void save_csv(const FingerprintDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "# csif v1 W=" << ds.W << '\n';
  char buf[64];
  for (const auto& d : ds.domains)
    for (const auto& loc : d.locations)
      for (const auto& s : loc) {
        os << s.domain_id << ',' << s.location_id << ',' << s.sample_id;
        for (double v : s.features) {
          // Shortest representation that round-trips exactly.
          auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
          os << ',';
          os.write(buf, end - buf);
        }
        os << '\n';
      }
  if (!os) throw IoError("failed writing " + path.string());
}

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ParseError("binary dataset truncated", 0);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

FingerprintDataset load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CSIF", 4) != 0) throw ParseError("missing CSIF magic", 0);
  if (get_le<std::uint16_t>(is) != 1) throw ParseError("unsupported CSIF version", 0);
  const auto W = get_le<std::uint32_t>(is);
  const auto count = get_le<std::uint64_t>(is);
  DatasetBuilder builder(W);
  for (std::uint64_t r = 0; r < count; ++r) {
    CsiSample s;
    s.domain_id = get_le<std::uint16_t>(is);
    s.location_id = static_cast<int>(get_le<std::uint32_t>(is));
    s.sample_id = static_cast<int>(get_le<std::uint32_t>(is));
    s.features.resize(W);
    for (auto& v : s.features) v = get_le<double>(is);
    // Record index (1-based) stands in for a line number.
    builder.add(std::move(s), r + 1);
  }
  return builder.finish();
}

void save_binary(const FingerprintDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write("CSIF", 4);
  put_le<std::uint16_t>(os, 1);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.W));
  put_le<std::uint64_t>(os, ds.sample_count());
  for (const auto& d : ds.domains)
    for (const auto& loc : d.locations)
      for (const auto& s : loc) {
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.domain_id));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.location_id));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.sample_id));
        for (double v : s.features) put_le<double>(os, v);
      }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

FingerprintDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  return format == DatasetFormat::Csv ? load_csv(path) : load_binary(path);
}

void save_dataset(const FingerprintDataset& dataset, const std::filesystem::path& path, DatasetFormat format) {
  if (dataset.sample_count() == 0) throw IoError("dataset has no samples");
  if (format == DatasetFormat::Csv)
    save_csv(dataset, path);
  else
    save_binary(dataset, path);
}

// ---------------------------------------------------------------------------
// synthesis

void SynthesisConfig::validate() const {
  if (W == 0 || M == 0 || N == 0 || samples_per_source_location == 0 || samples_per_target_location == 0)
    throw ConfigError("synthesis counts must all be >= 1");
  if (subspace_rank() > W)
    throw ConfigError("latent subspace rank " + std::to_string(subspace_rank()) + " exceeds W = " + std::to_string(W));
  if (!(cluster_spread > 0.0) || !(class_separation > 0.0))
    throw ConfigError("cluster_spread and class_separation must be > 0");
  if (!(domain_shift >= 0.0)) throw ConfigError("domain_shift must be >= 0");
  if (subspace_rank() + nuisance_rank > W) throw ConfigError("latent_rank + nuisance_rank exceeds W");
  if (!(nuisance_scale >= 0.0)) throw ConfigError("nuisance_scale must be >= 0");
}

namespace {

// Gram-Schmidt on the columns of a row-major W x r matrix.
std::vector<double> orthonormalize(std::vector<double> A, std::size_t W) {
  const std::size_t r = A.size() / W;
  std::vector<double> B(W * r);
  for (std::size_t k = 0; k < r; ++k) {
    std::vector<double> v(W);
    for (std::size_t i = 0; i < W; ++i) v[i] = A[i * r + k];
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0.0;
      for (std::size_t i = 0; i < W; ++i) d += v[i] * B[i * r + j];
      for (std::size_t i = 0; i < W; ++i) v[i] -= d * B[i * r + j];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < W; ++i) B[i * r + k] = v[i] / nrm;
  }
  return B;
}

// Gaussian noise low-passed along the feature axis (CSI magnitudes vary
// smoothly across neighbouring subcarriers).
std::vector<double> smooth_noise(std::size_t W, double width, Rng& rng) {
  std::vector<double> raw(W), out(W, 0.0);
  for (auto& x : raw) x = rng.normal();
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(3.0 * width));
  for (std::size_t i = 0; i < W; ++i) {
    double acc = 0.0, norm = 0.0;
    for (std::ptrdiff_t o = -reach; o <= reach; ++o) {
      const auto j = static_cast<std::ptrdiff_t>(i) + o;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(W)) continue;
      const double k = std::exp(-0.5 * static_cast<double>(o * o) / (width * width));
      acc += k * raw[static_cast<std::size_t>(j)];
      norm += k * k;
    }
    out[i] = acc / std::sqrt(norm);  // unit variance per feature
  }
  return out;
}

// Orthonormal columns (W x r) spanning smooth profiles.
std::vector<double> smooth_basis(std::size_t W, std::size_t r, double width, Rng& rng) {
  std::vector<double> A(W * r);
  for (std::size_t k = 0; k < r; ++k) {
    const auto v = smooth_noise(W, width, rng);
    for (std::size_t i = 0; i < W; ++i) A[i * r + k] = v[i];
  }
  return orthonormalize(std::move(A), W);
}

// Orthonormal columns (W x r) from Gaussian draws.
std::vector<double> random_basis(std::size_t W, std::size_t r, Rng& rng) {
  std::vector<double> A(W * r);
  for (auto& x : A) x = rng.normal();
  return orthonormalize(std::move(A), W);
}

// Class means for one domain: `count` directions inside the latent
// subspace, orthonormal when the subspace is wide enough, otherwise random
// unit vectors. Pairwise mean distance is separation * sqrt(2) in the
// orthonormal case.
std::vector<std::vector<double>> class_means(const std::vector<double>& B, std::size_t W, std::size_t r,
                                             std::size_t count, double separation, Rng& rng) {
  std::vector<double> Z;
  if (count <= r) {
    Z = random_basis(r, count, rng);
  } else {
    Z.resize(r * count);
    for (std::size_t c = 0; c < count; ++c) {
      double nrm = 0.0;
      for (std::size_t k = 0; k < r; ++k) {
        Z[k * count + c] = rng.normal();
        nrm += Z[k * count + c] * Z[k * count + c];
      }
      for (std::size_t k = 0; k < r; ++k) Z[k * count + c] /= std::sqrt(nrm);
    }
  }
  std::vector<std::vector<double>> means(count, std::vector<double>(W, 0.0));
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t k = 0; k < r; ++k) means[c][i] += separation * B[i * r + k] * Z[k * count + c];
  return means;
}

// Smooth directions orthogonal to the r columns of B.
std::vector<double> nuisance_basis(const std::vector<double>& B, std::size_t W, std::size_t r, std::size_t q,
                                   double width, Rng& rng) {
  std::vector<double> A(W * (r + q));
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t k = 0; k < r; ++k) A[i * (r + q) + k] = B[i * r + k];
  for (std::size_t k = 0; k < q; ++k) {
    const auto v = smooth_noise(W, width, rng);
    for (std::size_t i = 0; i < W; ++i) A[i * (r + q) + r + k] = v[i];
  }
  A = orthonormalize(std::move(A), W);
  std::vector<double> U(W * q);
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t k = 0; k < q; ++k) U[i * q + k] = A[i * (r + q) + r + k];
  return U;
}

struct Nuisance {
  std::vector<double> U;  // W x q
  std::size_t q = 0;
  double scale = 0.0;
};

DomainTable sample_domain(int id, const std::vector<std::vector<double>>& means, std::size_t per_location,
                          double spread, const Nuisance& nz, Rng& rng) {
  DomainTable d;
  d.domain_id = id;
  d.locations.resize(means.size());
  for (std::size_t l = 0; l < means.size(); ++l) {
    auto& loc = d.locations[l];
    loc.reserve(per_location);
    for (std::size_t s = 0; s < per_location; ++s) {
      CsiSample smp;
      smp.domain_id = id;
      smp.location_id = static_cast<int>(l);
      smp.sample_id = static_cast<int>(s);
      smp.features = means[l];
      for (auto& v : smp.features) v += spread * rng.normal();
      for (std::size_t k = 0; k < nz.q; ++k) {
        const double a = nz.scale * rng.normal();
        for (std::size_t i = 0; i < smp.features.size(); ++i) smp.features[i] += a * nz.U[i * nz.q + k];
      }
      loc.push_back(std::move(smp));
    }
  }
  return d;
}

}  // namespace

FingerprintDataset synthesize(const SynthesisConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synthesize"));
  const std::size_t W = cfg.W, r = cfg.subspace_rank();
  // Profiles about W / (4 r) features wide leave room for r independent
  // smooth directions.
  const double width = std::clamp(0.25 * static_cast<double>(W) / static_cast<double>(r), 0.5, 4.0);
  const auto basis = smooth_basis(W, r, width, rng);
  const auto source_means = class_means(basis, W, r, cfg.M, cfg.class_separation, rng);
  auto target_means = class_means(basis, W, r, cfg.N, cfg.class_separation, rng);

  // Target environment: a smooth per-feature gain 1 + shift * g(f) and a
  // smooth offset shift * separation * o(f), standing in for the different
  // frequency-selective multipath of another room.
  const double shift = cfg.domain_shift;
  const auto gain = smooth_noise(W, width, rng);
  const auto offset = smooth_noise(W, width, rng);
  for (auto& mu : target_means)
    for (std::size_t i = 0; i < W; ++i)
      mu[i] = (1.0 + shift * gain[i]) * mu[i] + shift * cfg.class_separation * offset[i];

  Nuisance nz;
  if (cfg.nuisance_rank > 0) {
    nz.q = cfg.nuisance_rank;
    nz.scale = cfg.nuisance_scale;
    nz.U = nuisance_basis(basis, W, r, nz.q, width, rng);
  }

  FingerprintDataset ds;
  ds.W = W;
  ds.domains.push_back(sample_domain(0, source_means, cfg.samples_per_source_location, cfg.cluster_spread, nz, rng));
  ds.domains.push_back(sample_domain(1, target_means, cfg.samples_per_target_location, cfg.cluster_spread, nz, rng));
  return ds;
}

// ---------------------------------------------------------------------------
// split + normalization

std::size_t SplitResult::training_pool_size() const {
  std::size_t n = 0;
  for (const auto& p : source_train) n += p.samples.size();
  for (const auto& p : target_train) n += p.samples.size();
  return n;
}

std::size_t SplitResult::target_test_size() const {
  std::size_t n = 0;
  for (const auto& p : target_test) n += p.samples.size();
  return n;
}

SplitResult split_target(const FingerprintDataset& dataset, std::size_t K, std::size_t K_s, std::uint64_t seed,
                         int source_domain, int target_domain) {
  if (source_domain == target_domain) throw ConfigError("source and target domain must differ");
  if (K == 0 || K_s == 0) throw ConfigError("K and K_s must be >= 1");
  const auto& src = dataset.domain(source_domain);
  const auto& tgt = dataset.domain(target_domain);
  Rng rng(derive_seed(seed, "split"));

  SplitResult out;
  out.W = dataset.W;
  out.K = K;
  out.K_s = K_s;
  out.source_domain = source_domain;
  out.target_domain = target_domain;

  for (std::size_t l = 0; l < tgt.locations.size(); ++l) {
    const auto& samples = tgt.locations[l];
    if (samples.size() < K + 2)
      throw ConfigError("target location " + std::to_string(l) + " has " + std::to_string(samples.size()) +
                        " samples; need at least K+2 = " + std::to_string(K + 2));
    auto picked = rng.choose(samples.size(), K + 1);
    std::vector<bool> in_train(samples.size(), false);
    ClassPool train{target_domain, static_cast<int>(l), {}}, test{target_domain, static_cast<int>(l), {}};
    for (std::size_t i : picked) {
      in_train[i] = true;
      train.samples.push_back(samples[i]);
    }
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (!in_train[i]) test.samples.push_back(samples[i]);
    out.target_train.push_back(std::move(train));
    out.target_test.push_back(std::move(test));
  }
  for (std::size_t l = 0; l < src.locations.size(); ++l) {
    const auto& samples = src.locations[l];
    if (samples.size() < K_s)
      throw ConfigError("source location " + std::to_string(l) + " has " + std::to_string(samples.size()) +
                        " samples; need K_s = " + std::to_string(K_s));
    ClassPool pool{source_domain, static_cast<int>(l), {}};
    for (std::size_t i : rng.choose(samples.size(), K_s)) pool.samples.push_back(samples[i]);
    out.source_train.push_back(std::move(pool));
  }
  return out;
}

FeatureStats fit_feature_stats(const SplitResult& split) {
  const std::size_t W = split.W;
  FeatureStats st{std::vector<double>(W, 0.0), std::vector<double>(W, 0.0)};
  std::size_t n = 0;
  auto each = [&](auto&& fn) {
    for (const auto* pools : {&split.source_train, &split.target_train})
      for (const auto& p : *pools)
        for (const auto& s : p.samples) fn(s);
  };
  each([&](const CsiSample& s) {
    ++n;
    for (std::size_t i = 0; i < W; ++i) st.mean[i] += s.features[i];
  });
  if (n == 0) throw ConfigError("cannot normalize: no training samples");
  for (auto& m : st.mean) m /= static_cast<double>(n);
  each([&](const CsiSample& s) {
    for (std::size_t i = 0; i < W; ++i) {
      const double d = s.features[i] - st.mean[i];
      st.stddev[i] += d * d;
    }
  });
  for (auto& v : st.stddev) v = std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor);
  return st;
}

void standardize(std::vector<double>& features, const FeatureStats& stats) {
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = (features[i] - stats.mean[i]) / stats.stddev[i];
}

FingerprintDataset normalize(const FingerprintDataset& dataset, const SplitResult& split) {
  const auto stats = fit_feature_stats(split);
  FingerprintDataset out = dataset;
  for (auto& d : out.domains)
    for (auto& loc : d.locations)
      for (auto& s : loc) standardize(s.features, stats);
  return out;
}

SplitResult normalize(const SplitResult& split) {
  const auto stats = fit_feature_stats(split);
  SplitResult out = split;
  for (auto* pools : {&out.source_train, &out.target_train, &out.target_test})
    for (auto& p : *pools)
      for (auto& s : p.samples) standardize(s.features, stats);
  return out;
}

}  // namespace fsloc
