// csidata: synthesize CSI fingerprint datasets and split them.
#include <algorithm>
#include <cstdio>

#include "cli_common.hpp"
#include "fsloc/csi_data.hpp"
#include "fsloc/run_config.hpp"

using namespace fsloc;

namespace {

FingerprintDataset as_dataset(std::size_t W, const std::vector<ClassPool>& pools) {
  FingerprintDataset ds;
  ds.W = W;
  for (const auto& p : pools) {
    auto it = std::find_if(ds.domains.begin(), ds.domains.end(),
                           [&](const DomainTable& d) { return d.domain_id == p.domain_id; });
    if (it == ds.domains.end()) {
      ds.domains.push_back({p.domain_id, {}});
      it = ds.domains.end() - 1;
    }
    if (it->locations.size() <= static_cast<std::size_t>(p.location_id)) it->locations.resize(p.location_id + 1);
    it->locations[p.location_id] = p.samples;
  }
  return ds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI fingerprint dataset tool"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "synthesize a two-domain dataset from the [data] section");
  std::string config, out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", config, "INI run configuration")->required();
  synth->add_option("--out", out, "dataset path (.csv, .bin or .csif)")->required();
  synth->add_option("--seed", synth_seed, "synthesis seed (overrides config)");

  auto* split = app.add_subcommand("split", "split a dataset into source_train, target_train and target_test");
  std::string in, out_dir = ".";
  std::size_t k = 5, ks = 600;
  std::uint64_t seed = 1;
  int source = 0, target = 1;
  split->add_option("--in", in, "input dataset")->required();
  split->add_option("--k", k, "shots K (K+1 target samples kept per location)")->required();
  split->add_option("--ks", ks, "source samples per location")->required();
  split->add_option("--seed", seed, "split seed")->required();
  split->add_option("--out", out_dir, "output directory");
  split->add_option("--source", source, "source domain id");
  split->add_option("--target", target, "target domain id");

  if (int rc = cli::parse_cli(app, argc, argv); rc != cli::kOk) return rc < 0 ? cli::kOk : rc;

  return cli::guarded([&]() -> int {
    if (*synth) {
      RunConfig c = load_run_config(config);
      if (synth_seed) c.synthesis.seed = *synth_seed;
      c.synthesis.validate();
      const auto ds = synthesize(c.synthesis);
      const std::filesystem::path path(out);
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      save_dataset(ds, path, format_from_path(path));
      std::printf("wrote %zu samples (W=%zu, %zu domains) to %s\n", ds.sample_count(), ds.W, ds.domains.size(),
                  out.c_str());
      return cli::kOk;
    }
    const std::filesystem::path path(in);
    const auto ds = load_dataset(path, format_from_path(path));
    const auto s = split_target(ds, k, ks, seed, source, target);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const auto ext = path.extension().string().empty() ? std::string(".csv") : path.extension().string();
    save_dataset(as_dataset(s.W, s.source_train), dir / ("source_train" + ext), format_from_path(path));
    save_dataset(as_dataset(s.W, s.target_train), dir / ("target_train" + ext), format_from_path(path));
    save_dataset(as_dataset(s.W, s.target_test), dir / ("target_test" + ext), format_from_path(path));
    std::printf("training pool %zu samples, target test %zu samples\n", s.training_pool_size(), s.target_test_size());
    return cli::kOk;
  });
}
