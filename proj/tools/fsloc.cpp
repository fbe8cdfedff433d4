// fsloc: train, evaluate and compare few-shot GNN localization models.
#include <iostream>
#include <optional>
#include <sstream>

#include "cli_common.hpp"
#include "fsloc/experiment.hpp"
#include "fsloc/kernels.hpp"

using namespace fsloc;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<std::size_t> k;
  std::optional<std::size_t> draws;
  std::optional<int> threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "INI run configuration");
    app->add_option("--seed", seed, "root seed (overrides config)");
    app->add_option("--out", out, "output directory or file");
    app->add_option("--variant", variant, "plain|attentive|egnn|chebynet");
    app->add_option("--k", k, "shots per class");
    app->add_option("--draws", draws, "evaluation draws");
    app->add_option("--threads", threads, "OpenMP threads (0 = default)");
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? parse_run_config("") : load_run_config(config);
    if (seed) {
      // The synthetic data follows the root seed unless pinned in the file.
      if (c.synthesis.seed == c.seed) c.synthesis.seed = *seed;
      c.seed = *seed;
    }
    if (out) c.out = *out;
    if (variant) c.model.gnn.variant = parse_variant(*variant);
    if (k) c.K = *k;
    if (draws) c.eval_draws = *draws;
    if (threads) c.threads = *threads;
    c.validate();
    if (c.threads > 0) kernels::set_num_threads(c.threads);
    return c;
  }
};

void save_report(const EvalReport& r, const std::filesystem::path& dir) {
  write_text(dir / "report.csv", eval_report_csv(r));
  write_text(dir / "report.md", "```\n" + format_eval_report(r) + "```\n");
}

void print_training(const TrainingReport& r) {
  std::printf("pretrain: head accuracy %.4f\n", r.pretrain.accuracy);
  std::printf("finetune: head accuracy %.4f -> %.4f\n", r.finetune.accuracy_before, r.finetune.accuracy);
  if (!r.loss_curve.empty())
    std::printf("episodes %zu, steps %zu, final batch loss %.5f%s\n", r.episodes, r.loss_curve.size(),
                r.loss_curve.back(), r.early_stopped ? " (early stop)" : "");
  std::printf("wall time %.1f s\n", r.wall_seconds);
}

std::vector<TableCell> parse_cells(const std::string& spec) {
  std::vector<TableCell> cells;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("cell '" + item + "' is not method:K");
    TableCell c{item.substr(0, colon), 0};
    try {
      c.K = std::stoul(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("cell '" + item + "' has a bad K");
    }
    if (c.method != "cnn") parse_variant(c.method);
    cells.push_back(c);
  }
  return cells;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNN few-shot transfer learning for CSI fingerprint localization"};
  app.require_subcommand(1);

  Common synth_o, pre_o, train_o, eval_o, base_o, table_o;
  auto* synth = app.add_subcommand("synth", "synthesize the configured dataset");
  synth_o.attach(synth);
  auto* pretrain = app.add_subcommand("pretrain", "pretrain the feature extractor on the source domain");
  pre_o.attach(pretrain);
  auto* train = app.add_subcommand("train", "pretrain, fine-tune and train episodically");
  train_o.attach(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on target test draws");
  eval_o.attach(eval);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint.fslm (default <out>/checkpoint.fslm)");
  auto* baseline = app.add_subcommand("baseline", "CNN trained on target shots only");
  base_o.attach(baseline);
  std::optional<std::size_t> shots;
  baseline->add_option("--shots", shots, "samples per location (default K+1)");
  auto* table = app.add_subcommand("table", "methods x shots accuracy table");
  table_o.attach(table);
  std::size_t seeds = 5;
  std::optional<std::string> cells;
  table->add_option("--seeds", seeds, "seeds per cell");
  table->add_option("--cells", cells, "comma list of method:K (default: full table)");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every variant");
  GradCheckOptions gc;
  gradcheck->add_flag("--inject-sign-error", gc.inject_sign_error, "negative control");
  gradcheck->add_option("--seed", gc.seed, "seed of the tiny problem");

  if (int rc = cli::parse_cli(app, argc, argv); rc != cli::kOk) return rc < 0 ? cli::kOk : rc;

  return cli::guarded([&]() -> int {
    if (*synth) {
      const RunConfig c = synth_o.load();
      const auto path = synth_o.out ? std::filesystem::path(*synth_o.out) : c.out / "dataset.csv";
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      const auto ds = synthesize(c.synthesis);
      save_dataset(ds, path, format_from_path(path));
      std::printf("wrote %zu samples (W=%zu) to %s\n", ds.sample_count(), ds.W, path.string().c_str());
      return cli::kOk;
    }
    if (*pretrain) {
      const RunConfig c = pre_o.load();
      const auto data = prepare_data(c);
      const auto tm = run_pretraining(c, data);
      std::filesystem::create_directories(c.out);
      save_checkpoint(make_checkpoint(tm, c), c.out / "checkpoint.fslm");
      std::printf("source head accuracy %.4f, wrote %s\n", tm.report.pretrain.accuracy,
                  (c.out / "checkpoint.fslm").string().c_str());
      return cli::kOk;
    }
    if (*train) {
      const RunConfig c = train_o.load();
      const auto data = prepare_data(c);
      std::printf("training pool %zu samples (%zu source + %zu target)\n", data.split.training_pool_size(),
                  c.K_s * data.split.source_train.size(), (c.K + 1) * data.split.target_train.size());
      const auto tm = run_training(c, data, c.out);
      print_training(tm.report);
      const auto r = run_evaluation(tm.model, c, data.split);
      save_report(r, c.out);
      std::cout << format_eval_report(r);
      return cli::kOk;
    }
    if (*eval) {
      const RunConfig c = eval_o.load();
      const auto data = prepare_data(c);
      const auto path = checkpoint.empty() ? c.out / "checkpoint.fslm" : std::filesystem::path(checkpoint);
      const auto tm = restore_model(load_checkpoint(path), c, data.split.W);
      const auto r = run_evaluation(tm.model, c, data.split);
      save_report(r, c.out);
      std::cout << format_eval_report(r);
      return cli::kOk;
    }
    if (*baseline) {
      const RunConfig c = base_o.load();
      const auto data = prepare_data(c);
      const auto r = run_cnn_baseline(c, data, shots.value_or(c.K + 1));
      save_report(r, c.out);
      std::cout << format_eval_report(r);
      return cli::kOk;
    }
    if (*table) {
      const RunConfig c = table_o.load();
      const auto list = cells ? parse_cells(*cells) : default_table_cells();
      const auto rows = run_table(c, list, seeds);
      write_text(c.out / "report.md", format_table_markdown(rows, c.ways()));
      write_text(c.out / "report.csv", format_table_csv(rows));
      std::cout << format_table_markdown(rows, c.ways());
      return cli::kOk;
    }
    if (*gradcheck) {
      const auto report = run_gradcheck(gc);
      std::cout << report.format();
      return report.passed() ? cli::kOk : cli::kNumerical;
    }
    return cli::kConfig;
  });
}
