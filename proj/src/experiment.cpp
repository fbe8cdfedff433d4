#include "fsloc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "fsloc/episode.hpp"
#include "fsloc/error.hpp"
#include "fsloc/kernels.hpp"
#include "fsloc/variants.hpp"

namespace fsloc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs body(i) for i in [0, n) across threads; the first exception (lowest
// index) is rethrown after the loop.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ClassifierTraining classifier_opts(const RunConfig& cfg, std::size_t epochs) {
  ClassifierTraining o;
  o.epochs = epochs;
  o.batch = cfg.classifier_batch;
  o.adam = cfg.adam;
  return o;
}

std::vector<const CsiSample*> flatten(const std::vector<ClassPool>& pools) {
  std::vector<const CsiSample*> out;
  for (const auto& p : pools)
    for (const auto& s : p.samples) out.push_back(&s);
  return out;
}

bool finite(const Gradients& g) {
  return std::all_of(g.begin(), g.end(), [](const Tensor& t) { return t.all_finite(); });
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) kernels::set_num_threads(cfg.threads);
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  FingerprintDataset raw =
      cfg.dataset_path ? load_dataset(*cfg.dataset_path, format_from_path(*cfg.dataset_path)) : synthesize(cfg.synthesis);
  const std::size_t n_target = raw.domain(cfg.target_domain).num_locations();
  if (n_target != cfg.ways())
    throw ConfigError("N = " + std::to_string(cfg.ways()) + " but target domain " +
                      std::to_string(cfg.target_domain) + " has " + std::to_string(n_target) + " locations");
  SplitResult split = split_target(raw, cfg.K, cfg.K_s, cfg.seed, cfg.source_domain, cfg.target_domain);
  PreparedData d;
  d.dataset = normalize(raw, split);
  d.split = normalize(split);
  return d;
}

FewShotModel build_model(const RunConfig& cfg, std::size_t W) {
  ModelConfig mc = cfg.model;
  mc.extractor.W = W;
  return FewShotModel::create(mc, derive_seed(cfg.seed, "model"));
}

// ---------------------------------------------------------------------------
// Training

TrainedModel run_pretraining(const RunConfig& cfg, const PreparedData& data) {
  apply_threads(cfg);
  TrainedModel tm{build_model(cfg, data.split.W), Adam(cfg.adam), {}};
  const auto start = Clock::now();
  Rng rng(derive_seed(cfg.seed, "pretrain"));
  tm.report.pretrain = pretrain_extractor(tm.model.store(), tm.model.extractor(), data.split.source_train,
                                          classifier_opts(cfg, cfg.pretrain_epochs), rng);
  tm.report.wall_seconds = seconds_since(start);
  return tm;
}

namespace {

std::vector<EpisodeResult> compute_batch(const FewShotModel& model, const std::vector<Episode>& batch) {
  std::vector<EpisodeResult> results(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { results[i] = model.episode_gradients(batch[i]); });
  return results;
}

// Index of the first batch member with a non-finite loss or gradient.
std::optional<std::size_t> first_non_finite(const std::vector<EpisodeResult>& results) {
  for (std::size_t i = 0; i < results.size(); ++i)
    if (!std::isfinite(results[i].loss) || !finite(results[i].grads)) return i;
  return std::nullopt;
}

double apply_batch(FewShotModel& model, Adam& adam, const std::vector<EpisodeResult>& results) {
  Gradients total = model.store().zero_gradients();
  double loss = 0.0;
  for (const auto& r : results) {
    add_gradients(total, r.grads);
    loss += r.loss;
  }
  const double inv = 1.0 / static_cast<double>(results.size());
  scale_gradients(total, inv);
  for (const auto& r : results) apply_stat_updates(model.store(), r.stats, 0.1);
  adam.step(model.store(), total);
  return loss * inv;
}

double validation_loss(const FewShotModel& model, const std::vector<Episode>& episodes) {
  std::vector<double> losses(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) {
    ad::Tape tape;
    ForwardContext ctx(tape, model.store(), Mode::Eval);
    auto out = model.forward(ctx, episodes[i]);
    losses[i] = tape.value(model.loss(ctx, episodes[i], out)).item();
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

}  // namespace

double episode_batch_step(FewShotModel& model, Adam& adam, const std::vector<Episode>& batch,
                          std::vector<EpisodeResult>* results) {
  if (batch.empty()) throw std::invalid_argument("episode_batch_step: empty batch");
  auto r = compute_batch(model, batch);
  if (auto bad = first_non_finite(r))
    throw NumericalError("non-finite loss or gradient in batch member " + std::to_string(*bad));
  const double loss = apply_batch(model, adam, r);
  if (results) *results = std::move(r);
  return loss;
}

void train_episodes(TrainedModel& tm, const RunConfig& cfg, const SplitResult& split,
                    const std::optional<std::filesystem::path>& out) {
  apply_threads(cfg);
  const auto start = Clock::now();
  const std::size_t N = cfg.ways();
  Rng rng(derive_seed(cfg.seed, "episodes"));

  std::vector<Episode> validation;
  if (cfg.early_stop_patience > 0) {
    Rng vrng(derive_seed(cfg.seed, "validation"));
    for (std::size_t i = 0; i < cfg.validation_episodes; ++i)
      validation.push_back(sample_training_episode(split, N, cfg.K, vrng));
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  std::size_t done = 0, step = 0;
  while (done < cfg.episodes_total) {
    const std::size_t b = std::min(cfg.episode_batch, cfg.episodes_total - done);
    std::vector<Episode> batch;
    batch.reserve(b);
    for (std::size_t i = 0; i < b; ++i) batch.push_back(sample_training_episode(split, N, cfg.K, rng));

    auto results = compute_batch(tm.model, batch);
    if (auto bad = first_non_finite(results)) {
      std::string where;
      if (out) {
        const auto dump = *out / "nonfinite_episode.csv";
        dump_episode(batch[*bad], dump);
        where = "; episode dumped to " + dump.string();
      }
      throw NumericalError("non-finite loss at step " + std::to_string(step + 1) + " (episode " +
                           std::to_string(done + *bad) + ", loss " + std::to_string(results[*bad].loss) + ")" +
                           where);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < b; ++i)
      correct += argmax(results[i].probs.data()) == static_cast<std::size_t>(batch[i].query.episode_class);
    tm.report.loss_curve.push_back(apply_batch(tm.model, tm.adam, results));
    tm.report.batch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(b));
    done += b;
    ++step;

    if (out && cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0)
      save_checkpoint(make_checkpoint(tm, cfg), *out / ("snapshot_" + std::to_string(step) + ".fslm"));
    if (!validation.empty() && step % cfg.validation_every == 0) {
      const double v = validation_loss(tm.model, validation);
      if (v < best) {
        best = v;
        stale = 0;
      } else if (++stale >= cfg.early_stop_patience) {
        tm.report.early_stopped = true;
        break;
      }
    }
  }
  tm.report.episodes += done;
  tm.report.wall_seconds += seconds_since(start);
}

TrainedModel run_training(const RunConfig& cfg, const PreparedData& data,
                          const std::optional<std::filesystem::path>& out) {
  const auto start = Clock::now();
  TrainedModel tm = run_pretraining(cfg, data);
  Rng rng(derive_seed(cfg.seed, "finetune"));
  tm.report.finetune = finetune_extractor(tm.model.store(), tm.model.extractor(), data.split.target_train,
                                          classifier_opts(cfg, cfg.finetune_epochs), rng);
  if (cfg.freeze_extractor) tm.model.freeze_extractor(true);
  if (out) std::filesystem::create_directories(*out);
  train_episodes(tm, cfg, data.split, out);
  tm.report.wall_seconds = seconds_since(start);

  if (out) {
    save_checkpoint(make_checkpoint(tm, cfg), *out / "checkpoint.fslm");
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,episodes,loss,batch_accuracy\n";
    std::size_t seen = 0;
    for (std::size_t s = 0; s < tm.report.loss_curve.size(); ++s) {
      seen = std::min(cfg.episodes_total, seen + cfg.episode_batch);
      csv << s + 1 << ',' << seen << ',' << tm.report.loss_curve[s] << ',' << tm.report.batch_accuracy[s] << '\n';
    }
    write_text(*out / "loss_curve.csv", csv.str());
  }
  return tm;
}

Checkpoint make_checkpoint(const TrainedModel& tm, const RunConfig& cfg) {
  const auto& mc = tm.model.config();
  std::map<std::string, double> meta{
      {"ways", static_cast<double>(mc.gnn.ways)},
      {"shots", static_cast<double>(cfg.K)},
      {"variant", static_cast<double>(mc.gnn.variant)},
      {"W", static_cast<double>(mc.extractor.W)},
      {"d", static_cast<double>(mc.extractor.d)},
      {"layers", static_cast<double>(mc.gnn.layers)},
      {"seed", static_cast<double>(cfg.seed)},
      {"episodes", static_cast<double>(tm.report.episodes)},
  };
  return Checkpoint::capture(tm.model.store(), &tm.adam, meta);
}

TrainedModel restore_model(const Checkpoint& ckpt, const RunConfig& cfg, std::size_t W) {
  auto expect = [&](const char* key, double want, const std::string& what) {
    const auto have = ckpt.meta(key);
    if (have && *have != want)
      throw ConfigError("checkpoint " + what + " = " + std::to_string(static_cast<long long>(*have)) +
                        ", config has " + std::to_string(static_cast<long long>(want)));
  };
  expect("ways", static_cast<double>(cfg.ways()), "N");
  expect("shots", static_cast<double>(cfg.K), "K");
  expect("variant", static_cast<double>(cfg.model.gnn.variant), "variant index");
  expect("W", static_cast<double>(W), "W");
  TrainedModel tm{build_model(cfg, W), Adam(cfg.adam), {}};
  try {
    ckpt.restore(tm.model.store());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("checkpoint does not fit the configured model: ") + e.what());
  }
  if (auto adam = ckpt.restore_adam(tm.model.store())) tm.adam = std::move(*adam);
  tm.report.episodes = static_cast<std::size_t>(ckpt.meta_or("episodes", 0.0));
  return tm;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<std::size_t> EvalReport::draws_per_location() const {
  std::vector<std::size_t> out;
  for (const auto& row : confusion) out.push_back(std::accumulate(row.begin(), row.end(), std::size_t{0}));
  return out;
}

namespace {

using SampleKey = std::tuple<int, int, int>;
SampleKey key_of(const CsiSample& s) { return {s.domain_id, s.location_id, s.sample_id}; }

std::map<int, std::size_t> location_index(const std::vector<ClassPool>& pools) {
  std::map<int, std::size_t> idx;
  for (std::size_t c = 0; c < pools.size(); ++c) idx[pools[c].location_id] = c;
  return idx;
}

void finish(EvalReport& r) {
  r.accuracy = r.draws ? static_cast<double>(r.correct) / static_cast<double>(r.draws) : 0.0;
}

}  // namespace

EvalReport run_evaluation(const FewShotModel& model, const RunConfig& cfg, const SplitResult& split) {
  apply_threads(cfg);
  const auto start = Clock::now();
  const std::size_t N = model.config().gnn.ways;
  if (split.target_train.size() != N)
    throw ConfigError("model is " + std::to_string(N) + "-way but the target domain has " +
                      std::to_string(split.target_train.size()) + " locations");
  if (split.K != cfg.K) throw ConfigError("split K differs from config K");

  // Eval-mode phi is per sample, so embed every candidate node once.
  std::vector<const CsiSample*> all = flatten(split.target_train);
  const auto tests = flatten(split.target_test);
  all.insert(all.end(), tests.begin(), tests.end());
  if (tests.empty()) throw ConfigError("target_test is empty");
  const Tensor phi = model.embed(stack_features(all));
  std::map<SampleKey, std::size_t> row_of;
  for (std::size_t i = 0; i < all.size(); ++i) row_of[key_of(*all[i])] = i;
  const auto cls = location_index(split.target_train);

  EvalReport r;
  r.method = to_string(model.config().gnn.variant);
  r.ways = N;
  r.shots = cfg.K;
  r.draws = cfg.eval_draws;
  r.seed = cfg.seed;
  r.config = format_run_config(cfg);
  r.confusion.assign(N, std::vector<std::size_t>(N, 0));

  const std::uint64_t root = derive_seed(cfg.seed, "eval");
  const std::size_t d = phi.cols();
  std::vector<std::size_t> truth(r.draws), pred(r.draws);
  parallel_for(r.draws, [&](std::size_t i) {
    Rng rng(derive_seed(root, static_cast<std::uint64_t>(i)));
    const CsiSample& q = *tests[rng.below(tests.size())];
    const Episode ep = build_test_episode(split, q, N, cfg.K, rng);
    Tensor x({ep.total_nodes(), d});
    for (std::size_t n = 0; n < ep.total_nodes(); ++n) {
      const CsiSample& s = n < ep.support.size() ? ep.support[n].sample : ep.query.sample;
      const double* src = phi.ptr() + row_of.at(key_of(s)) * d;
      std::copy(src, src + d, x.ptr() + n * d);
    }
    pred[i] = argmax(model.predict_embedded(x, ep).data());
    truth[i] = cls.at(q.location_id);
  });
  for (std::size_t i = 0; i < r.draws; ++i) {
    ++r.confusion[truth[i]][pred[i]];
    r.correct += truth[i] == pred[i];
  }
  finish(r);
  r.wall_seconds = seconds_since(start);
  return r;
}

EvalReport run_cnn_baseline(const RunConfig& cfg, const PreparedData& data, std::size_t shots) {
  apply_threads(cfg);
  const auto start = Clock::now();
  const SplitResult& split = data.split;
  const std::size_t N = split.target_train.size();
  if (shots < 1) throw ConfigError("baseline needs at least one shot per location");

  std::vector<ClassPool> train = split.target_train;
  std::vector<ClassPool> test = split.target_test;
  for (std::size_t c = 0; c < N; ++c) {
    auto& tr = train[c].samples;
    auto& te = test[c].samples;
    if (shots <= tr.size()) {
      tr.resize(shots);
      continue;
    }
    const std::size_t extra = shots - tr.size();
    if (extra >= te.size())
      throw ConfigError("location " + std::to_string(train[c].location_id) + " has too few samples for " +
                        std::to_string(shots) + " shots");
    tr.insert(tr.end(), te.begin(), te.begin() + static_cast<std::ptrdiff_t>(extra));
    te.erase(te.begin(), te.begin() + static_cast<std::ptrdiff_t>(extra));
  }

  ParameterStore store;
  ExtractorConfig xc = cfg.model.extractor;
  xc.W = split.W;
  Rng init(derive_seed(cfg.seed, "cnn-init"));
  const FeatureExtractor fx = FeatureExtractor::create(store, "extractor", xc, init);
  Rng rng(derive_seed(cfg.seed, "cnn-train"));
  const ClassifierFit fit = fit_classifier(store, fx, train, classifier_opts(cfg, cfg.baseline_epochs), rng);

  const auto tests = flatten(test);
  const Tensor probs = classifier_probabilities(fit.store, fx, fit.head, stack_features(tests));
  const auto cls = location_index(train);

  EvalReport r;
  r.method = "cnn";
  r.ways = N;
  r.shots = shots;
  r.draws = cfg.eval_draws;
  r.seed = cfg.seed;
  r.config = format_run_config(cfg);
  r.confusion.assign(N, std::vector<std::size_t>(N, 0));
  Rng draw(derive_seed(cfg.seed, "cnn-eval"));
  for (std::size_t i = 0; i < r.draws; ++i) {
    const std::size_t j = draw.below(tests.size());
    const std::size_t p = argmax(std::span<const double>(probs.ptr() + j * N, N));
    const std::size_t t = cls.at(tests[j]->location_id);
    ++r.confusion[t][p];
    r.correct += p == t;
  }
  finish(r);
  r.wall_seconds = seconds_since(start);
  return r;
}

// ---------------------------------------------------------------------------
// Tables

std::string method_label(const std::string& method) {
  if (method == "cnn") return "CNN";
  Variant v;
  try {
    v = parse_variant(method);
  } catch (const std::exception&) {
    return method;
  }
  switch (v) {
    case Variant::Plain: return "GNN";
    case Variant::Attentive: return "Attentive GNN";
    case Variant::Egnn: return "EGNN";
    case Variant::ChebyNet: return "ChebyNet";
  }
  return method;
}

std::vector<TableCell> default_table_cells() {
  std::vector<TableCell> cells;
  for (const char* m : {"cnn", "plain", "attentive", "egnn", "chebynet"})
    for (std::size_t k : {1, 5, 10}) cells.push_back({m, k});
  return cells;
}

std::vector<TableResult> run_table(const RunConfig& cfg, const std::vector<TableCell>& cells, std::size_t seeds) {
  std::vector<TableResult> rows;
  for (const auto& cell : cells) {
    TableResult row;
    row.method = cell.method;
    row.K = cell.K;
    const auto start = Clock::now();
    try {
      for (std::size_t s = 0; s < seeds; ++s) {
        RunConfig c = cfg;
        c.seed = cfg.seed + s;
        c.synthesis.seed = cfg.synthesis.seed + s;
        c.K = cell.K;
        if (cell.method != "cnn") c.model.gnn.variant = parse_variant(cell.method);
        const PreparedData data = prepare_data(c);
        double acc = 0.0;
        if (cell.method == "cnn") {
          acc = run_cnn_baseline(c, data, c.K + 1).accuracy;
        } else {
          const TrainedModel tm = run_training(c, data);
          acc = run_evaluation(tm.model, c, data.split).accuracy;
        }
        row.seeds.push_back(c.seed);
        row.accuracies.push_back(acc);
      }
      row.mean_accuracy =
          std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / static_cast<double>(row.accuracies.size());
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.wall_seconds = seconds_since(start);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_table_markdown(const std::vector<TableResult>& rows, std::size_t ways) {
  std::vector<std::string> methods;
  std::vector<std::size_t> ks;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(ks.begin(), ks.end(), r.K) == ks.end()) ks.push_back(r.K);
  }
  std::sort(ks.begin(), ks.end());
  std::ostringstream o;
  o << "# Localization performance (classification accuracy in %)\n\n";
  if (rows.empty()) {
    o << "(no cells)\n";
    return o.str();
  }
  o << "| Method |";
  for (auto k : ks) o << ' ' << ways << "-way " << k << "-shot |";
  o << "\n|---|";
  for (std::size_t i = 0; i < ks.size(); ++i) o << "---|";
  o << '\n';
  for (const auto& m : methods) {
    o << "| " << method_label(m) << " |";
    for (auto k : ks) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const TableResult& r) { return r.method == m && r.K == k; });
      if (it == rows.end()) o << " |";
      else if (!it->error.empty()) o << " failed |";
      else {
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.2f |", 100.0 * it->mean_accuracy);
        o << buf;
      }
    }
    o << '\n';
  }
  o << "\n";
  double wall = 0.0;
  for (const auto& r : rows) wall += r.wall_seconds;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : rows)
    for (auto s : r.seeds)
      if (std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(s);
  o << "Seeds:";
  for (auto s : seeds) o << ' ' << s;
  char buf[64];
  std::snprintf(buf, sizeof buf, "\nWall time: %.1f s\n", wall);
  o << buf;
  for (const auto& r : rows)
    if (!r.error.empty()) o << "\nFailed: " << method_label(r.method) << " K=" << r.K << ": " << r.error << '\n';
  return o.str();
}

std::string format_table_csv(const std::vector<TableResult>& rows) {
  std::ostringstream o;
  o.precision(17);
  o << "method,K,seeds,mean_accuracy,accuracies,wall_seconds,error\n";
  for (const auto& r : rows) {
    o << r.method << ',' << r.K << ',';
    for (std::size_t i = 0; i < r.seeds.size(); ++i) o << (i ? ";" : "") << r.seeds[i];
    o << ',' << r.mean_accuracy << ',';
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) o << (i ? ";" : "") << r.accuracies[i];
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    o << ',' << r.wall_seconds << ',' << err << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Gradient check

bool GradCheckReport::passed() const {
  return std::all_of(variants.begin(), variants.end(), [](const VariantGradCheck& v) { return v.passed; });
}

std::string GradCheckReport::format() const {
  std::ostringstream o;
  char buf[256];
  for (const auto& v : variants) {
    for (const auto& p : v.parameters) {
      std::snprintf(buf, sizeof buf, "%-10s %-36s n=%-5zu max_rel_err=%.3e analytic=% .6e numeric=% .6e %s\n",
                    to_string(v.variant).c_str(), p.name.c_str(), p.coordinates, p.result.max_rel_error,
                    p.result.analytic, p.result.numeric, p.result.max_rel_error < tolerance ? "ok" : "FAIL");
      o << buf;
    }
    std::snprintf(buf, sizeof buf, "%-10s worst %.3e (tolerance %.0e) %s\n", to_string(v.variant).c_str(),
                  v.max_rel_error, tolerance, v.passed ? "PASS" : "FAIL");
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s in %.1f s\n", passed() ? "PASS" : "FAIL", wall_seconds);
  o << buf;
  return o.str();
}

GradCheckReport run_gradcheck(const GradCheckOptions& opts) {
  const auto start = Clock::now();
  SynthesisConfig sc;
  sc.W = 8;
  sc.M = 3;
  sc.N = 3;
  sc.samples_per_source_location = 6;
  sc.samples_per_target_location = 6;
  sc.latent_rank = 2;
  sc.seed = opts.seed;
  const FingerprintDataset ds = synthesize(sc);
  const SplitResult split = normalize(split_target(ds, 1, 4, opts.seed));

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  for (Variant v : kAllVariants) {
    ModelConfig mc;
    mc.extractor.W = 8;
    mc.extractor.channels = 4;
    mc.extractor.d = 4;
    mc.gnn.ways = 3;
    mc.gnn.layers = 1;
    mc.gnn.edge_hidden = {8, 4};
    mc.gnn.variant = v;
    mc.gnn.lambda_max = 2.0;
    FewShotModel model = FewShotModel::create(mc, derive_seed(opts.seed, to_string(v)));
    Rng rng(derive_seed(opts.seed, "episode"));
    const Episode ep = sample_training_episode(split, 3, 1, rng);

    EpisodeResult r = model.episode_gradients(ep);
    if (opts.inject_sign_error) {
      auto& g = r.grads[model.gnn().node_weight_slot(0)];
      for (auto& x : g.data()) x = -x;
    }
    auto loss = [&](const ParameterStore& store) {
      ad::Tape tape;
      ForwardContext ctx(tape, store, Mode::Train);
      const auto out = model.forward(ctx, ep);
      return tape.value(model.loss(ctx, ep, out)).item();
    };
    VariantGradCheck vc;
    vc.variant = v;
    vc.parameters = check_parameter_gradients(model.store(), loss, r.grads, opts.eps);
    for (const auto& p : vc.parameters) vc.max_rel_error = std::max(vc.max_rel_error, p.result.max_rel_error);
    vc.passed = vc.max_rel_error < opts.tolerance;
    report.variants.push_back(std::move(vc));
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof buf, "method %s, %zu-way %zu-shot: accuracy %.4f (%zu/%zu), seed %llu, %.2f s\n",
                r.method.c_str(), r.ways, r.shots, r.accuracy, r.correct, r.draws,
                static_cast<unsigned long long>(r.seed), r.wall_seconds);
  o << buf << "confusion (rows = true location, columns = predicted):\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) o << (j ? " " : "") << row[j];
    o << '\n';
  }
  return o.str();
}

std::string eval_report_csv(const EvalReport& r) {
  std::ostringstream o;
  o.precision(17);
  o << "method,ways,shots,draws,correct,accuracy,seed,wall_seconds\n"
    << r.method << ',' << r.ways << ',' << r.shots << ',' << r.draws << ',' << r.correct << ',' << r.accuracy << ','
    << r.seed << ',' << r.wall_seconds << "\n\ntrue_location";
  for (std::size_t j = 0; j < r.confusion.size(); ++j) o << ",pred_" << j;
  o << '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    o << i;
    for (auto c : r.confusion[i]) o << ',' << c;
    o << '\n';
  }
  return o.str();
}

}  // namespace fsloc
