// Acceptance run: prints one PASS/FAIL line per criterion on stdout and
// progress detail on stderr. Arguments select criteria by number (default all).
#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsloc/experiment.hpp"
#include "fsloc/kernels.hpp"
#include "fsloc/variants.hpp"

using namespace fsloc;
using namespace fsloc::ad;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates failures; the first few are kept for the summary line.
struct Checker {
  std::size_t checks = 0, failures = 0;
  std::vector<std::string> first;
  void operator()(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (first.size() < 3) first.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    Outcome o{failures == 0, summary + ", " + std::to_string(checks) + " checks"};
    for (const auto& f : first) o.detail += "; " + f;
    if (failures > first.size()) o.detail += "; ... " + std::to_string(failures) + " failures";
    return o;
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

RunConfig shipped(const char* name) {
  return load_run_config(std::filesystem::path(FSLOC_SOURCE_DIR) / "configs" / name);
}

Tensor random_stochastic(std::size_t n, Rng& r) {
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (a.at(i, j) = std::exp(2 * r.normal()));
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) /= z;
  }
  return a;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  const GradCheckReport r = run_gradcheck();
  const double wall = since(start);
  std::fputs(r.format().c_str(), stderr);
  double worst = 0;
  std::string per;
  for (const auto& v : r.variants) {
    worst = std::max(worst, v.max_rel_error);
    per += " " + to_string(v.variant) + fmt("=%.1e", v.max_rel_error);
  }
  return {r.passed() && r.variants.size() == 4 && wall < 120.0,
          "max rel error" + per + fmt(" (< 1e-4), %.1f s (< 120 s)", wall)};
}

Outcome oracle_equivalence() {
  Checker check;
  Rng r(2024);

  // Top-k: sort each row by (value desc, column asc) and keep the first k.
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + r.below(10);
    Tensor a = random_stochastic(n, r);
    if (t % 4 == 0) a.at(0, n - 1) = a.at(0, 0);
    const double beta = r.uniform(0.05, 1.0);
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(beta * n - 1e-12)));
    Tensor want({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return a.at(i, x) > a.at(i, y); });
      for (std::size_t j = 0; j < k; ++j) want.at(i, idx[j]) = a.at(i, idx[j]);
    }
    check(sparsify_topk(a, beta) == want, "top-k differs on matrix " + std::to_string(t));
  }

  // Chebyshev basis against explicit polynomials T_k(L~) X for every order up to 5.
  double cheb_err = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + r.below(7), f = 1 + r.below(4);
    const Tensor lap = graph_laplacian(random_stochastic(n, r));
    Tensor x({n, f});
    for (auto& v : x.data()) v = r.normal();
    const double lmax = t % 2 ? 2.0 : estimate_lambda_max(lap);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Lt = 2.0 * to_eigen(lap) / lmax - I;
    const Eigen::MatrixXd L2 = Lt * Lt;
    const std::vector<Eigen::MatrixXd> T{I, Lt, 2 * L2 - I, 4 * L2 * Lt - 3 * Lt, 8 * L2 * L2 - 8 * L2 + I};
    const Eigen::MatrixXd X = to_eigen(x);
    for (std::size_t order = 1; order <= 5; ++order) {
      const Tensor b = chebyshev_basis(lap, x, order, lmax);
      check(b.rows() == n && b.cols() == order * f, "Chebyshev basis shape");
      if (b.cols() != order * f) continue;
      for (std::size_t k = 0; k < order; ++k) {
        const Eigen::MatrixXd want = T[k] * X;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < f; ++c) cheb_err = std::max(cheb_err, std::abs(b.at(i, k * f + c) - want(i, c)));
      }
    }
  }
  check(cheb_err < 1e-8, fmt("Chebyshev max error %.2e", cheb_err));

  // Edge loss against the mean over the n(n+1)/2 pairs i <= j.
  double edge_err = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + r.below(12);
    std::vector<int> cls(n);
    for (auto& c : cls) c = static_cast<int>(r.below(4));
    Tensor alpha({n, n}), w({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) alpha.at(i, j) = cls[i] == cls[j] ? 1.0 : 0.0;
    for (auto& v : w.data()) v = r.uniform(1e-4, 1 - 1e-4);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double p = std::clamp(w.at(i, j), 1e-7, 1 - 1e-7);
        s += alpha.at(i, j) * std::log(p) + (1 - alpha.at(i, j)) * std::log(1 - p);
      }
    const double oracle = -s / (static_cast<double>(n * (n + 1)) / 2.0);
    check(edge_labels(cls) == alpha, "edge labels");
    edge_err = std::max(edge_err, std::abs(loss_edge(w, alpha) - oracle));
  }
  check(edge_err < 1e-12, fmt("edge loss max error %.2e", edge_err));

  // Laplacian spectrum from a symmetric eigensolver.
  double lo = 1e300, hi = -1e300;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + r.below(15);
    const Tensor lap = graph_laplacian(random_stochastic(n, r));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(lap));
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  check(lo >= -1e-9 && hi <= 2 + 1e-9, fmt("Laplacian spectrum [%.3e", lo) + fmt(", %.6f]", hi));

  return check.outcome("top-k exact on 100 matrices, Chebyshev err " + fmt("%.1e", cheb_err) + ", edge loss err " +
                       fmt("%.1e", edge_err) + ", Laplacian spectrum in " + fmt("[%.1e", lo) + fmt(", %.9f]", hi));
}

SplitResult tiny_split(std::size_t N, std::size_t K) {
  SynthesisConfig c;
  c.W = 16;
  c.M = 4;
  c.N = N;
  c.samples_per_source_location = 20;
  c.samples_per_target_location = 20;
  c.seed = 5;
  return normalize(split_target(synthesize(c), K, 10, 5));
}

ModelConfig tiny_model(std::size_t N, Variant v) {
  ModelConfig m;
  m.extractor.W = 16;
  m.extractor.channels = 4;
  m.extractor.d = 6;
  m.gnn.ways = N;
  m.gnn.layers = 3;
  m.gnn.edge_hidden = {8, 4};
  m.gnn.variant = v;
  return m;
}

Outcome structural_invariants() {
  Checker check;
  Rng r(99);

  // Width recurrence.
  for (std::size_t d0 : {3, 10, 50, 101})
    for (std::size_t layers = 1; layers <= 5; ++layers) {
      GnnConfig g;
      g.feature_dim = d0 - std::min<std::size_t>(d0 - 1, 2);
      g.ways = d0 - g.feature_dim;
      g.layers = layers;
      const auto w = g.widths();
      check(w.size() == layers + 1 && w[0] == d0, "width of X0");
      for (std::size_t l = 1; l < w.size(); ++l) check(w[l] == w[l - 1] / 2 + w[l - 1], "width recurrence");
    }

  // Full forward passes: row-stochastic adjacency and memory retention.
  const std::size_t N = 3, K = 2;
  const SplitResult split = tiny_split(N, K);
  for (Variant v : kAllVariants) {
    const FewShotModel model = FewShotModel::create(tiny_model(N, v), 17);
    for (int t = 0; t < 5; ++t) {
      const Episode ep = sample_training_episode(split, N, K, r);
      for (Mode mode : {Mode::Train, Mode::Eval}) {
        Tape tape;
        ForwardContext ctx(tape, model.store(), mode);
        const GnnOutput out = model.forward(ctx, ep);
        const auto widths = model.config().gnn.widths();
        for (std::size_t l = 1; l < out.features.size(); ++l) {
          const Tensor& prev = tape.value(out.features[l - 1]);
          const Tensor& cur = tape.value(out.features[l]);
          const std::size_t off = widths[l - 1] / 2;
          bool same = cur.cols() == widths[l];
          for (std::size_t i = 0; i < prev.rows() && same; ++i)
            for (std::size_t c = 0; c < prev.cols(); ++c) same = same && cur.at(i, off + c) == prev.at(i, c);
          check(same, to_string(v) + ": layer " + std::to_string(l) + " does not carry X^(l-1) unchanged");
        }
        // The attentive variant sparsifies after the softmax, so only its
        // dense adjacency (the raw scores softmaxed) is row-stochastic.
        for (std::size_t l = 0; l < out.adjacencies.size(); ++l) {
          const Tensor& a = tape.value(out.adjacencies[l]);
          for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0;
            for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j);
            if (v == Variant::Attentive)
              check(s <= 1 + 1e-12 && s > 0, "attentive row mass");
            else
              check(std::abs(s - 1) < 1e-12, to_string(v) + ": adjacency row sum " + fmt("%.17g", s));
          }
        }
        const Tensor dense = tape.value(row_softmax(tape, out.final_scores));
        for (std::size_t i = 0; i < dense.rows(); ++i) {
          double s = 0;
          for (std::size_t j = 0; j < dense.cols(); ++j) s += dense.at(i, j);
          check(std::abs(s - 1) < 1e-12, "final adjacency row sum");
        }
      }
    }
  }

  // beta = 1 keeps everything.
  for (int t = 0; t < 20; ++t) {
    const Tensor a = random_stochastic(2 + r.below(8), r);
    check(sparsify_topk(a, 1.0) == a, "beta = 1 identity");
  }

  // gamma = 0 leaves the GNN loss alone.
  for (int t = 0; t < 20; ++t) {
    Tape tape;
    const double g = r.uniform(0.1, 3.0), e = r.uniform(0.1, 3.0);
    const Var l = loss_egnn(tape, tape.constant(Tensor::scalar(g)), tape.constant(Tensor::scalar(e)), 0.0);
    check(tape.value(l).item() == g, "gamma = 0 identity");
  }

  // n = 1 Chebyshev basis is X itself.
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + r.below(8);
    Tensor x({n, 3});
    for (auto& v : x.data()) v = r.normal();
    check(chebyshev_basis(graph_laplacian(random_stochastic(n, r)), x, 1, 2.0) == x, "n = 1 Chebyshev identity");
  }

  // Label encoding: one-hot support rows, uniform query row.
  for (int t = 0; t < 20; ++t) {
    const Episode ep = sample_training_episode(split, N, K, r);
    const Tensor y = encode_labels(ep);
    check(y.rows() == N * K + 1 && y.cols() == N, "label shape");
    for (std::size_t i = 0; i < ep.support.size(); ++i)
      for (std::size_t c = 0; c < N; ++c)
        check(y.at(i, c) == (static_cast<int>(c) == ep.support[i].episode_class ? 1.0 : 0.0), "support one-hot");
    for (std::size_t c = 0; c < N; ++c) check(y.at(ep.query_index(), c) == 1.0 / N, "query uniform");
  }
  return check.outcome("widths, row sums, memory retention, beta=1, gamma=0, n=1, label encoding");
}

Outcome closed_form_losses() {
  Checker check;
  double worst = 0;
  for (std::size_t N : {2, 3, 6, 18, 50}) {
    Tape t;
    const Var p = t.constant(Tensor({1, N}, 1.0 / static_cast<double>(N)));
    for (std::size_t c = 0; c < N; ++c) {
      const double l = t.value(loss_gnn(t, p, c)).item();
      worst = std::max(worst, std::abs(l - std::log(static_cast<double>(N))));
    }
  }
  check(worst < 1e-9, fmt("uniform loss off by %.2e", worst));
  double zero = 0, half = 0;
  Rng r(3);
  for (int k = 0; k < 50; ++k) {
    std::vector<int> cls(2 + r.below(15));
    for (auto& c : cls) c = static_cast<int>(r.below(5));
    const Tensor alpha = edge_labels(cls);
    zero = std::max(zero, std::abs(loss_edge(alpha, alpha)));
    half = std::max(half, std::abs(loss_edge(Tensor(alpha.shape(), 0.5), alpha) - std::log(2.0)));
    Tape t;
    const double taped = t.value(loss_edge(t, t.constant(Tensor(alpha.shape(), 0.5)), alpha)).item();
    half = std::max(half, std::abs(taped - std::log(2.0)));
  }
  check(zero == 0.0, fmt("loss_edge(alpha, alpha) = %.2e", zero));
  check(half < 1e-9, fmt("w = 0.5 off by %.2e", half));
  return check.outcome(fmt("|L(uniform) - log N| <= %.1e", worst) + fmt(", loss_edge(alpha, alpha) = %.1e", zero) +
                       fmt(", |loss_edge(0.5) - log 2| <= %.1e", half));
}

Outcome chance_level() {
  RunConfig cfg = shipped("easy.ini");
  cfg.eval_draws = 6400;
  const PreparedData data = prepare_data(cfg);
  const double N = static_cast<double>(cfg.ways());
  const double p = 1.0 / N, sigma = std::sqrt(p * (1 - p) / static_cast<double>(cfg.eval_draws));
  Outcome o;
  o.detail = fmt("untrained, %.0f draws, 1/N = ", static_cast<double>(cfg.eval_draws)) + fmt("%.4f", p) +
             fmt(" +- %.4f:", 3 * sigma);
  for (Variant v : kAllVariants) {
    cfg.model.gnn.variant = v;
    const FewShotModel model = build_model(cfg, data.split.W);
    const EvalReport r = run_evaluation(model, cfg, data.split);
    const bool ok = std::abs(r.accuracy - p) <= 3 * sigma;
    o.pass = o.pass && ok;
    o.detail += " " + to_string(v) + fmt("=%.4f", r.accuracy) + (ok ? "" : "(out)");
    std::fprintf(stderr, "  chance %s: %.4f\n", to_string(v).c_str(), r.accuracy);
  }
  return o;
}

Outcome easy_learning() {
  Outcome o;
  o.detail = "easy benchmark:";
  for (Variant v : kAllVariants) {
    RunConfig cfg = shipped("easy.ini");
    cfg.model.gnn.variant = v;
    const auto start = Clock::now();
    const PreparedData data = prepare_data(cfg);
    const TrainedModel tm = run_training(cfg, data);
    const EvalReport r = run_evaluation(tm.model, cfg, data.split);
    const double wall = since(start);
    const bool ok = r.accuracy >= 0.95 && wall < 600.0 && tm.report.episodes <= 2000;
    o.pass = o.pass && ok;
    o.detail += " " + to_string(v) + fmt("=%.4f", r.accuracy) + fmt(" (%.0f s)", wall);
    std::fprintf(stderr, "  easy %s: accuracy %.4f after %zu episodes, %.1f s\n", to_string(v).c_str(), r.accuracy,
                 tm.report.episodes, wall);
  }
  return o;
}

Outcome hard_directional() {
  RunConfig cfg = shipped("hard.ini");
  std::vector<TableCell> cells;
  for (const char* m : {"cnn", "plain", "attentive", "egnn", "chebynet"})
    for (std::size_t k : {1, 5, 10}) cells.push_back({m, k});
  const auto start = Clock::now();
  std::vector<TableResult> rows;
  for (const auto& c : cells) {
    auto one = run_table(cfg, {c}, 5);
    std::fprintf(stderr, "  hard %s K=%zu: %.4f (%.0f s)%s\n", c.method.c_str(), c.K, one[0].mean_accuracy,
                 one[0].wall_seconds, one[0].error.empty() ? "" : (" error: " + one[0].error).c_str());
    rows.push_back(std::move(one[0]));
  }
  std::fputs(format_table_markdown(rows, cfg.ways()).c_str(), stderr);

  std::map<std::pair<std::string, std::size_t>, double> acc;
  bool errors = false;
  for (const auto& r : rows) {
    acc[{r.method, r.K}] = r.mean_accuracy;
    errors = errors || !r.error.empty();
  }
  Outcome o;
  o.pass = !errors;
  // The headline GNN model must beat the K+1-shot CNN by 5 points at K = 1 and 5.
  for (std::size_t k : {1, 5}) {
    const double margin = acc[{"plain", k}] - acc[{"cnn", k}];
    o.pass = o.pass && margin >= 0.05;
    o.detail += fmt("K=%.0f GNN-CNN ", static_cast<double>(k)) + fmt("%+.1f pp; ", 100 * margin);
  }
  o.detail += "monotone in K:";
  for (const char* m : {"plain", "attentive", "egnn", "chebynet"}) {
    const double a1 = acc[{m, 1}], a5 = acc[{m, 5}], a10 = acc[{m, 10}];
    const bool mono = a5 >= a1 - 0.01 && a10 >= a5 - 0.01;
    o.pass = o.pass && mono;
    o.detail += std::string(" ") + m + fmt(" %.3f", a1) + fmt("/%.3f", a5) + fmt("/%.3f", a10) + (mono ? "" : "(no)");
  }
  o.detail += " | other variants vs CNN:";
  for (const char* m : {"attentive", "egnn", "chebynet"})
    o.detail += std::string(" ") + m + fmt(" %+.1f", 100 * (acc[{m, 1}] - acc[{"cnn", 1}])) +
                fmt("/%+.1f pp", 100 * (acc[{m, 5}] - acc[{"cnn", 5}]));
  o.detail += fmt(" | %.0f s", since(start));
  return o;
}

std::tuple<int, int, int> key(const CsiSample& s) { return {s.domain_id, s.location_id, s.sample_id}; }

Outcome protocol_fidelity() {
  Checker check;
  RunConfig cfg = shipped("hard.ini");
  cfg.K = 5;
  const PreparedData data = prepare_data(cfg);
  const SplitResult& s = data.split;
  const std::size_t N = cfg.ways();

  std::map<std::tuple<int, int, int>, int> stored;  // sample -> location of its stored shot
  std::set<std::tuple<int, int, int>> tests;
  for (const auto& p : s.target_train)
    for (const auto& x : p.samples) stored[key(x)] = p.location_id;
  for (const auto& p : s.target_test)
    for (const auto& x : p.samples) tests.insert(key(x));
  check(stored.size() == (cfg.K + 1) * N, "stored shot count");
  std::vector<const CsiSample*> queries;
  for (const auto& p : s.target_test)
    for (const auto& x : p.samples) queries.push_back(&x);

  Rng rng(derive_seed(cfg.seed, "protocol"));
  std::size_t support_nodes = 0;
  for (int e = 0; e < 1000; ++e) {
    const CsiSample& q = *queries[rng.below(queries.size())];
    const Episode ep = build_test_episode(s, q, N, cfg.K, rng);
    check(ep.support.size() == N * cfg.K, "support size");
    check(ep.query.sample == q && tests.count(key(ep.query.sample)) == 1, "query is the drawn test sample");
    std::vector<std::size_t> per(N, 0);
    for (const auto& n : ep.support) {
      ++support_nodes;
      const auto it = stored.find(key(n.sample));
      check(it != stored.end(), "support sample outside the stored target shots");
      check(tests.count(key(n.sample)) == 0, "support sample from the test pool");
      check(n.sample.domain_id == s.target_domain, "support from the wrong domain");
      if (it != stored.end())
        check(ep.class_map.at(static_cast<std::size_t>(n.episode_class)).location_id == it->second,
              "support class mapping");
      ++per.at(static_cast<std::size_t>(n.episode_class));
    }
    for (auto c : per) check(c == cfg.K, "K shots per class");
  }
  return check.outcome("1000 test episodes, " + std::to_string(support_nodes) +
                       " support nodes all from the stored K+1 shots");
}

Outcome determinism() {
  Checker check;
  RunConfig cfg = shipped("easy.ini");
  cfg.episodes_total = 200;
  cfg.eval_draws = 1000;
  cfg.threads = 1;
  const PreparedData a = prepare_data(cfg), b = prepare_data(cfg);
  check(a.split == b.split, "data differ");
  const TrainedModel ta = run_training(cfg, a);
  const TrainedModel tb = run_training(cfg, b);
  const Checkpoint ca = make_checkpoint(ta, cfg), cb = make_checkpoint(tb, cfg);
  check(ca == cb, "trained parameters differ between replays");
  check(ta.report.loss_curve == tb.report.loss_curve, "loss curves differ");
  const EvalReport ea = run_evaluation(ta.model, cfg, a.split), eb = run_evaluation(tb.model, cfg, b.split);
  check(ea.confusion == eb.confusion && ea.correct == eb.correct, "evaluation differs between replays");

  const auto path = std::filesystem::temp_directory_path() / "fsloc_acceptance" / "checkpoint.fslm";
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(ca, path);
  const Checkpoint back = load_checkpoint(path);
  check(back == ca, "checkpoint changed on disk");
  const TrainedModel restored = restore_model(back, cfg, a.split.W);
  const EvalReport er = run_evaluation(restored.model, cfg, a.split);
  check(er.confusion == ea.confusion && er.correct == ea.correct, "restored model evaluates differently");
  check(make_checkpoint(restored, cfg) == ca, "restored store differs");
  std::filesystem::remove_all(path.parent_path());
  return check.outcome("two single-thread replays bitwise equal, checkpoint round trip gives " +
                       std::to_string(er.correct) + "/" + std::to_string(er.draws) + " both times");
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {"gradient-correctness", gradient_correctness},
      {"oracle-equivalence", oracle_equivalence},
      {"structural-invariants", structural_invariants},
      {"closed-form-losses", closed_form_losses},
      {"chance-level", chance_level},
      {"easy-task-learning", easy_learning},
      {"hard-transfer-directional", hard_directional},
      {"protocol-fidelity", protocol_fidelity},
      {"determinism-persistence", determinism},
  };
  std::set<std::size_t> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::stoul(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!pick.empty() && !pick.count(i + 1)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = all[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, all[i].name, o.detail.c_str(),
                since(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
