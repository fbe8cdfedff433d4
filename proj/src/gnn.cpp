#include "fsloc/gnn.hpp"

#include <algorithm>

#include "fsloc/error.hpp"
#include "fsloc/variants.hpp"

namespace fsloc {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Attentive: return "attentive";
    case Variant::Egnn: return "egnn";
    case Variant::ChebyNet: return "chebynet";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "plain" || s == "gnn") return Variant::Plain;
  if (s == "attentive") return Variant::Attentive;
  if (s == "egnn") return Variant::Egnn;
  if (s == "chebynet" || s == "cheby") return Variant::ChebyNet;
  throw ConfigError("unknown variant '" + s + "' (expected plain|attentive|egnn|chebynet)");
}

std::vector<std::size_t> GnnConfig::widths() const {
  std::vector<std::size_t> w{feature_dim + ways};
  for (std::size_t l = 0; l < layers; ++l) w.push_back(w.back() / 2 + w.back());
  return w;
}

void GnnConfig::validate() const {
  if (ways < 1) throw ConfigError("ways must be >= 1");
  if (layers < 1) throw ConfigError("GNN needs at least one graph layer");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (variant == Variant::Attentive && !(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
  if (variant == Variant::Egnn && gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (variant == Variant::ChebyNet && cheb_order < 1) throw ConfigError("cheb_n must be >= 1");
}

// ---------------------------------------------------------------------------

EdgeNetwork EdgeNetwork::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                                const std::vector<std::size_t>& hidden, Rng& rng) {
  EdgeNetwork net;
  std::size_t width = in;
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    const auto id = std::to_string(h + 1);
    net.maps_.push_back(Linear::create(store, prefix + ".conv" + id, width, hidden[h], true, rng));
    net.norms_.push_back(BatchNorm::create(store, prefix + ".bn" + id, hidden[h]));
    width = hidden[h];
  }
  net.maps_.push_back(Linear::create(store, prefix + ".conv" + std::to_string(hidden.size() + 1), width, 1, true, rng));
  return net;
}

ad::Var EdgeNetwork::scores(ForwardContext& ctx, ad::Var x, double slope) const {
  auto& t = ctx.tape();
  const std::size_t n = t.value(x).rows();
  ad::Var h = ad::pairwise_absdiff(t, x);
  for (std::size_t k = 0; k < norms_.size(); ++k) {
    h = maps_[k](ctx, h);
    h = norms_[k](ctx, h);
    h = ad::leaky_relu(t, h, slope);
  }
  h = maps_.back()(ctx, h);
  return ad::reshape(t, h, {n, n});
}

ad::Var node_update(ad::Tape& t, ad::Var adjacency, ad::Var x, ad::Var weight, double slope) {
  ad::Var agg = ad::matmul(t, ad::matmul(t, adjacency, x), weight);
  return ad::concat_cols(t, ad::leaky_relu(t, agg, slope), x);
}

ad::Var classify(ad::Tape& t, ad::Var adjacency, ad::Var x, ad::Var weight, std::size_t query) {
  ad::Var row = ad::select_row(t, ad::matmul(t, adjacency, x), query);
  return ad::row_softmax(t, ad::matmul(t, row, ad::transpose(t, weight)));
}

ad::Var loss_gnn(ad::Tape& t, ad::Var probs, std::size_t true_class) {
  const std::size_t N = t.value(probs).size();
  if (true_class >= N) throw std::out_of_range("loss_gnn: class index out of range");
  Tensor y({1, N});
  y[true_class] = 1.0;
  return ad::cross_entropy(t, probs, y, kLogClip);
}

ad::Var init_node_features(ad::Tape& t, ad::Var features, const Tensor& labels) {
  if (t.value(features).rows() != labels.rows())
    throw ShapeError("init_node_features: " + std::to_string(t.value(features).rows()) + " feature rows vs " +
                     std::to_string(labels.rows()) + " label rows");
  return ad::concat_cols(t, features, t.constant(labels));
}

GnnModel GnnModel::create(ParameterStore& store, const std::string& prefix, const GnnConfig& cfg, Rng& rng) {
  cfg.validate();
  GnnModel m;
  m.cfg_ = cfg;
  const auto widths = cfg.widths();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto layer = prefix + ".layer" + std::to_string(l + 1);
    const std::size_t d = widths[l], dp = d / 2;
    m.edges_.push_back(EdgeNetwork::create(store, layer + ".edge", d, cfg.edge_hidden, rng));
    const std::size_t rows = cfg.variant == Variant::ChebyNet ? cfg.cheb_order * d : d;
    m.node_weights_.push_back(store.add(layer + ".node.weight", he_uniform({rows, dp}, rows, rng)));
  }
  const std::size_t dl = widths.back();
  m.edges_.push_back(EdgeNetwork::create(store, prefix + ".classifier.edge", dl, cfg.edge_hidden, rng));
  Tensor readout = he_uniform({cfg.ways, dl}, dl, rng);
  for (std::size_t c = 0; c < cfg.ways; ++c) readout.at(c, dl - cfg.ways + c) += cfg.label_readout_gain;
  m.classifier_ = store.add(prefix + ".classifier.weight", std::move(readout));
  return m;
}

ad::Var GnnModel::edge_update(ForwardContext& ctx, const EdgeNetwork& net, ad::Var x, ad::Var* raw_scores) const {
  auto& t = ctx.tape();
  ad::Var s = net.scores(ctx, x, cfg_.leaky_slope);
  if (raw_scores) *raw_scores = s;
  ad::Var a = ad::row_softmax(t, s);
  if (cfg_.variant == Variant::Attentive) a = sparsify_topk(t, a, cfg_.beta);
  return a;
}

GnnOutput GnnModel::forward(ForwardContext& ctx, ad::Var x0) const {
  auto& t = ctx.tape();
  const auto widths = cfg_.widths();
  if (t.value(x0).cols() != widths[0])
    throw ShapeError("GNN input width " + std::to_string(t.value(x0).cols()) + ", expected d_0 = " +
                     std::to_string(widths[0]));
  GnnOutput out;
  out.features.push_back(x0);
  ad::Var x = x0;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    ad::Var a = edge_update(ctx, edges_[l], x);
    out.adjacencies.push_back(a);
    ad::Var w = ctx.param(node_weights_[l]);
    if (cfg_.variant == Variant::ChebyNet) {
      ad::Var lap = graph_laplacian(t, a, cfg_.symmetrize_laplacian);
      const double lmax = cfg_.lambda_max > 0.0 ? cfg_.lambda_max : estimate_lambda_max(t.value(lap));
      ad::Var basis = chebyshev_basis(t, lap, x, cfg_.cheb_order, lmax);
      x = chebynet_node_update(t, basis, w, x, cfg_.leaky_slope);
    } else {
      x = node_update(t, a, x, w, cfg_.leaky_slope);
    }
    out.features.push_back(x);
  }
  ad::Var final_a = edge_update(ctx, edges_.back(), x, &out.final_scores);
  out.adjacencies.push_back(final_a);
  out.probs = classify(t, final_a, x, ctx.param(classifier_), t.value(x).rows() - 1);
  return out;
}

// ---------------------------------------------------------------------------

FewShotModel FewShotModel::create(const ModelConfig& cfg, std::uint64_t init_seed) {
  FewShotModel m;
  m.cfg_ = cfg;
  m.cfg_.gnn.feature_dim = cfg.extractor.d;
  Rng rng(derive_seed(init_seed, "init"));
  m.extractor_ = FeatureExtractor::create(m.store_, "extractor", m.cfg_.extractor, rng);
  m.gnn_ = GnnModel::create(m.store_, "gnn", m.cfg_.gnn, rng);
  return m;
}

GnnOutput FewShotModel::forward(ForwardContext& ctx, const Episode& episode) const {
  if (episode.ways != cfg_.gnn.ways)
    throw ConfigError("model is " + std::to_string(cfg_.gnn.ways) + "-way, episode is " +
                      std::to_string(episode.ways) + "-way");
  return forward_embedded(ctx, extractor_(ctx, ctx.tape().constant(episode.features())), episode);
}

GnnOutput FewShotModel::forward_embedded(ForwardContext& ctx, ad::Var phi, const Episode& episode) const {
  if (episode.ways != cfg_.gnn.ways)
    throw ConfigError("model is " + std::to_string(cfg_.gnn.ways) + "-way, episode is " +
                      std::to_string(episode.ways) + "-way");
  return gnn_.forward(ctx, init_node_features(ctx.tape(), phi, encode_labels(episode)));
}

ad::Var FewShotModel::loss(ForwardContext& ctx, const Episode& episode, const GnnOutput& out) const {
  auto& t = ctx.tape();
  ad::Var l = loss_gnn(t, out.probs, static_cast<std::size_t>(episode.query.episode_class));
  if (cfg_.gnn.variant != Variant::Egnn) return l;
  ad::Var w = out.adjacencies.back();
  if (cfg_.gnn.egnn_double_softmax) w = ad::row_softmax(t, w);
  return loss_egnn(t, l, loss_edge(t, w, edge_labels(episode)), cfg_.gnn.gamma);
}

EpisodeResult FewShotModel::episode_gradients(const Episode& episode) const {
  ad::Tape tape;
  ForwardContext ctx(tape, store_, Mode::Train);
  GnnOutput out = forward(ctx, episode);
  ad::Var l = loss(ctx, episode, out);
  tape.backward(l);
  EpisodeResult r;
  r.loss = tape.value(l).item();
  r.probs = tape.value(out.probs);
  r.grads = store_.zero_gradients();
  ctx.collect_gradients(r.grads);
  r.stats = std::move(ctx.stat_updates());
  return r;
}

Tensor FewShotModel::predict(const Episode& episode) const {
  ad::Tape tape;
  ForwardContext ctx(tape, store_, Mode::Eval);
  return tape.value(forward(ctx, episode).probs);
}

Tensor FewShotModel::embed(const Tensor& features) const {
  ad::Tape tape;
  ForwardContext ctx(tape, store_, Mode::Eval);
  return tape.value(extractor_(ctx, tape.constant(features)));
}

Tensor FewShotModel::predict_embedded(const Tensor& phi, const Episode& episode) const {
  ad::Tape tape;
  ForwardContext ctx(tape, store_, Mode::Eval);
  return tape.value(forward_embedded(ctx, tape.constant(phi), episode).probs);
}

void FewShotModel::freeze_extractor(bool frozen) { store_.set_trainable("extractor.", !frozen); }

std::size_t argmax(std::span<const double> values) {
  // First maximum wins: ties resolve to the lowest class index.
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace fsloc
