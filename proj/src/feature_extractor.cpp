#include "fsloc/feature_extractor.hpp"

#include <algorithm>
#include <numeric>

#include "fsloc/error.hpp"

namespace fsloc {

std::vector<std::size_t> ExtractorConfig::stage_lengths() const {
  std::vector<std::size_t> out;
  std::size_t len = W;
  for (std::size_t s = 0; s < stages; ++s) {
    len = (len + stride - 1) / stride;
    out.push_back(len);
  }
  return out;
}

FeatureExtractor FeatureExtractor::create(ParameterStore& store, const std::string& prefix,
                                          const ExtractorConfig& cfg, Rng& rng) {
  if (cfg.W == 0 || cfg.channels == 0 || cfg.stages == 0 || cfg.d == 0 || cfg.kernel == 0 || cfg.stride == 0)
    throw ConfigError("extractor dimensions must be positive");
  FeatureExtractor fx;
  fx.cfg_ = cfg;
  std::size_t in = 1;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const auto name = prefix + ".conv" + std::to_string(s + 1);
    fx.convs_.push_back(Conv1d::create(store, name, in, cfg.channels, cfg.kernel, cfg.stride, rng));
    fx.norms_.push_back(BatchNorm::create(store, prefix + ".bn" + std::to_string(s + 1), cfg.channels));
    in = cfg.channels;
  }
  fx.fc_ = Linear::create(store, prefix + ".fc", cfg.channels * cfg.stage_lengths().back(), cfg.d, true, rng);
  return fx;
}

ad::Var FeatureExtractor::operator()(ForwardContext& ctx, ad::Var x) const {
  auto& t = ctx.tape();
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2 || xv.cols() != cfg_.W)
    throw ShapeError("feature extractor expects [B x " + std::to_string(cfg_.W) + "], got " +
                     shape_string(xv.shape()));
  const std::size_t batch = xv.rows();
  ad::Var h = ad::reshape(t, x, {batch, 1, cfg_.W});
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    h = convs_[s](ctx, h);
    h = norms_[s](ctx, h);
    h = ad::relu(t, h);
  }
  const auto& hs = t.value(h).shape();
  h = ad::reshape(t, h, {batch, hs[1] * hs[2]});
  return fc_(ctx, h);
}

std::vector<std::size_t> FeatureExtractor::parameter_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    out.insert(out.end(), {convs_[s].weight, convs_[s].bias, norms_[s].gamma, norms_[s].beta});
  }
  out.push_back(fc_.weight);
  if (fc_.bias) out.push_back(*fc_.bias);
  return out;
}

std::vector<std::size_t> FeatureExtractor::buffer_slots() const {
  std::vector<std::size_t> out;
  for (const auto& bn : norms_) out.insert(out.end(), {bn.running_mean, bn.running_var});
  return out;
}

Tensor stack_features(const std::vector<const CsiSample*>& samples) {
  if (samples.empty()) return Tensor();
  const std::size_t W = samples.front()->features.size();
  Tensor x({samples.size(), W});
  for (std::size_t i = 0; i < samples.size(); ++i)
    std::copy(samples[i]->features.begin(), samples[i]->features.end(), x.ptr() + i * W);
  return x;
}

namespace {

struct Labelled {
  std::vector<const CsiSample*> samples;
  std::vector<std::size_t> labels;
};

Labelled flatten(const std::vector<ClassPool>& pools) {
  Labelled l;
  for (std::size_t c = 0; c < pools.size(); ++c)
    for (const auto& s : pools[c].samples) {
      l.samples.push_back(&s);
      l.labels.push_back(c);
    }
  return l;
}

}  // namespace

Tensor classifier_probabilities(const ParameterStore& store, const FeatureExtractor& fx, const Linear& head,
                                const Tensor& features) {
  ad::Tape tape;
  ForwardContext ctx(tape, store, Mode::Eval);
  ad::Var logits = head(ctx, fx(ctx, tape.constant(features)));
  return tape.value(ad::row_softmax(tape, logits));
}

double classifier_accuracy(const ParameterStore& store, const FeatureExtractor& fx, const Linear& head,
                           const std::vector<ClassPool>& pools) {
  const auto data = flatten(pools);
  if (data.samples.empty()) return 0.0;
  const Tensor p = classifier_probabilities(store, fx, head, stack_features(data.samples));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const double* row = p.ptr() + i * p.cols();
    const auto best = static_cast<std::size_t>(std::max_element(row, row + p.cols()) - row);
    correct += best == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.labels.size());
}

ClassifierFit fit_classifier(const ParameterStore& base, const FeatureExtractor& fx,
                             const std::vector<ClassPool>& pools, const ClassifierTraining& opts, Rng& rng) {
  ClassifierFit fit;
  fit.store = base;
  const auto own = fx.parameter_slots();
  for (std::size_t s = 0; s < fit.store.size(); ++s)
    if (std::find(own.begin(), own.end(), s) == own.end()) fit.store[s].trainable = false;
  fit.head = Linear::create(fit.store, "head", fx.config().d, pools.size(), true, rng);
  const auto data = flatten(pools);
  if (data.samples.size() < 2) throw ConfigError("classifier training needs at least 2 samples (batch norm)");
  const std::size_t batch = std::max<std::size_t>(2, opts.batch);

  Adam adam(opts.adam);
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();) {
      std::size_t end = std::min(order.size(), start + batch);
      // A trailing batch of one would break batch norm; fold it in.
      if (order.size() - end == 1) end = order.size();
      std::vector<const CsiSample*> xs;
      Tensor targets({end - start, pools.size()});
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(data.samples[order[i]]);
        targets.at(i - start, data.labels[order[i]]) = 1.0;
      }
      ad::Tape tape;
      ForwardContext ctx(tape, fit.store, Mode::Train);
      ad::Var probs = ad::row_softmax(tape, fit.head(ctx, fx(ctx, tape.constant(stack_features(xs)))));
      ad::Var loss = ad::cross_entropy(tape, probs, targets);
      tape.backward(loss);
      Gradients grads = fit.store.zero_gradients();
      ctx.collect_gradients(grads);
      adam.step(fit.store, grads);
      apply_stat_updates(fit.store, ctx.stat_updates(), 0.1);
      epoch_loss += tape.value(loss).item();
      ++batches;
      start = end;
    }
    fit.epoch_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  fit.train_accuracy = classifier_accuracy(fit.store, fx, fit.head, pools);
  return fit;
}

void strip_head(ParameterStore& base, const ParameterStore& fitted, const FeatureExtractor& fx) {
  for (std::size_t s : fx.parameter_slots()) base[s].value = fitted[s].value;
  for (std::size_t s : fx.buffer_slots()) base.buffer(s).value = fitted.buffer(s).value;
}

PhaseReport pretrain_extractor(ParameterStore& store, const FeatureExtractor& fx,
                               const std::vector<ClassPool>& source_train, const ClassifierTraining& opts,
                               Rng& rng) {
  if (source_train.empty()) throw ConfigError("pretraining needs source samples");
  PhaseReport r;
  auto fit = fit_classifier(store, fx, source_train, opts, rng);
  if (opts.epochs == 0) {
    r.accuracy = fit.train_accuracy;
    return r;
  }
  strip_head(store, fit.store, fx);
  r.accuracy = fit.train_accuracy;
  r.epoch_loss = std::move(fit.epoch_loss);
  return r;
}

PhaseReport finetune_extractor(ParameterStore& store, const FeatureExtractor& fx,
                               const std::vector<ClassPool>& target_train, const ClassifierTraining& opts,
                               Rng& rng) {
  if (target_train.empty()) throw ConfigError("fine-tuning needs target shots");
  PhaseReport r;
  ClassifierTraining probe = opts;
  probe.epochs = 0;
  // Fresh head only: accuracy of the untrained N-way head on the shots.
  Rng head_rng = rng;
  r.accuracy_before = fit_classifier(store, fx, target_train, probe, head_rng).train_accuracy;
  auto fit = fit_classifier(store, fx, target_train, opts, rng);
  if (opts.epochs > 0) strip_head(store, fit.store, fx);
  r.accuracy = fit.train_accuracy;
  r.epoch_loss = std::move(fit.epoch_loss);
  return r;
}

}  // namespace fsloc
