#include "fsloc/layers.hpp"

#include <cmath>

#include "fsloc/error.hpp"

namespace fsloc {

void ParameterStore::check_unique(const std::string& name) const {
  if (index_.count(name) || buffer_index_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
}

std::size_t ParameterStore::add(std::string name, Tensor value) {
  check_unique(name);
  index_[name] = params_.size();
  params_.push_back({std::move(name), std::move(value), true});
  return params_.size() - 1;
}

std::size_t ParameterStore::add_buffer(std::string name, Tensor value) {
  check_unique(name);
  buffer_index_[name] = buffers_.size();
  buffers_.push_back({std::move(name), std::move(value), false});
  return buffers_.size() - 1;
}

std::optional<std::size_t> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterStore::slot(const std::string& name) const {
  auto s = find(name);
  if (!s) throw std::out_of_range("no parameter named " + name);
  return *s;
}

std::optional<std::size_t> ParameterStore::find_buffer(const std::string& name) const {
  auto it = buffer_index_.find(name);
  if (it == buffer_index_.end()) return std::nullopt;
  return it->second;
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Gradients ParameterStore::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.value.shape());
  return g;
}

void add_gradients(Gradients& into, const Gradients& from) {
  if (into.size() != from.size()) throw ShapeError("add_gradients: slot count mismatch");
  for (std::size_t s = 0; s < into.size(); ++s) {
    if (from[s].empty()) continue;
    if (into[s].empty()) {
      into[s] = from[s];
      continue;
    }
    for (std::size_t i = 0; i < into[s].size(); ++i) into[s][i] += from[s][i];
  }
}

void scale_gradients(Gradients& grads, double s) {
  for (auto& g : grads)
    for (double& v : g.data()) v *= s;
}

void apply_stat_updates(ParameterStore& store, std::span<const StatUpdate> updates, double momentum) {
  for (const auto& u : updates) {
    Tensor& rm = store.buffer(u.mean_slot).value;
    Tensor& rv = store.buffer(u.var_slot).value;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * u.mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * u.var[c];
    }
  }
}

ad::Var ForwardContext::param(std::size_t slot) {
  ad::Var& v = vars_.at(slot);
  if (!v.valid()) {
    const Parameter& p = store_[slot];
    v = tape_.borrowed(p.value, slot, p.trainable);
  }
  return v;
}

void ForwardContext::collect_gradients(Gradients& into) const {
  if (into.size() != store_.size()) throw ShapeError("collect_gradients: slot count mismatch");
  for (std::size_t s = 0; s < vars_.size(); ++s) {
    if (!vars_[s].valid() || !tape_.requires_grad(vars_[s])) continue;
    Tensor g = tape_.grad(vars_[s]);
    if (into[s].empty()) into[s] = Tensor(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) into[s][i] += g[i];
  }
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Linear Linear::create(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                      bool with_bias, Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(prefix + ".weight", he_uniform({in, out}, in, rng));
  if (with_bias) l.bias = store.add(prefix + ".bias", Tensor({out}));
  return l;
}

ad::Var Linear::operator()(ForwardContext& ctx, ad::Var x) const {
  ad::Var y = ad::matmul(ctx.tape(), x, ctx.param(weight));
  if (bias) y = ad::add_row_bias(ctx.tape(), y, ctx.param(*bias));
  return y;
}

Conv1d Conv1d::create(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel, std::size_t stride, Rng& rng) {
  Conv1d c;
  c.in_channels = in_channels;
  c.out_channels = out_channels;
  c.kernel = kernel;
  c.stride = stride;
  c.weight = store.add(prefix + ".weight", he_uniform({out_channels, in_channels, kernel}, in_channels * kernel, rng));
  c.bias = store.add(prefix + ".bias", Tensor({out_channels}));
  return c;
}

ad::Var Conv1d::operator()(ForwardContext& ctx, ad::Var x) const {
  const Tensor& xv = ctx.tape().value(x);
  if (xv.rank() != 3) throw ShapeError("Conv1d expects [B x C x T], got " + shape_string(xv.shape()));
  const auto pad = ad::halving_padding(xv.dim(2), kernel, stride);
  return ad::conv1d(ctx.tape(), x, ctx.param(weight), ctx.param(bias), stride, pad.pad_left, pad.out_length);
}

BatchNorm BatchNorm::create(ParameterStore& store, const std::string& prefix, std::size_t channels) {
  BatchNorm bn;
  bn.channels = channels;
  bn.gamma = store.add(prefix + ".gamma", Tensor({channels}, 1.0));
  bn.beta = store.add(prefix + ".beta", Tensor({channels}));
  bn.running_mean = store.add_buffer(prefix + ".running_mean", Tensor({channels}));
  bn.running_var = store.add_buffer(prefix + ".running_var", Tensor({channels}, 1.0));
  return bn;
}

ad::Var BatchNorm::operator()(ForwardContext& ctx, ad::Var x) const {
  const auto& store = ctx.store();
  auto res = ad::batchnorm(ctx.tape(), x, ctx.param(gamma), ctx.param(beta), ctx.training(),
                           store.buffer(running_mean).value, store.buffer(running_var).value, kEps);
  if (ctx.training())
    ctx.record_stats({running_mean, running_var, std::move(res.batch_mean), std::move(res.batch_var)});
  return res.out;
}

}  // namespace fsloc
