#include "fsloc/adam.hpp"

#include <cmath>

#include "fsloc/error.hpp"

namespace fsloc {

void Adam::step(ParameterStore& store, const Gradients& grads) {
  if (grads.size() != store.size()) throw ShapeError("adam: gradient count does not match parameters");
  if (m_.size() != store.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : store.parameters()) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  ++steps_;
  const double b1t = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double b2t = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t s = 0; s < store.size(); ++s) {
    Parameter& p = store[s];
    if (!p.trainable) continue;
    const Tensor& g = grads[s];
    if (g.shape() != p.value.shape())
      throw std::invalid_argument("adam: missing or mis-shaped gradient for " + p.name);
    Tensor& m = m_[s];
    Tensor& v = v_[s];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / b1t;
      const double vhat = v[i] / b2t;
      p.value[i] = p.value[i] * decay - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) throw ShapeError("adam: moment buffer count mismatch");
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace fsloc
