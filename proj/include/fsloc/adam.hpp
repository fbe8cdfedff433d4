#pragma once

#include <cstdint>
#include <vector>

#include "fsloc/layers.hpp"

namespace fsloc {

struct AdamConfig {
  double lr = 0.01;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay:
///   p <- p * (1 - lr * wd)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Frozen (non-trainable) parameters are skipped entirely.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore& store, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  /// Restores state captured from a checkpoint.
  void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace fsloc
