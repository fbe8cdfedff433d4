#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsloc/autodiff.hpp"
#include "fsloc/rng.hpp"
#include "fsloc/tensor.hpp"

namespace fsloc {

struct Parameter {
  std::string name;  // dotted path, e.g. gnn.layer1.edge.conv2.weight
  Tensor value;
  bool trainable = true;
  bool operator==(const Parameter&) const = default;
};

/// One gradient tensor per parameter slot (empty tensor = no gradient).
using Gradients = std::vector<Tensor>;

/// Named parameters plus non-trainable buffers (batch-norm running stats).
/// Slots are stable indices; names are unique across both tables.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t add_buffer(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t slot) { return params_.at(slot); }
  const Parameter& operator[](std::size_t slot) const { return params_.at(slot); }
  Parameter& buffer(std::size_t slot) { return buffers_.at(slot); }
  const Parameter& buffer(std::size_t slot) const { return buffers_.at(slot); }
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::span<Parameter> buffers() { return buffers_; }
  std::span<const Parameter> buffers() const { return buffers_; }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t slot(const std::string& name) const;
  std::optional<std::size_t> find_buffer(const std::string& name) const;

  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);
  std::size_t element_count() const;

  Gradients zero_gradients() const;

  bool operator==(const ParameterStore& other) const {
    return params_ == other.params_ && buffers_ == other.buffers_;
  }

 private:
  void check_unique(const std::string& name) const;
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::size_t> buffer_index_;
};

void add_gradients(Gradients& into, const Gradients& from);
void scale_gradients(Gradients& grads, double s);

enum class Mode { Train, Eval };

/// Batch statistics observed during a train-mode forward pass. They are
/// applied to the running buffers later, in a fixed order, so that parallel
/// episodes never write shared state.
struct StatUpdate {
  std::size_t mean_slot;
  std::size_t var_slot;
  Tensor mean;
  Tensor var;
};

void apply_stat_updates(ParameterStore& store, std::span<const StatUpdate> updates, double momentum);

/// Binds one tape to a read-only parameter store for a single forward pass.
class ForwardContext {
 public:
  ForwardContext(ad::Tape& tape, const ParameterStore& store, Mode mode)
      : tape_(tape), store_(store), mode_(mode), vars_(store.size()) {}

  ad::Tape& tape() { return tape_; }
  const ParameterStore& store() const { return store_; }
  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::Train; }

  /// Tape leaf for a parameter slot (created on first use; non-trainable
  /// parameters become constants).
  ad::Var param(std::size_t slot);

  void record_stats(StatUpdate u) { stats_.push_back(std::move(u)); }
  std::vector<StatUpdate>& stat_updates() { return stats_; }

  /// Adds d(loss)/d(param) from the tape into `into` (after tape.backward()).
  void collect_gradients(Gradients& into) const;

 private:
  ad::Tape& tape_;
  const ParameterStore& store_;
  Mode mode_;
  std::vector<ad::Var> vars_;
  std::vector<StatUpdate> stats_;
};

// ---------------------------------------------------------------------------
// Layers. Each holds slot indices into a ParameterStore, so models stay
// copyable values.

/// y = x W + b with W stored as [in x out].
struct Linear {
  std::size_t in = 0, out = 0;
  std::size_t weight = 0;
  std::optional<std::size_t> bias;

  static Linear create(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                       bool with_bias, Rng& rng);
  ad::Var operator()(ForwardContext& ctx, ad::Var x) const;
};

/// 1D convolution with "halving" padding: output length ceil(T / stride).
struct Conv1d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1;
  std::size_t weight = 0, bias = 0;

  static Conv1d create(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                       std::size_t out_channels, std::size_t kernel, std::size_t stride, Rng& rng);
  ad::Var operator()(ForwardContext& ctx, ad::Var x) const;
  std::size_t output_length(std::size_t length) const { return (length + stride - 1) / stride; }
};

struct BatchNorm {
  static constexpr double kEps = 1e-5;
  std::size_t channels = 0;
  std::size_t gamma = 0, beta = 0;
  std::size_t running_mean = 0, running_var = 0;

  static BatchNorm create(ParameterStore& store, const std::string& prefix, std::size_t channels);
  ad::Var operator()(ForwardContext& ctx, ad::Var x) const;
};

/// Fan-in scaled uniform initialization, bound sqrt(6 / fan_in).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace fsloc
