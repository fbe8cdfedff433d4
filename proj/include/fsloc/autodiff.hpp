#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records nodes in creation order, which is already a topological
// order, so backward() is a single reverse sweep. Tapes are single-threaded
// and single-owner; parallel episodes each build their own tape against the
// same read-only parameter values (parameter leaves borrow, never copy).

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "fsloc/tensor.hpp"

namespace fsloc::ad {

struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable leaf owning its value.
  Var input(Tensor value);
  /// Differentiable leaf borrowing `value`; it must outlive the tape.
  /// `tag` is an opaque caller id (parameter slot) reported by borrowed_leaves().
  Var borrowed(const Tensor& value, std::size_t tag, bool requires_grad = true);

  /// Appends a node. `fn` is dropped when requires_grad is false.
  Var record(Tensor value, bool requires_grad, BackwardFn fn);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient after backward(); an all-zero tensor when nothing reached v.
  Tensor grad(Var v) const;
  /// Mutable gradient buffer for use inside backward functions; nullptr if
  /// v does not require a gradient. Allocated zeroed on first use.
  double* grad_buffer(Var v);

  /// Zeroes all gradients, seeds d(loss)/d(loss) = 1 and sweeps the tape in
  /// reverse. May be called again; each call recomputes from scratch.
  void backward(Var loss);

  const std::vector<std::pair<std::size_t, Var>>& borrowed_leaves() const { return borrowed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };
  std::deque<Node> nodes_;
  std::vector<std::pair<std::size_t, Var>> borrowed_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Rank-2 arguments are [rows x cols]; a rank-1
// argument is treated as a single row where a matrix is expected.

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// a + s * I for square a.
Var add_scaled_identity(Tape& t, Var a, double s);
/// x[B x n] + bias[n] broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var bias);
Var relu(Tape& t, Var x);
Var leaky_relu(Tape& t, Var x, double slope);
Var reshape(Tape& t, Var x, Shape shape);
Var transpose(Tape& t, Var x);
Var row_softmax(Tape& t, Var x);
/// [n x d] -> [(n*n) x d], row i*n+j = |x_i - x_j|.
Var pairwise_absdiff(Tape& t, Var x);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, Var a, Var b);
Var select_row(Tape& t, Var x, std::size_t row);
/// Elementwise product with a constant mask.
Var mask(Tape& t, Var x, Tensor mask);
Var sum(Tape& t, Var x);
Var dot(Tape& t, Var a, Var b);

/// Mean over rows of -sum_n target[r, n] * log(max(probs[r, n], clip)).
Var cross_entropy(Tape& t, Var probs, const Tensor& targets, double clip = 1e-12);

/// Cross-correlation over x[B x C_in x T] with w[C_out x C_in x K], b[C_out].
Var conv1d(Tape& t, Var x, Var w, Var b, std::size_t stride, std::size_t pad_left, std::size_t out_length);

/// Left padding that yields ceil(length / stride) outputs ("same" padding).
struct ConvPadding {
  std::size_t pad_left;
  std::size_t out_length;
};
ConvPadding halving_padding(std::size_t length, std::size_t kernel, std::size_t stride);

struct BatchNormResult {
  Var out;
  Tensor batch_mean;  // per channel, empty in eval mode
  Tensor batch_var;   // unbiased, per channel, empty in eval mode
};

/// Per-channel normalization of x[B x C] or x[B x C x T]. Train mode uses
/// batch statistics; eval mode uses the supplied running statistics. The
/// standard deviation is sqrt(max(var, eps)).
BatchNormResult batchnorm(Tape& t, Var x, Var gamma, Var beta, bool train, const Tensor& running_mean,
                          const Tensor& running_var, double eps = 1e-5);

}  // namespace fsloc::ad
