#include "fsloc/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "fsloc/error.hpp"
#include "fsloc/kernels.hpp"

namespace fsloc::ad {

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::input(Tensor value) { return record(std::move(value), true, nullptr); }

Var Tape::borrowed(const Tensor& value, std::size_t tag, bool requires_grad) {
  Node n;
  n.borrowed = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  borrowed_.emplace_back(tag, v);
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).value(); }

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor(n.value().shape());
  return n.grad;
}

double* Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value().shape());
  return n.grad.ptr();
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // The closure may allocate grads of earlier nodes; deque keeps n valid.
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

struct Dims {
  std::size_t rows, cols;
};

Dims dims2(const Tensor& t) { return {t.rows(), t.cols()}; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void axpy(double* dst, const double* src, std::size_t n, double s = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < n; ++i) dst[i] += s * src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// primitives

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const auto [m, k] = dims2(av);
  const auto [k2, n] = dims2(bv);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  Tensor out({m, n});
  kernels::matmul_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b, m, n, k](Tape& tp, const Tensor& g) {
    if (double* ga = tp.grad_buffer(a)) kernels::matmul_nt(m, n, k, g.ptr(), tp.value(b).ptr(), ga, true);
    if (double* gb = tp.grad_buffer(b)) kernels::matmul_tn(m, n, k, tp.value(a).ptr(), g.ptr(), gb, true);
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tp, const Tensor& g) {
    axpy(tp.grad_buffer(a), g.ptr(), g.size());
    axpy(tp.grad_buffer(b), g.ptr(), g.size());
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tp, const Tensor& g) {
    axpy(tp.grad_buffer(a), g.ptr(), g.size());
    axpy(tp.grad_buffer(b), g.ptr(), g.size(), -1.0);
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(out), rg, [a, b](Tape& tp, const Tensor& g) {
    if (double* ga = tp.grad_buffer(a)) {
      const Tensor& bv = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (double* gb = tp.grad_buffer(b)) {
      const Tensor& av = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  for (double& v : out.data()) v *= s;
  return t.record(std::move(out), t.requires_grad(a),
                  [a, s](Tape& tp, const Tensor& g) { axpy(tp.grad_buffer(a), g.ptr(), g.size(), s); });
}

Var add_scaled_identity(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  const auto [r, c] = dims2(out);
  if (r != c) throw ShapeError("add_scaled_identity: matrix not square " + shape_string(out.shape()));
  for (std::size_t i = 0; i < r; ++i) out.at(i, i) += s;
  return t.record(std::move(out), t.requires_grad(a),
                  [a](Tape& tp, const Tensor& g) { axpy(tp.grad_buffer(a), g.ptr(), g.size()); });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  const auto [r, c] = dims2(xv);
  if (bv.size() != c)
    throw ShapeError("add_row_bias: bias of " + std::to_string(bv.size()) + " for " + std::to_string(c) +
                     " columns");
  Tensor out = xv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const bool rg = t.requires_grad(x) || t.requires_grad(bias);
  return t.record(std::move(out), rg, [x, bias, r, c](Tape& tp, const Tensor& g) {
    axpy(tp.grad_buffer(x), g.ptr(), g.size());
    if (double* gb = tp.grad_buffer(bias))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
  });
}

Var leaky_relu(Tape& t, Var x, double slope) {
  Tensor out = t.value(x);
  for (double& v : out.data())
    if (v < 0.0) v *= slope;
  // Subgradient at 0 is 0 for relu and slope for leaky; 0 is not < 0 so
  // the "positive" branch applies only when v > 0.
  return t.record(std::move(out), t.requires_grad(x), [x, slope](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    const Tensor& xv = tp.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      gx[i] += g[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? slope : 0.0));
    }
  });
}

Var relu(Tape& t, Var x) { return leaky_relu(t, x, 0.0); }

Var reshape(Tape& t, Var x, Shape shape) {
  Tensor out = t.value(x).reshaped(std::move(shape));
  return t.record(std::move(out), t.requires_grad(x),
                  [x](Tape& tp, const Tensor& g) { axpy(tp.grad_buffer(x), g.ptr(), g.size()); });
}

Var transpose(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const auto [r, c] = dims2(xv);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return t.record(std::move(out), t.requires_grad(x), [x, r, c](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Var row_softmax(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const auto [r, c] = dims2(xv);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.ptr() + i * c;
    double* oi = out.ptr() + i * c;
    const double mx = *std::max_element(xi, xi + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (oi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < c; ++j) oi[j] /= z;
  }
  Tensor saved = out;
  return t.record(std::move(out), t.requires_grad(x), [x, r, c, y = std::move(saved)](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i) {
      const double* yi = y.ptr() + i * c;
      const double* gi = g.ptr() + i * c;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += gi[j] * yi[j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yi[j] * (gi[j] - s);
    }
  });
}

Var pairwise_absdiff(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const auto [n, d] = dims2(xv);
  Tensor out({n * n, d});
  kernels::pairwise_absdiff(n, d, xv.ptr(), out.ptr());
  return t.record(std::move(out), t.requires_grad(x), [x, n, d](Tape& tp, const Tensor& g) {
    kernels::pairwise_absdiff_backward(n, d, tp.value(x).ptr(), g.ptr(), tp.grad_buffer(x));
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = t.value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.rows() != r) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(v.cols());
    total += v.cols();
    rg = rg || t.requires_grad(p);
  }
  Tensor out({r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = t.value(parts[k]);
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.ptr() + i * widths[k], widths[k], out.ptr() + i * total + off);
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs, widths, r, total](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (double* gp = tp.grad_buffer(inputs[k]))
        for (std::size_t i = 0; i < r; ++i)
          axpy(gp + i * widths[k], g.ptr() + i * total + off, widths[k]);
      off += widths[k];
    }
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(t, parts);
}

Var select_row(Tape& t, Var x, std::size_t row) {
  const Tensor& xv = t.value(x);
  const auto [r, c] = dims2(xv);
  if (row >= r) throw ShapeError("select_row: row out of range");
  Tensor out({1, c}, std::vector<double>(xv.ptr() + row * c, xv.ptr() + (row + 1) * c));
  return t.record(std::move(out), t.requires_grad(x), [x, row, c](Tape& tp, const Tensor& g) {
    axpy(tp.grad_buffer(x) + row * c, g.ptr(), c);
  });
}

Var mask(Tape& t, Var x, Tensor m) {
  const Tensor& xv = t.value(x);
  require_same_shape(xv, m, "mask");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return t.record(std::move(out), t.requires_grad(x), [x, m = std::move(m)](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * m[i];
  });
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return t.record(Tensor::scalar(s), t.requires_grad(x), [x](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    const std::size_t n = tp.value(x).size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

Var dot(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.size() != bv.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(Tensor::scalar(s), rg, [a, b](Tape& tp, const Tensor& g) {
    axpy(tp.grad_buffer(a), tp.value(b).ptr(), tp.value(b).size(), g[0]);
    axpy(tp.grad_buffer(b), tp.value(a).ptr(), tp.value(a).size(), g[0]);
  });
}

Var cross_entropy(Tape& t, Var probs, const Tensor& targets, double clip) {
  const Tensor& pv = t.value(probs);
  if (pv.size() != targets.size()) throw ShapeError("cross_entropy: probs/targets size mismatch");
  const std::size_t rows = pv.rank() == 1 ? 1 : pv.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (targets[i] != 0.0) loss -= targets[i] * std::log(std::max(pv[i], clip));
  loss /= static_cast<double>(rows);
  return t.record(Tensor::scalar(loss), t.requires_grad(probs),
                  [probs, targets, clip, rows](Tape& tp, const Tensor& g) {
                    double* gp = tp.grad_buffer(probs);
                    const Tensor& pv = tp.value(probs);
                    const double s = g[0] / static_cast<double>(rows);
                    for (std::size_t i = 0; i < pv.size(); ++i)
                      if (targets[i] != 0.0 && pv[i] > clip) gp[i] -= s * targets[i] / pv[i];
                  });
}

ConvPadding halving_padding(std::size_t length, std::size_t kernel, std::size_t stride) {
  const std::size_t out = (length + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t pad_total = needed > length ? needed - length : 0;
  return {pad_total / 2, out};
}

Var conv1d(Tape& t, Var x, Var w, Var b, std::size_t stride, std::size_t pad_left, std::size_t out_length) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.rank() != 3 || wv.rank() != 3)
    throw ShapeError("conv1d: expected x[B x C x T] and w[O x C x K], got " + shape_string(xv.shape()) +
                     " and " + shape_string(wv.shape()));
  if (wv.dim(1) != xv.dim(1)) throw ShapeError("conv1d: input channel mismatch");
  if (b.valid() && t.value(b).size() != wv.dim(0)) throw ShapeError("conv1d: bias size mismatch");
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  const kernels::Conv1dShape s{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(2), stride, pad_left,
                               out_length};
  Tensor out({s.batch, s.out_channels, s.out_length});
  kernels::conv1d_forward(s, xv.ptr(), wv.ptr(), b.valid() ? t.value(b).ptr() : nullptr, out.ptr());
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || (b.valid() && t.requires_grad(b));
  return t.record(std::move(out), rg, [x, w, b, s](Tape& tp, const Tensor& g) {
    kernels::conv1d_backward(s, tp.value(x).ptr(), tp.value(w).ptr(), g.ptr(), tp.grad_buffer(x),
                             tp.grad_buffer(w), b.valid() ? tp.grad_buffer(b) : nullptr);
  });
}

BatchNormResult batchnorm(Tape& t, Var x, Var gamma, Var beta, bool train, const Tensor& running_mean,
                          const Tensor& running_var, double eps) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2 && xv.rank() != 3)
    throw ShapeError("batchnorm: expected [B x C] or [B x C x T], got " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), inner = xv.rank() == 3 ? xv.dim(2) : 1;
  const std::size_t count = batch * inner;
  if (t.value(gamma).size() != channels || t.value(beta).size() != channels)
    throw ShapeError("batchnorm: scale/shift size mismatch");
  if (train && batch < 2) throw ShapeError("batchnorm: train mode needs a batch of at least 2");

  auto index = [&](std::size_t b, std::size_t c, std::size_t i) { return (b * channels + c) * inner + i; };

  Tensor mean({channels}), var({channels});
  BatchNormResult res;
  if (train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) s += xv[index(b, c, i)];
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = xv[index(b, c, i)] - mu;
          ss += d * d;
        }
      mean[c] = mu;
      var[c] = ss / static_cast<double>(count);
    }
    res.batch_mean = mean;
    res.batch_var = var;
    for (std::size_t c = 0; c < channels; ++c)
      res.batch_var[c] = count > 1 ? var[c] * static_cast<double>(count) / static_cast<double>(count - 1) : 0.0;
  } else {
    if (running_mean.size() != channels || running_var.size() != channels)
      throw ShapeError("batchnorm: running statistics size mismatch");
    mean = running_mean;
    var = running_var;
  }

  // floored[c]: variance below eps, so std is the constant sqrt(eps).
  Tensor inv_std({channels});
  std::vector<bool> floored(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    floored[c] = !(var[c] >= eps);
    inv_std[c] = 1.0 / std::sqrt(floored[c] ? eps : var[c]);
  }
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  Tensor xhat(xv.shape()), out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = index(b, c, i);
        xhat[k] = (xv[k] - mean[c]) * inv_std[c];
        out[k] = gv[c] * xhat[k] + bv[c];
      }

  const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  res.out = t.record(
      std::move(out), rg,
      [x, gamma, beta, train, batch, channels, inner, count, inv_std, floored, xhat = std::move(xhat)](
          Tape& tp, const Tensor& g) {
        auto index = [&](std::size_t b, std::size_t c, std::size_t i) { return (b * channels + c) * inner + i; };
        double* gx = tp.grad_buffer(x);
        double* gg = tp.grad_buffer(gamma);
        double* gb = tp.grad_buffer(beta);
        const Tensor& gv = tp.value(gamma);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = index(b, c, i);
              sum_g += g[k];
              sum_gx += g[k] * xhat[k];
            }
          if (gg) gg[c] += sum_gx;
          if (gb) gb[c] += sum_g;
          if (!gx) continue;
          const double scale = gv[c] * inv_std[c];
          if (!train) {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < inner; ++i) gx[index(b, c, i)] += scale * g[index(b, c, i)];
            continue;
          }
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = floored[c] ? 0.0 : sum_gx / static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = index(b, c, i);
              gx[k] += scale * (g[k] - mean_g - xhat[k] * mean_gx);
            }
        }
      });
  return res;
}

}  // namespace fsloc::ad
