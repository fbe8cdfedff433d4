#include "fsloc/variants.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsloc/error.hpp"

namespace fsloc {

std::size_t topk_count(double beta, std::size_t n) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
  // Guard against beta * n landing a hair above an integer.
  const double raw = beta * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

Tensor topk_mask(const Tensor& adjacency, double beta) {
  const std::size_t r = adjacency.rows(), c = adjacency.cols();
  const std::size_t k = topk_count(beta, c);
  Tensor m(adjacency.shape());
  std::vector<std::size_t> idx(c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = adjacency.ptr() + i * c;
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
      return row[a] > row[b] || (row[a] == row[b] && a < b);
    });
    for (std::size_t j = 0; j < k; ++j) m[i * c + idx[j]] = 1.0;
  }
  return m;
}

ad::Var sparsify_topk(ad::Tape& t, ad::Var adjacency, double beta) {
  return ad::mask(t, adjacency, topk_mask(t.value(adjacency), beta));
}

Tensor sparsify_topk(const Tensor& adjacency, double beta) {
  ad::Tape t;
  return t.value(sparsify_topk(t, t.constant(adjacency), beta));
}

Tensor edge_labels(const std::vector<int>& node_classes) {
  const std::size_t n = node_classes.size();
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) = node_classes[i] == node_classes[j] ? 1.0 : 0.0;
  return a;
}

Tensor edge_labels(const Episode& episode) { return edge_labels(episode.node_classes()); }

ad::Var loss_edge(ad::Tape& t, ad::Var w, const Tensor& alpha, double clip) {
  const Tensor& wv = t.value(w);
  if (wv.shape() != alpha.shape() || wv.rows() != wv.cols())
    throw ShapeError("loss_edge: w and alpha must be the same square shape");
  const std::size_t n = wv.rows();
  const double edges = static_cast<double>(n * (n + 1) / 2);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      // Each log is floored separately, and a zero-weight term is skipped, so
      // a perfect prediction costs exactly zero.
      const double p = wv.at(i, j);
      const double a = alpha.at(i, j);
      if (a > 0.0) loss -= a * std::log(std::max(p, clip));
      if (a < 1.0) loss -= (1.0 - a) * std::log(std::max(1.0 - p, clip));
    }
  loss /= edges;
  return t.record(Tensor::scalar(loss), t.requires_grad(w), [w, alpha, clip, n, edges](ad::Tape& tp, const Tensor& g) {
    double* gw = tp.grad_buffer(w);
    const Tensor& wv = tp.value(w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double p = wv.at(i, j);
        const double a = alpha.at(i, j);
        double d = 0.0;
        if (a > 0.0 && p > clip) d -= a / p;  // floored logs are flat
        if (a < 1.0 && 1.0 - p > clip) d += (1.0 - a) / (1.0 - p);
        gw[i * n + j] += g[0] * d / edges;
      }
  });
}

double loss_edge(const Tensor& w, const Tensor& alpha, double clip) {
  ad::Tape t;
  return t.value(loss_edge(t, t.constant(w), alpha, clip)).item();
}

ad::Var loss_egnn(ad::Tape& t, ad::Var gnn_loss, ad::Var edge_loss, double gamma) {
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  return ad::add(t, gnn_loss, ad::scale(t, edge_loss, gamma));
}

ad::Var graph_laplacian(ad::Tape& t, ad::Var adjacency, bool symmetrize) {
  const Tensor& av = t.value(adjacency);
  if (av.rank() != 2 || av.rows() != av.cols()) throw ShapeError("graph_laplacian: adjacency must be square");
  const std::size_t n = av.rows();
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) w.at(i, j) = symmetrize ? 0.5 * (av.at(i, j) + av.at(j, i)) : av.at(i, j);
  std::vector<double> deg(n, 0.0), s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += w.at(i, j);
    s[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  }
  Tensor L({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) L.at(i, j) = i == j ? 1.0 : -w.at(i, j) * s[i] * s[j];

  return t.record(std::move(L), t.requires_grad(adjacency),
                  [adjacency, symmetrize, n, w = std::move(w), deg, s](ad::Tape& tp, const Tensor& g) {
                    // L_ij = -w_ij s_i s_j, s_i = deg_i^{-1/2}, deg_i = sum_j w_ij
                    Tensor gw({n, n});
                    std::vector<double> gs(n, 0.0);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        if (i == j) continue;
                        const double gij = -g.at(i, j);
                        gw.at(i, j) += gij * s[i] * s[j];
                        gs[i] += gij * w.at(i, j) * s[j];
                        gs[j] += gij * w.at(i, j) * s[i];
                      }
                    for (std::size_t i = 0; i < n; ++i) {
                      if (!(deg[i] > 0.0)) continue;
                      const double gdeg = gs[i] * -0.5 * s[i] * s[i] * s[i];
                      for (std::size_t j = 0; j < n; ++j)
                        if (j != i) gw.at(i, j) += gdeg;
                    }
                    double* ga = tp.grad_buffer(adjacency);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        if (i == j) continue;
                        if (symmetrize) {
                          ga[i * n + j] += 0.5 * gw.at(i, j);
                          ga[j * n + i] += 0.5 * gw.at(i, j);
                        } else {
                          ga[i * n + j] += gw.at(i, j);
                        }
                      }
                  });
}

Tensor graph_laplacian(const Tensor& adjacency, bool symmetrize) {
  ad::Tape t;
  return t.value(graph_laplacian(t, t.constant(adjacency), symmetrize));
}

double estimate_lambda_max(const Tensor& m, std::size_t iterations, double tol) {
  const std::size_t n = m.rows();
  if (n == 0 || m.cols() != n) throw ShapeError("estimate_lambda_max: matrix must be square");
  // Deterministic start vector with no special alignment to the spectrum.
  std::vector<double> v(n), next(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    for (double& x : v) x /= nrm;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += m.at(i, j) * v[j];
      next[i] = acc;
    }
    double rayleigh = 0.0;
    for (std::size_t i = 0; i < n; ++i) rayleigh += v[i] * next[i];
    const bool done = it > 0 && std::abs(rayleigh - lambda) < tol * std::max(1.0, std::abs(rayleigh));
    lambda = rayleigh;
    v.swap(next);
    if (done) break;
  }
  return std::abs(lambda);
}

ad::Var chebyshev_basis(ad::Tape& t, ad::Var laplacian, ad::Var x, std::size_t order, double lambda_max) {
  if (order < 1) throw ConfigError("Chebyshev order must be >= 1");
  if (!(lambda_max > 0.0)) throw ConfigError("lambda_max must be > 0");
  std::vector<ad::Var> blocks{x};
  if (order >= 2) {
    ad::Var lt = ad::add_scaled_identity(t, ad::scale(t, laplacian, 2.0 / lambda_max), -1.0);
    blocks.push_back(ad::matmul(t, lt, x));
    for (std::size_t k = 2; k < order; ++k) {
      ad::Var next = ad::sub(t, ad::scale(t, ad::matmul(t, lt, blocks[k - 1]), 2.0), blocks[k - 2]);
      blocks.push_back(next);
    }
  }
  if (blocks.size() == 1) return x;
  return ad::concat_cols(t, blocks);
}

Tensor chebyshev_basis(const Tensor& laplacian, const Tensor& x, std::size_t order, double lambda_max) {
  ad::Tape t;
  return t.value(chebyshev_basis(t, t.constant(laplacian), t.constant(x), order, lambda_max));
}

ad::Var chebynet_node_update(ad::Tape& t, ad::Var basis, ad::Var filter, ad::Var x, double slope) {
  const Tensor& bv = t.value(basis);
  const Tensor& fv = t.value(filter);
  if (bv.cols() != fv.rows())
    throw ShapeError("chebynet_node_update: basis width " + std::to_string(bv.cols()) + " vs filter rows " +
                     std::to_string(fv.rows()));
  return ad::concat_cols(t, ad::leaky_relu(t, ad::matmul(t, basis, filter), slope), x);
}

}  // namespace fsloc
