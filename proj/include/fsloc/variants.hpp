#pragma once

#include <vector>

#include "fsloc/autodiff.hpp"
#include "fsloc/episode.hpp"

namespace fsloc {

/// Keep-count for a row of width n: ceil(beta * n), at least 1.
std::size_t topk_count(double beta, std::size_t n);

/// 0/1 mask of the ceil(beta * n) largest entries per row; ties go to the
/// lower column index. beta must lie in (0, 1].
Tensor topk_mask(const Tensor& adjacency, double beta);

/// Row-wise top-k masking; kept values pass through unchanged (no
/// renormalization).
ad::Var sparsify_topk(ad::Tape& t, ad::Var adjacency, double beta);
Tensor sparsify_topk(const Tensor& adjacency, double beta);

/// alpha[i][j] = 1 iff nodes i and j share an episode class (query uses its
/// true class), so the diagonal is all ones.
Tensor edge_labels(const Episode& episode);
Tensor edge_labels(const std::vector<int>& node_classes);

inline constexpr double kEdgeProbClip = 1e-7;

/// Binary cross-entropy over the upper triangle (i <= j) of `w`, divided by
/// |E| = n(n+1)/2. Each log argument is floored at `clip`; terms with zero weight are skipped.
ad::Var loss_edge(ad::Tape& t, ad::Var w, const Tensor& alpha, double clip = kEdgeProbClip);
double loss_edge(const Tensor& w, const Tensor& alpha, double clip = kEdgeProbClip);

/// gnn + gamma * edge
ad::Var loss_egnn(ad::Tape& t, ad::Var gnn_loss, ad::Var edge_loss, double gamma);

/// Normalized weighted Laplacian of the graph whose off-diagonal weights are
/// (A + A^T)/2 (or A itself when `symmetrize` is false) with zero diagonal:
///   L_ii = 1,  L_ij = -w_ij / sqrt(w_i w_j)  (0 when w_i w_j = 0)
/// where w_i is the i-th row sum of the weights.
ad::Var graph_laplacian(ad::Tape& t, ad::Var adjacency, bool symmetrize = true);
Tensor graph_laplacian(const Tensor& adjacency, bool symmetrize = true);

/// Largest eigenvalue magnitude of a square matrix by power iteration.
double estimate_lambda_max(const Tensor& m, std::size_t iterations = 100, double tol = 1e-6);

/// [X_1, ..., X_n] with X_1 = X, X_2 = Lt X, X_k = 2 Lt X_{k-1} - X_{k-2},
/// Lt = 2 L / lambda_max - I.
ad::Var chebyshev_basis(ad::Tape& t, ad::Var laplacian, ad::Var x, std::size_t order, double lambda_max);
Tensor chebyshev_basis(const Tensor& laplacian, const Tensor& x, std::size_t order, double lambda_max);

/// [leaky_relu(Xt Wt), X]
ad::Var chebynet_node_update(ad::Tape& t, ad::Var basis, ad::Var filter, ad::Var x, double slope);

}  // namespace fsloc
