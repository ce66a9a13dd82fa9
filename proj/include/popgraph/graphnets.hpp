#pragma once

#include "popgraph/autodiff.hpp"
#include "popgraph/common.hpp"

#include <random>
#include <string>
#include <vector>

namespace popgraph {

struct Hypergraph {
  std::size_t n_nodes = 0;
  std::vector<std::vector<std::size_t>> hyperedges;
  std::vector<double> edge_weights;  // positive, one per hyperedge

  void validate() const;
};

/// Per node i, hyperedge e_i = {i} ∪ kNN(i) under Euclidean distance in the
/// latent space; distance ties resolved to the lower node index; weights 1.
Hypergraph build_knn_hypergraph(const Mat& latent, int k);

/// X' = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2} X Θ. The hypergraph is fixed
/// structure; gradients flow through X and Θ.
Tensor hypergraph_convolution(const Hypergraph& hg, const Tensor& x, const Tensor& theta);

/// a_ij = σ((t − ‖z_i − z_j‖)/τ) for i≠j, a_ii = 1. Differentiable in the
/// latent z and the learned threshold t (1×1 tensor).
Tensor build_soft_adjacency(const Tensor& latent, const Tensor& threshold, double temperature);

/// X' = D^{-1/2} A D^{-1/2} X Θ with D = diag(row sums); differentiable
/// through A, X and Θ.
Tensor graph_convolution(const Tensor& a, const Tensor& x, const Tensor& theta);

/// Mean over patients of softplus(−ỹ·s), ỹ ∈ {−1,+1}.
Tensor bce_loss(const Tensor& scores, const std::vector<int>& labels);

/// −(1/N_E)·Σ_{i: E_i=1} [h_i − log Σ_{T_j ≥ T_i} e^{h_j}] + l2_lambda·Σ‖θ‖²
/// with Breslow ties; risk sets use the ≥ comparison.
Tensor cox_partial_loss(const Tensor& risks, const std::vector<double>& times,
                        const std::vector<bool>& events, double l2_lambda,
                        const std::vector<Tensor>& params);

enum class HeadKind { classification, survival };

struct NetworkConfig {
  int latent_dim = 16;
  std::vector<int> hidden_dims = {32, 32};  // the two convolution widths; equal for the residual
  int k_neighbors = 5;                      // PHGN
  double soft_threshold_init = 1.0;         // LPNL
  double temperature = 1.0;                 // LPNL
  HeadKind head = HeadKind::classification;
  double dropout_rate = 0.0;

  void validate() const;
};

/// Node projection (affine + ReLU), kNN hypergraph from the latent values
/// (structure non-differentiable), two hypergraph convolutions with ELU and
/// row l2 normalization, residual across the second, then a two-layer head.
/// Output: one raw score per node.
class PHGNModel {
 public:
  PHGNModel(int in_features, const NetworkConfig& cfg, std::uint64_t seed);

  Tensor forward(const Mat& x, bool training = false, std::mt19937_64* rng = nullptr);
  std::vector<Tensor> parameters();
  NamedParams named_parameters();
  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  Tensor w_proj_, b_proj_, theta1_, theta2_, w_head1_, b_head1_, w_head2_, b_head2_;
};

/// Two-layer MLP projection, learned soft adjacency, two graph convolutions
/// with ReLU, two-layer head. The threshold t trains with the rest.
class LPNLModel {
 public:
  LPNLModel(int in_features, const NetworkConfig& cfg, std::uint64_t seed);

  Tensor forward(const Mat& x, bool training = false, std::mt19937_64* rng = nullptr);
  std::vector<Tensor> parameters();
  NamedParams named_parameters();
  const NetworkConfig& config() const { return cfg_; }
  double threshold_value() const { return threshold_.value()(0, 0); }

 private:
  NetworkConfig cfg_;
  Tensor w_mlp1_, b_mlp1_, w_mlp2_, b_mlp2_, threshold_, theta1_, theta2_, w_head1_, b_head1_,
      w_head2_, b_head2_;
};

}  // namespace popgraph
