#include "popgraph/graphnets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace popgraph {

void Hypergraph::validate() const {
  if (hyperedges.size() != edge_weights.size())
    throw DataError("Hypergraph: edge weight count mismatch");
  for (const auto& edge : hyperedges) {
    if (edge.empty()) throw DataError("Hypergraph: empty hyperedge");
    for (std::size_t v : edge)
      if (v >= n_nodes) throw DataError("Hypergraph: node index out of range");
  }
  for (double w : edge_weights)
    if (!(w > 0.0)) throw DataError("Hypergraph: edge weights must be positive");
}

Hypergraph build_knn_hypergraph(const Mat& latent, int k) {
  const std::size_t n = static_cast<std::size_t>(latent.rows());
  if (k < 1) throw ConfigError("build_knn_hypergraph: k must be >= 1");
  if (static_cast<std::size_t>(k) >= n)
    throw DataError("build_knn_hypergraph: k must be smaller than the node count");

  Hypergraph hg;
  hg.n_nodes = n;
  hg.hyperedges.reserve(n);
  hg.edge_weights.assign(n, 1.0);
  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = (latent.row(static_cast<Eigen::Index>(j)) - latent.row(static_cast<Eigen::Index>(i))).norm();
      dist.emplace_back(d, j);
    }
    // pair ordering gives the tie rule: equal distances pick the lower index.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<std::size_t> edge;
    edge.reserve(static_cast<std::size_t>(k) + 1);
    edge.push_back(i);
    for (int j = 0; j < k; ++j) edge.push_back(dist[static_cast<std::size_t>(j)].second);
    hg.hyperedges.push_back(std::move(edge));
  }
  return hg;
}

namespace {

// Dense mixing matrix M = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}, assembled
// edge by edge: each hyperedge contributes (w_e/|e|) on its member pairs.
Mat hypergraph_mixing_matrix(const Hypergraph& hg) {
  const auto n = static_cast<Eigen::Index>(hg.n_nodes);
  Vec degree = Vec::Zero(n);
  for (std::size_t e = 0; e < hg.hyperedges.size(); ++e)
    for (std::size_t v : hg.hyperedges[e]) degree[static_cast<Eigen::Index>(v)] += hg.edge_weights[e];
  for (Eigen::Index i = 0; i < n; ++i)
    if (degree[i] <= 0.0)
      throw DataError("hypergraph_convolution: node " + std::to_string(i) + " has no hyperedge");
  Vec dv_isqrt = degree.array().rsqrt().matrix();

  Mat m = Mat::Zero(n, n);
  for (std::size_t e = 0; e < hg.hyperedges.size(); ++e) {
    const auto& members = hg.hyperedges[e];
    double scale = hg.edge_weights[e] / static_cast<double>(members.size());
    for (std::size_t a : members) {
      auto ia = static_cast<Eigen::Index>(a);
      for (std::size_t b : members) {
        auto ib = static_cast<Eigen::Index>(b);
        m(ia, ib) += scale * dv_isqrt[ia] * dv_isqrt[ib];
      }
    }
  }
  return m;
}

}  // namespace

Tensor hypergraph_convolution(const Hypergraph& hg, const Tensor& x, const Tensor& theta) {
  hg.validate();
  if (static_cast<std::size_t>(x.rows()) != hg.n_nodes)
    throw std::invalid_argument("hypergraph_convolution: node count mismatch");
  Tensor mixing = Tensor::constant(hypergraph_mixing_matrix(hg));
  return matmul(mixing, matmul(x, theta));
}

Tensor build_soft_adjacency(const Tensor& latent, const Tensor& threshold, double temperature) {
  if (temperature <= 0.0) throw ConfigError("build_soft_adjacency: temperature must be positive");
  if (threshold.rows() != 1 || threshold.cols() != 1)
    throw std::invalid_argument("build_soft_adjacency: threshold must be 1x1");

  const Mat z = latent.value();
  const double t = threshold.value()(0, 0);
  const Eigen::Index n = z.rows();

  Mat dist = Mat::Zero(n, n);
  Mat a = Mat::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double d = (z.row(i) - z.row(j)).norm();
      double s = sigmoid((t - d) / temperature);
      dist(i, j) = d;
      dist(j, i) = d;
      a(i, j) = s;
      a(j, i) = s;
    }
  }

  auto backward = [z, a, dist, temperature](const Mat& upstream,
                                            const std::function<void(std::size_t, const Mat&)>& accum) {
    const Eigen::Index nn = z.rows();
    Mat grad_z = Mat::Zero(nn, z.cols());
    double grad_t = 0.0;
    for (Eigen::Index i = 0; i < nn; ++i) {
      for (Eigen::Index j = i + 1; j < nn; ++j) {
        double s = a(i, j);
        double ds = s * (1.0 - s) / temperature;  // ∂a/∂t; ∂a/∂d = −ds
        double g = upstream(i, j) + upstream(j, i);
        grad_t += g * ds;
        double d = dist(i, j);
        if (d > 0.0) {
          // ∂d/∂z_i = (z_i − z_j)/d; the diagonal is constant 1.
          Eigen::RowVectorXd dir = (z.row(i) - z.row(j)) / d;
          grad_z.row(i) -= g * ds * dir;
          grad_z.row(j) += g * ds * dir;
        }
      }
    }
    accum(0, grad_z);
    accum(1, Mat::Constant(1, 1, grad_t));
  };
  return custom_op("build_soft_adjacency", std::move(a), {latent, threshold}, backward);
}

Tensor graph_convolution(const Tensor& a, const Tensor& x, const Tensor& theta) {
  if (a.rows() != a.cols()) throw std::invalid_argument("graph_convolution: A must be square");
  if (a.value().rowwise().sum().minCoeff() <= 0.0)
    throw DataError("graph_convolution: zero row sum");
  Tensor d = row_sum(a);
  Tensor s = rsqrt(d);
  Tensor norm = mul(a, matmul(s, transpose(s)));
  return matmul(matmul(norm, x), theta);
}

Tensor bce_loss(const Tensor& scores, const std::vector<int>& labels) {
  const Eigen::Index n = scores.rows();
  if (scores.cols() != 1) throw std::invalid_argument("bce_loss: scores must be n x 1");
  if (labels.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("bce_loss: label count mismatch");
  const Mat s = scores.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw DataError("bce_loss: labels must be 0/1");
    total += log1pexp(y == 1 ? -s(i, 0) : s(i, 0));
  }
  Mat value = Mat::Constant(1, 1, total / static_cast<double>(n));

  std::vector<int> y = labels;
  auto backward = [s, y](const Mat& upstream,
                         const std::function<void(std::size_t, const Mat&)>& accum) {
    const Eigen::Index nn = s.rows();
    Mat grad(nn, 1);
    const double scale = upstream(0, 0) / static_cast<double>(nn);
    for (Eigen::Index i = 0; i < nn; ++i)
      grad(i, 0) = scale * (sigmoid(s(i, 0)) - static_cast<double>(y[static_cast<std::size_t>(i)]));
    accum(0, grad);
  };
  return custom_op("bce_loss", std::move(value), {scores}, backward);
}

Tensor cox_partial_loss(const Tensor& risks, const std::vector<double>& times,
                        const std::vector<bool>& events, double l2_lambda,
                        const std::vector<Tensor>& params) {
  const Eigen::Index n = risks.rows();
  if (risks.cols() != 1) throw std::invalid_argument("cox_partial_loss: risks must be n x 1");
  if (times.size() != static_cast<std::size_t>(n) || events.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("cox_partial_loss: times/events size mismatch");
  std::size_t n_events = 0;
  for (bool e : events) n_events += static_cast<std::size_t>(e);
  if (n_events == 0) throw DataError("cox_partial_loss: no events");

  std::vector<std::size_t> asc(static_cast<std::size_t>(n));
  std::iota(asc.begin(), asc.end(), std::size_t{0});
  std::sort(asc.begin(), asc.end(),
            [&times](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  const Vec h = risks.value().col(0);
  const double shift = h.maxCoeff();
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::size_t i = static_cast<std::size_t>(n); i-- > 0;)
    suffix[i] = suffix[i + 1] + std::exp(h[static_cast<Eigen::Index>(asc[i])] - shift);

  // Per-patient Ã_k = Σ_{event times t ≤ T_k} d_t / S̃(t); risk sets use ≥,
  // so tied patients see their own event time's term (Breslow).
  Vec a_cum(n);
  double loglik = 0.0;
  double cum = 0.0;
  std::size_t i = 0;
  while (i < static_cast<std::size_t>(n)) {
    std::size_t j = i;
    int d = 0;
    while (j < static_cast<std::size_t>(n) && times[asc[j]] == times[asc[i]]) {
      d += static_cast<int>(events[asc[j]]);
      ++j;
    }
    if (d > 0) {
      double log_s = shift + std::log(suffix[i]);
      cum += static_cast<double>(d) / suffix[i];
      for (std::size_t k = i; k < j; ++k)
        if (events[asc[k]]) loglik += h[static_cast<Eigen::Index>(asc[k])] - log_s;
    }
    for (std::size_t k = i; k < j; ++k) a_cum[static_cast<Eigen::Index>(asc[k])] = cum;
    i = j;
  }
  Mat value = Mat::Constant(1, 1, -loglik / static_cast<double>(n_events));

  const double ne = static_cast<double>(n_events);
  std::vector<bool> ev = events;
  auto backward = [h, shift, a_cum, ev, ne](const Mat& upstream,
                                            const std::function<void(std::size_t, const Mat&)>& accum) {
    Mat grad(h.size(), 1);
    const double scale = upstream(0, 0) / ne;
    for (Eigen::Index k = 0; k < h.size(); ++k) {
      double ea = std::exp(h[k] - shift) * a_cum[k];
      grad(k, 0) = scale * (ea - (ev[static_cast<std::size_t>(k)] ? 1.0 : 0.0));
    }
    accum(0, grad);
  };
  Tensor loss = custom_op("cox_partial_loss", std::move(value), {risks}, backward);
  if (l2_lambda != 0.0)
    for (const Tensor& p : params) loss = add(loss, scale(sum(mul(p, p)), l2_lambda));
  return loss;
}

void NetworkConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("NetworkConfig: latent_dim must be >= 1");
  if (hidden_dims.size() != 2)
    throw ConfigError("NetworkConfig: exactly two convolution layers expected");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("NetworkConfig: hidden dims must be >= 1");
  if (hidden_dims[0] != hidden_dims[1])
    throw ConfigError("NetworkConfig: residual connection needs equal hidden dims");
  if (k_neighbors < 1) throw ConfigError("NetworkConfig: k_neighbors must be >= 1");
  if (temperature <= 0.0) throw ConfigError("NetworkConfig: temperature must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("NetworkConfig: dropout_rate must be in [0,1)");
}

namespace {

Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  return Tensor::parameter(std::move(w));
}

Tensor zeros_param(int rows, int cols) { return Tensor::parameter(Mat::Zero(rows, cols)); }

}  // namespace

PHGNModel::PHGNModel(int in_features, const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (in_features < 1) throw ConfigError("PHGNModel: need at least one input feature");
  auto rng = make_rng(seed);
  const int d = cfg_.latent_dim;
  const int h = cfg_.hidden_dims[0];
  w_proj_ = glorot(in_features, d, rng);
  b_proj_ = zeros_param(1, d);
  theta1_ = glorot(d, h, rng);
  theta2_ = glorot(h, h, rng);
  w_head1_ = glorot(h, h, rng);
  b_head1_ = zeros_param(1, h);
  w_head2_ = glorot(h, 1, rng);
  b_head2_ = zeros_param(1, 1);
}

Tensor PHGNModel::forward(const Mat& x, bool training, std::mt19937_64* rng) {
  if (x.cols() != w_proj_.rows()) throw std::invalid_argument("PHGNModel: feature dimension mismatch");
  Tensor input = Tensor::constant(x);
  Tensor latent = relu(add_rowvec(matmul(input, w_proj_), b_proj_));
  // Structure comes from the current latent values; gradients flow through
  // the node features only.
  Hypergraph hg = build_knn_hypergraph(latent.value(), cfg_.k_neighbors);
  Tensor h1 = row_l2_normalize(elu(hypergraph_convolution(hg, latent, theta1_)));
  Tensor h2 = row_l2_normalize(elu(hypergraph_convolution(hg, h1, theta2_)));
  Tensor mixed = add(h1, h2);  // residual across the second convolution
  Tensor head = relu(add_rowvec(matmul(mixed, w_head1_), b_head1_));
  if (training && cfg_.dropout_rate > 0.0) {
    if (!rng) throw ConfigError("PHGNModel: dropout needs an rng in training mode");
    head = dropout(head, cfg_.dropout_rate, *rng);
  }
  return add_rowvec(matmul(head, w_head2_), b_head2_);
}

std::vector<Tensor> PHGNModel::parameters() {
  return {w_proj_, b_proj_, theta1_, theta2_, w_head1_, b_head1_, w_head2_, b_head2_};
}

NamedParams PHGNModel::named_parameters() {
  return {{"w_proj", w_proj_},   {"b_proj", b_proj_},   {"theta1", theta1_},
          {"theta2", theta2_},   {"w_head1", w_head1_}, {"b_head1", b_head1_},
          {"w_head2", w_head2_}, {"b_head2", b_head2_}};
}

LPNLModel::LPNLModel(int in_features, const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (in_features < 1) throw ConfigError("LPNLModel: need at least one input feature");
  auto rng = make_rng(seed);
  const int d = cfg_.latent_dim;
  const int h = cfg_.hidden_dims[0];
  w_mlp1_ = glorot(in_features, d, rng);
  b_mlp1_ = zeros_param(1, d);
  w_mlp2_ = glorot(d, d, rng);
  b_mlp2_ = zeros_param(1, d);
  threshold_ = Tensor::parameter(Mat::Constant(1, 1, cfg_.soft_threshold_init));
  theta1_ = glorot(d, h, rng);
  theta2_ = glorot(h, h, rng);
  w_head1_ = glorot(h, h, rng);
  b_head1_ = zeros_param(1, h);
  w_head2_ = glorot(h, 1, rng);
  b_head2_ = zeros_param(1, 1);
}

Tensor LPNLModel::forward(const Mat& x, bool training, std::mt19937_64* rng) {
  if (x.cols() != w_mlp1_.rows()) throw std::invalid_argument("LPNLModel: feature dimension mismatch");
  Tensor input = Tensor::constant(x);
  Tensor hidden = relu(add_rowvec(matmul(input, w_mlp1_), b_mlp1_));
  Tensor latent = add_rowvec(matmul(hidden, w_mlp2_), b_mlp2_);
  Tensor adj = build_soft_adjacency(latent, threshold_, cfg_.temperature);
  Tensor h1 = relu(graph_convolution(adj, latent, theta1_));
  Tensor h2 = relu(graph_convolution(adj, h1, theta2_));
  Tensor head = relu(add_rowvec(matmul(h2, w_head1_), b_head1_));
  if (training && cfg_.dropout_rate > 0.0) {
    if (!rng) throw ConfigError("LPNLModel: dropout needs an rng in training mode");
    head = dropout(head, cfg_.dropout_rate, *rng);
  }
  return add_rowvec(matmul(head, w_head2_), b_head2_);
}

std::vector<Tensor> LPNLModel::parameters() {
  return {w_mlp1_, b_mlp1_, w_mlp2_, b_mlp2_, threshold_, theta1_,
          theta2_, w_head1_, b_head1_, w_head2_, b_head2_};
}

NamedParams LPNLModel::named_parameters() {
  return {{"w_mlp1", w_mlp1_},   {"b_mlp1", b_mlp1_},   {"w_mlp2", w_mlp2_},
          {"b_mlp2", b_mlp2_},   {"t", threshold_},     {"theta1", theta1_},
          {"theta2", theta2_},   {"w_head1", w_head1_}, {"b_head1", b_head1_},
          {"w_head2", w_head2_}, {"b_head2", b_head2_}};
}

}  // namespace popgraph
