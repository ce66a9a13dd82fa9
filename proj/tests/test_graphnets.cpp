#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "popgraph/graphnets.hpp"
#include "popgraph/linmod.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace popgraph;
using testutil::fd_max_rel_err;
using testutil::random_mat;

namespace {

constexpr double kFdTol = 1e-4;

// Dense realization of D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}, straight from
// the definition; the production code never materializes H.
Mat dense_hypergraph_operator(const Hypergraph& hg) {
  const Eigen::Index n = static_cast<Eigen::Index>(hg.n_nodes);
  const Eigen::Index m = static_cast<Eigen::Index>(hg.hyperedges.size());
  Mat h = Mat::Zero(n, m);
  for (Eigen::Index e = 0; e < m; ++e)
    for (std::size_t v : hg.hyperedges[static_cast<std::size_t>(e)])
      h(static_cast<Eigen::Index>(v), e) = 1.0;
  Mat w = Mat::Zero(m, m);
  Mat de_inv = Mat::Zero(m, m);
  for (Eigen::Index e = 0; e < m; ++e) {
    w(e, e) = hg.edge_weights[static_cast<std::size_t>(e)];
    de_inv(e, e) = 1.0 / h.col(e).sum();
  }
  Mat dv_inv_sqrt = Mat::Zero(n, n);
  for (Eigen::Index v = 0; v < n; ++v) dv_inv_sqrt(v, v) = 1.0 / std::sqrt((h * w.diagonal())(v));
  return dv_inv_sqrt * h * w * de_inv * h.transpose() * dv_inv_sqrt;
}

Mat dense_graph_operator(const Mat& a) {
  Vec d = a.rowwise().sum();
  Mat d_inv_sqrt = Mat::Zero(a.rows(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) d_inv_sqrt(i, i) = 1.0 / std::sqrt(d(i));
  return d_inv_sqrt * a * d_inv_sqrt;
}

Hypergraph random_hypergraph(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  Hypergraph hg;
  hg.n_nodes = n;
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_int_distribution<std::size_t> extra(1, 3);
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  // One edge anchored on each node in turn guarantees full coverage.
  for (std::size_t e = 0; e < m; ++e) {
    std::vector<std::size_t> members{e % n};
    const std::size_t n_extra = extra(rng);
    for (std::size_t t = 0; t < n_extra; ++t) {
      const std::size_t v = node(rng);
      if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
    }
    hg.hyperedges.push_back(members);
    hg.edge_weights.push_back(weight(rng));
  }
  return hg;
}

}  // namespace

TEST_CASE("knn hypergraph: hand-checked neighborhoods on a line") {
  Mat z(4, 1);
  z << 0.0, 1.0, 2.1, 10.0;
  const Hypergraph hg = build_knn_hypergraph(z, 1);
  REQUIRE(hg.n_nodes == 4);
  REQUIRE(hg.hyperedges.size() == 4);
  CHECK(hg.hyperedges[0] == std::vector<std::size_t>{0, 1});
  CHECK(hg.hyperedges[1] == std::vector<std::size_t>{1, 0});  // 0 is closer than 2.1
  CHECK(hg.hyperedges[2] == std::vector<std::size_t>{2, 1});
  CHECK(hg.hyperedges[3] == std::vector<std::size_t>{3, 2});
  for (double w : hg.edge_weights) CHECK(w == 1.0);
}

TEST_CASE("knn hypergraph: distance ties resolve to the lower index") {
  Mat z(3, 1);
  z << 0.0, 1.0, 2.0;
  const Hypergraph hg = build_knn_hypergraph(z, 1);
  CHECK(hg.hyperedges[1] == std::vector<std::size_t>{1, 0});  // 0 and 2 equidistant
}

TEST_CASE("knn hypergraph: k bounds") {
  Mat z = Mat::Zero(3, 2);
  z << 0, 0, 1, 0, 2, 0;
  CHECK_THROWS_AS(build_knn_hypergraph(z, 0), ConfigError);
  CHECK_THROWS_AS(build_knn_hypergraph(z, 3), DataError);
  CHECK_NOTHROW(build_knn_hypergraph(z, 2));
}

TEST_CASE("hypergraph convolution: matches the dense operator within 1e-10") {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<std::size_t> n_dist(3, 20), m_dist(2, 20);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = n_dist(rng);
    const std::size_t m = std::max(n, m_dist(rng));  // anchoring needs m >= n
    const Hypergraph hg = random_hypergraph(rng, n, m);
    const Mat x = random_mat(static_cast<Eigen::Index>(n), 3, rng);
    const Mat theta = random_mat(3, 2, rng);

    const Tensor out =
        hypergraph_convolution(hg, Tensor::constant(x), Tensor::constant(theta));
    const Mat expected = dense_hypergraph_operator(hg) * x * theta;
    CHECK((out.value() - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("hypergraph convolution: kNN graphs take the same path") {
  std::mt19937_64 rng(52);
  const Mat z = random_mat(12, 2, rng);
  const Hypergraph hg = build_knn_hypergraph(z, 3);
  const Mat x = random_mat(12, 4, rng);
  const Mat theta = random_mat(4, 3, rng);
  const Tensor out = hypergraph_convolution(hg, Tensor::constant(x), Tensor::constant(theta));
  CHECK((out.value() - dense_hypergraph_operator(hg) * x * theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hypergraph convolution: every node needs an edge") {
  Hypergraph hg;
  hg.n_nodes = 3;
  hg.hyperedges = {{0, 1}};  // node 2 uncovered
  hg.edge_weights = {1.0};
  const Tensor x = Tensor::constant(Mat::Zero(3, 2));
  const Tensor theta = Tensor::constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS(hypergraph_convolution(hg, x, theta), DataError);
}

TEST_CASE("hypergraph convolution: gradients flow through x and theta") {
  std::mt19937_64 rng(53);
  const Mat z = random_mat(8, 2, rng);
  const Hypergraph hg = build_knn_hypergraph(z, 2);
  Tensor x = Tensor::parameter(random_mat(8, 3, rng));
  Tensor theta = Tensor::parameter(random_mat(3, 2, rng));
  const Mat c = random_mat(8, 2, rng);
  CHECK(fd_max_rel_err({x, theta}, [&] {
          return sum(mul(hypergraph_convolution(hg, x, theta), Tensor::constant(c)));
        }) < kFdTol);
}

TEST_CASE("graph convolution: matches the dense operator within 1e-10") {
  std::mt19937_64 rng(54);
  std::uniform_int_distribution<Eigen::Index> n_dist(2, 20);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n = n_dist(rng);
    Mat a = random_mat(n, n, rng);
    a = (a.array().abs() + 0.05).matrix();  // positive entries: valid soft adjacency
    const Mat x = random_mat(n, 3, rng);
    const Mat theta = random_mat(3, 2, rng);
    const Tensor out = graph_convolution(Tensor::constant(a), Tensor::constant(x),
                                         Tensor::constant(theta));
    CHECK((out.value() - dense_graph_operator(a) * x * theta).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("graph convolution: input validation") {
  const Tensor x = Tensor::constant(Mat::Zero(2, 2));
  const Tensor theta = Tensor::constant(Mat::Zero(2, 2));
  CHECK_THROWS_AS(graph_convolution(Tensor::constant(Mat::Zero(2, 3)), x, theta),
                  std::invalid_argument);
  CHECK_THROWS_AS(graph_convolution(Tensor::constant(Mat::Zero(2, 2)), x, theta), DataError);
}

TEST_CASE("graph convolution: differentiable through the adjacency itself") {
  std::mt19937_64 rng(55);
  Mat a0 = random_mat(5, 5, rng);
  a0 = (a0.array().abs() + 0.2).matrix();
  Tensor a = Tensor::parameter(a0);
  Tensor x = Tensor::parameter(random_mat(5, 3, rng));
  Tensor theta = Tensor::parameter(random_mat(3, 2, rng));
  const Mat c = random_mat(5, 2, rng);
  CHECK(fd_max_rel_err({a, x, theta}, [&] {
          return sum(mul(graph_convolution(a, x, theta), Tensor::constant(c)));
        }) < kFdTol);
}

TEST_CASE("soft adjacency: hand-checked entries") {
  Mat z0(2, 1);
  z0 << 0.0, 3.0;
  const Tensor z = Tensor::constant(z0);

  // sigma((t - d)/tau) off the diagonal, ones on it.
  const Tensor a = build_soft_adjacency(z, Tensor::parameter(Mat::Constant(1, 1, 2.0)), 2.0);
  CHECK(a.value()(0, 0) == 1.0);
  CHECK(a.value()(1, 1) == 1.0);
  CHECK(a.value()(0, 1) == doctest::Approx(sigmoid(-0.5)).epsilon(1e-15));
  CHECK(a.value()(0, 1) == a.value()(1, 0));

  // Threshold equal to the distance lands exactly on 1/2.
  const Tensor half = build_soft_adjacency(z, Tensor::parameter(Mat::Constant(1, 1, 3.0)), 1.0);
  CHECK(half.value()(0, 1) == 0.5);

  CHECK_THROWS_AS(build_soft_adjacency(z, Tensor::parameter(Mat::Constant(1, 1, 3.0)), 0.0),
                  ConfigError);
  CHECK_THROWS_AS(build_soft_adjacency(z, Tensor::parameter(Mat::Zero(2, 1)), 1.0),
                  std::invalid_argument);
}

TEST_CASE("soft adjacency: gradients in latent positions and threshold") {
  std::mt19937_64 rng(56);
  Tensor z = Tensor::parameter(random_mat(6, 2, rng));
  Tensor t = Tensor::parameter(Mat::Constant(1, 1, 1.2));
  const Mat c = random_mat(6, 6, rng);
  CHECK(fd_max_rel_err({z, t}, [&] {
          return sum(mul(build_soft_adjacency(z, t, 0.7), Tensor::constant(c)));
        }) < kFdTol);
}

TEST_CASE("bce loss: hand-checked values and gradient") {
  Mat s(2, 1);
  s << 1.0, -1.0;
  CHECK(bce_loss(Tensor::constant(s), {1, 0}).item() ==
        doctest::Approx(log1pexp(-1.0)).epsilon(1e-15));
  CHECK(bce_loss(Tensor::constant(Mat::Zero(3, 1)), {1, 0, 1}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 rng(57);
  Tensor scores = Tensor::parameter(random_mat(7, 1, rng));
  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1};
  CHECK(fd_max_rel_err({scores}, [&] { return bce_loss(scores, labels); }) < kFdTol);

  CHECK_THROWS_AS(bce_loss(Tensor::constant(Mat::Zero(2, 2)), {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(bce_loss(Tensor::constant(Mat::Zero(2, 1)), {1, 2}), DataError);
}

TEST_CASE("cox partial loss: hand-checked values") {
  SUBCASE("single event over two at risk, zero risks") {
    CHECK(cox_partial_loss(Tensor::constant(Mat::Zero(2, 1)), {1.0, 2.0}, {true, false}, 0.0, {})
              .item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("two events, nested risk sets") {
    CHECK(cox_partial_loss(Tensor::constant(Mat::Zero(2, 1)), {1.0, 2.0}, {true, true}, 0.0, {})
              .item() == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("breslow ties share the full risk set") {
    // Both events at t=1 see all three patients: -(1/2)(-2 log 3) = log 3.
    CHECK(cox_partial_loss(Tensor::constant(Mat::Zero(3, 1)), {1.0, 1.0, 2.0},
                           {true, true, false}, 0.0, {})
              .item() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("invariant to a constant risk shift") {
    std::mt19937_64 rng(58);
    const Mat h = random_mat(6, 1, rng);
    const std::vector<double> t{3.0, 1.0, 4.0, 1.0, 5.0, 9.0};
    const std::vector<bool> e{true, false, true, true, false, true};
    const double a = cox_partial_loss(Tensor::constant(h), t, e, 0.0, {}).item();
    const double b =
        cox_partial_loss(Tensor::constant((h.array() + 7.5).matrix()), t, e, 0.0, {}).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
  SUBCASE("no events is an error") {
    CHECK_THROWS_AS(cox_partial_loss(Tensor::constant(Mat::Zero(2, 1)), {1.0, 2.0},
                                     {false, false}, 0.0, {}),
                    DataError);
  }
}

TEST_CASE("cox partial loss: agrees with the coordinate-descent objective") {
  // Same Breslow partial likelihood, different normalizations: the solver
  // divides by n, the network loss by the event count.
  std::mt19937_64 rng(59);
  const Eigen::Index n = 15;
  const Mat x = random_mat(n, 3, rng);
  Vec beta(3);
  beta << 0.4, -0.2, 0.7;
  std::vector<double> times(static_cast<std::size_t>(n));
  std::vector<bool> events(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t n_events = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    times[i] = std::ceil(unif(rng) * 8.0);  // ties on purpose
    events[i] = unif(rng) < 0.7;
    n_events += static_cast<std::size_t>(events[i]);
  }
  REQUIRE(n_events > 0);

  ElasticNetConfig cfg;
  cfg.alpha = 0.0;
  const double from_solver = cox_objective(x, times, events, beta, cfg);
  const Mat risks = x * beta;
  const double from_net = cox_partial_loss(Tensor::constant(risks), times, events, 0.0, {}).item();
  CHECK(from_solver == doctest::Approx(from_net * static_cast<double>(n_events) /
                                       static_cast<double>(n))
                           .epsilon(1e-12));
}

TEST_CASE("cox partial loss: gradient and ridge term") {
  std::mt19937_64 rng(60);
  Tensor risks = Tensor::parameter(random_mat(8, 1, rng));
  Tensor aux = Tensor::parameter(random_mat(2, 2, rng));
  const std::vector<double> t{1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 5.0, 6.0};
  const std::vector<bool> e{true, true, false, true, false, true, true, false};

  CHECK(fd_max_rel_err({risks}, [&] { return cox_partial_loss(risks, t, e, 0.0, {}); }) < kFdTol);
  // With a penalized parameter in play, gradients reach it through the loss.
  CHECK(fd_max_rel_err({risks, aux}, [&] {
          return cox_partial_loss(risks, t, e, 0.01, {aux});
        }) < kFdTol);

  const double base = cox_partial_loss(Tensor::constant(risks.value()), t, e, 0.0, {}).item();
  const double ridged =
      cox_partial_loss(Tensor::constant(risks.value()), t, e, 0.01, {aux}).item();
  CHECK(ridged == doctest::Approx(base + 0.01 * aux.value().squaredNorm()).epsilon(1e-12));
}

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.latent_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.hidden_dims = {8, 16};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.hidden_dims = {8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.k_neighbors = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NetworkConfig{};
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

NetworkConfig tiny_config(HeadKind head, double dropout = 0.0) {
  NetworkConfig cfg;
  cfg.latent_dim = 4;
  cfg.hidden_dims = {6, 6};
  cfg.k_neighbors = 2;
  cfg.head = head;
  cfg.dropout_rate = dropout;
  return cfg;
}

}  // namespace

TEST_CASE("models: output shape, parameter names, seeded determinism") {
  std::mt19937_64 rng(61);
  const Mat x = random_mat(10, 4, rng);

  PHGNModel phgn(4, tiny_config(HeadKind::classification), 77);
  const Tensor out = phgn.forward(x);
  CHECK(out.rows() == 10);
  CHECK(out.cols() == 1);
  std::vector<std::string> phgn_names;
  for (const auto& [name, t] : phgn.named_parameters()) phgn_names.push_back(name);
  CHECK(phgn_names == std::vector<std::string>{"w_proj", "b_proj", "theta1", "theta2", "w_head1",
                                               "b_head1", "w_head2", "b_head2"});

  PHGNModel same(4, tiny_config(HeadKind::classification), 77);
  CHECK(same.forward(x).value() == out.value());
  PHGNModel other(4, tiny_config(HeadKind::classification), 78);
  CHECK(other.forward(x).value() != out.value());

  LPNLModel lpnl(4, tiny_config(HeadKind::survival), 79);
  const Tensor lout = lpnl.forward(x);
  CHECK(lout.rows() == 10);
  CHECK(lout.cols() == 1);
  std::vector<std::string> lpnl_names;
  for (const auto& [name, t] : lpnl.named_parameters()) lpnl_names.push_back(name);
  CHECK(lpnl_names == std::vector<std::string>{"w_mlp1", "b_mlp1", "w_mlp2", "b_mlp2", "t",
                                               "theta1", "theta2", "w_head1", "b_head1", "w_head2",
                                               "b_head2"});
  CHECK(lpnl.threshold_value() == 1.0);  // soft_threshold_init default

  CHECK_THROWS_AS(PHGNModel(0, tiny_config(HeadKind::classification), 1), ConfigError);
  CHECK_THROWS_AS(phgn.forward(random_mat(5, 7, rng)), std::invalid_argument);
}

TEST_CASE("models: end-to-end gradients check against finite differences") {
  std::mt19937_64 rng(62);
  const Mat x = random_mat(9, 4, rng);
  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 1, 0, 1};
  const std::vector<double> times{1, 5, 2, 8, 3, 9, 4, 7, 6};
  const std::vector<bool> events{true, true, false, true, true, false, true, true, true};

  SUBCASE("phgn with bce") {
    PHGNModel model(4, tiny_config(HeadKind::classification), 63);
    CHECK(fd_max_rel_err(model.parameters(), [&] {
            return bce_loss(model.forward(x), labels);
          }) < kFdTol);
  }
  SUBCASE("phgn with cox and ridge") {
    PHGNModel model(4, tiny_config(HeadKind::survival), 64);
    CHECK(fd_max_rel_err(model.parameters(), [&] {
            return cox_partial_loss(model.forward(x), times, events, 1e-3, model.parameters());
          }) < kFdTol);
  }
  SUBCASE("lpnl with bce") {
    LPNLModel model(4, tiny_config(HeadKind::classification), 65);
    CHECK(fd_max_rel_err(model.parameters(), [&] {
            return bce_loss(model.forward(x), labels);
          }) < kFdTol);
  }
  SUBCASE("lpnl with cox") {
    LPNLModel model(4, tiny_config(HeadKind::survival), 66);
    CHECK(fd_max_rel_err(model.parameters(), [&] {
            return cox_partial_loss(model.forward(x), times, events, 0.0, {});
          }) < kFdTol);
  }
  SUBCASE("phgn with dropout active, mask replayed per probe") {
    PHGNModel model(4, tiny_config(HeadKind::classification, 0.3), 67);
    CHECK(fd_max_rel_err(model.parameters(), [&] {
            std::mt19937_64 mask_rng(5);
            return bce_loss(model.forward(x, true, &mask_rng), labels);
          }) < kFdTol);
  }
}

TEST_CASE("models: dropout in training mode requires an rng") {
  std::mt19937_64 rng(68);
  const Mat x = random_mat(6, 3, rng);
  PHGNModel phgn(3, tiny_config(HeadKind::classification, 0.5), 1);
  CHECK_THROWS_AS(phgn.forward(x, true, nullptr), ConfigError);
  CHECK_NOTHROW(phgn.forward(x, false, nullptr));  // inference never drops
  LPNLModel lpnl(3, tiny_config(HeadKind::classification, 0.5), 2);
  CHECK_THROWS_AS(lpnl.forward(x, true, nullptr), ConfigError);
}

TEST_CASE("models: a few adam steps reduce the training loss") {
  std::mt19937_64 rng(69);
  const Eigen::Index n = 24;
  const Mat x = random_mat(n, 4, rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = (x(i, 0) > 0) ? 1 : 0;
  std::vector<double> times(static_cast<std::size_t>(n));
  std::vector<bool> events(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < n; ++i)
    times[static_cast<std::size_t>(i)] = std::exp(-x(i, 1)) * (1.0 + 0.1 * i);

  SUBCASE("lpnl classification, threshold moves") {
    LPNLModel model(4, tiny_config(HeadKind::classification), 70);
    const double t0 = model.threshold_value();
    auto params = model.parameters();
    AdamState st;
    st.learning_rate = 0.01;
    const double before = bce_loss(model.forward(x), labels).item();
    for (int step = 0; step < 40; ++step) {
      backward(bce_loss(model.forward(x), labels));
      adam_step(params, st);
    }
    CHECK(bce_loss(model.forward(x), labels).item() < before);
    CHECK(model.threshold_value() != t0);  // the adjacency threshold trains too
  }
  SUBCASE("phgn survival") {
    PHGNModel model(4, tiny_config(HeadKind::survival), 71);
    auto params = model.parameters();
    AdamState st;
    st.learning_rate = 0.01;
    const double before = cox_partial_loss(model.forward(x), times, events, 0.0, {}).item();
    for (int step = 0; step < 40; ++step) {
      backward(cox_partial_loss(model.forward(x), times, events, 0.0, {}));
      adam_step(params, st);
    }
    CHECK(cox_partial_loss(model.forward(x), times, events, 0.0, {}).item() < before);
  }
}

TEST_CASE("models: permuting patients permutes predictions") {
  std::mt19937_64 rng(72);
  const Eigen::Index n = 11;
  const Mat x = random_mat(n, 4, rng);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat xp(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);

  PHGNModel phgn(4, tiny_config(HeadKind::classification), 73);
  const Mat out = phgn.forward(x).value();
  const Mat outp = phgn.forward(xp).value();
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(outp(i, 0) == doctest::Approx(out(perm[static_cast<std::size_t>(i)], 0)).epsilon(1e-9));

  LPNLModel lpnl(4, tiny_config(HeadKind::classification), 74);
  const Mat lout = lpnl.forward(x).value();
  const Mat loutp = lpnl.forward(xp).value();
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK(loutp(i, 0) == doctest::Approx(lout(perm[static_cast<std::size_t>(i)], 0)).epsilon(1e-9));
}
