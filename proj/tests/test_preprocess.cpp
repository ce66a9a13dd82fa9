#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "popgraph/preprocess.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace popgraph;
using testutil::classification_cohort;
using testutil::random_mat;
using testutil::survival_cohort;

TEST_CASE("standardizer: population moments, constant columns flagged") {
  Mat x(2, 2);
  x << 1.0, 2.0, 3.0, 2.0;
  const Cohort c = classification_cohort(x, {0, 1});
  const StandardizationParams params = fit_standardizer(c);
  CHECK(params.mean(0) == 2.0);
  CHECK(params.scale(0) == 1.0);  // population sigma of {1,3}
  CHECK(params.mean(1) == 2.0);
  CHECK(params.scale(1) == 1.0);  // constant column: scale forced to 1
  CHECK(params.constant_features == std::vector<std::string>{"f1"});

  const Cohort z = apply_standardizer(params, c);
  CHECK(z.patients[0].features(0) == -1.0);
  CHECK(z.patients[1].features(0) == 1.0);
  CHECK(z.patients[0].features(1) == 0.0);
  CHECK(z.patients[1].features(1) == 0.0);

  const StandardizationParams back = StandardizationParams::from_json(params.to_json());
  CHECK(back.feature_names == params.feature_names);
  CHECK(back.mean == params.mean);
  CHECK(back.scale == params.scale);
  CHECK(back.constant_features == params.constant_features);

  Cohort renamed = c;
  renamed.feature_names[0] = "other";
  for (auto& p : renamed.patients) (void)p;
  CHECK_THROWS_AS(apply_standardizer(params, renamed), DataError);

  Cohort single;
  single.feature_names = {"f0"};
  single.patients.push_back(c.patients[0]);
  CHECK_THROWS_AS(fit_standardizer(single), DataError);
}

TEST_CASE("spearman: exact rational values on rank patterns") {
  Mat x(3, 2);
  x << 1.0, 3.0, 2.0, 1.0, 3.0, 2.0;
  const Mat rho = spearman_matrix(x);
  CHECK(rho(0, 1) == -0.5);  // exact: d^2 = 6 on n = 3
  CHECK(rho(1, 0) == -0.5);
  CHECK(rho(0, 0) == 1.0);
}

TEST_CASE("spearman: invariant under monotone maps, zero for constants") {
  std::mt19937_64 rng(31);
  Mat base = random_mat(25, 1, rng);
  Mat x(25, 4);
  x.col(0) = base;
  for (Eigen::Index i = 0; i < 25; ++i) {
    x(i, 1) = std::exp(base(i, 0));            // increasing map
    x(i, 2) = -base(i, 0) * base(i, 0) * base(i, 0);  // decreasing map
    x(i, 3) = 42.0;                            // constant
  }
  const Mat rho = spearman_matrix(x);
  CHECK(rho(0, 1) == 1.0);
  CHECK(rho(0, 2) == -1.0);
  CHECK(rho(0, 3) == 0.0);
  CHECK(rho(3, 3) == 1.0);  // unit diagonal even for constants
}

TEST_CASE("spearman: average ranks on ties") {
  Mat x(3, 2);
  x << 1.0, 1.0, 1.0, 2.0, 2.0, 3.0;
  const Mat rho = spearman_matrix(x);
  // ranks (1.5, 1.5, 3) vs (1, 2, 3): rho = 1.5/sqrt(3)
  CHECK(rho(0, 1) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));

  Mat tiny(2, 2);
  tiny.setZero();
  CHECK_THROWS_AS(spearman_matrix(tiny), DataError);
}

namespace {
Mat corr3(double r01, double r02, double r12) {
  Mat c(3, 3);
  c << 1.0, r01, r02, r01, 1.0, r12, r02, r12, 1.0;
  return c;
}
const std::vector<std::string> kNames3{"f0", "f1", "f2"};
}  // namespace

TEST_CASE("clustering: pairs above the threshold merge, others stay apart") {
  const ClusterAssignment a = cluster_features(corr3(0.95, 0.2, 0.3), kNames3, 0.9);
  REQUIRE(a.clusters.size() == 2);
  CHECK(a.clusters[0] == std::vector<std::string>{"f0", "f1"});
  CHECK(a.clusters[1] == std::vector<std::string>{"f2"});
  CHECK(a.representatives == std::vector<std::string>{"f0", "f2"});  // tie -> smaller name
}

TEST_CASE("clustering: complete linkage does not chain through a middle feature") {
  // f1 correlates with both ends but the ends barely correlate with each
  // other; the merged pair must not absorb the far feature.
  const ClusterAssignment a = cluster_features(corr3(0.95, 0.5, 0.95), kNames3, 0.9);
  REQUIRE(a.clusters.size() == 2);
  CHECK(a.clusters[0] == std::vector<std::string>{"f0", "f1"});
  CHECK(a.clusters[1] == std::vector<std::string>{"f2"});
}

TEST_CASE("clustering: representative maximizes within-cluster correlation mass") {
  const ClusterAssignment a = cluster_features(corr3(0.92, 0.91, 0.95), kNames3, 0.9);
  REQUIRE(a.clusters.size() == 1);
  CHECK(a.clusters[0] == std::vector<std::string>{"f0", "f1", "f2"});
  CHECK(a.representatives == std::vector<std::string>{"f1"});  // 0.92+0.95 beats the others
}

TEST_CASE("clustering: anticorrelation counts through |rho|") {
  const ClusterAssignment a = cluster_features(corr3(-0.95, 0.1, -0.1), kNames3, 0.9);
  REQUIRE(a.clusters.size() == 2);
  CHECK(a.clusters[0] == std::vector<std::string>{"f0", "f1"});
}

TEST_CASE("clustering: threshold must sit strictly inside (0,1)") {
  CHECK_THROWS_AS(cluster_features(corr3(0, 0, 0), kNames3, 0.0), ConfigError);
  CHECK_THROWS_AS(cluster_features(corr3(0, 0, 0), kNames3, 1.0), ConfigError);
}

TEST_CASE("clustering: every emitted cluster keeps all pairwise |rho| above threshold") {
  std::mt19937_64 rng(37);
  for (int rep = 0; rep < 10; ++rep) {
    // Duplicated-with-noise columns create realistic correlated blocks.
    const Eigen::Index n = 60;
    Mat base = random_mat(n, 3, rng);
    Mat x(n, 7);
    x.col(0) = base.col(0);
    x.col(1) = base.col(0) + 0.01 * random_mat(n, 1, rng);
    x.col(2) = -base.col(0) + 0.01 * random_mat(n, 1, rng);
    x.col(3) = base.col(1);
    x.col(4) = base.col(1) + 0.02 * random_mat(n, 1, rng);
    x.col(5) = base.col(2);
    x.col(6) = random_mat(n, 1, rng);
    std::vector<std::string> names;
    for (int j = 0; j < 7; ++j) names.push_back("f" + std::to_string(j));

    const Mat rho = spearman_matrix(x);
    const ClusterAssignment a = cluster_features(rho, names, 0.9);

    std::size_t covered = 0;
    for (const auto& cluster : a.clusters) {
      covered += cluster.size();
      for (std::size_t p = 0; p < cluster.size(); ++p) {
        for (std::size_t q = p + 1; q < cluster.size(); ++q) {
          const auto ip = std::find(names.begin(), names.end(), cluster[p]) - names.begin();
          const auto iq = std::find(names.begin(), names.end(), cluster[q]) - names.begin();
          CHECK(std::abs(rho(ip, iq)) > 0.9);
        }
      }
    }
    CHECK(covered == names.size());
  }
}

TEST_CASE("mutual information: hand-checked four-point configuration") {
  // Two tight class-pure pairs far apart, k=1: every neighborhood stays
  // within its class, so MI = psi(4) - psi(2) = 1/2 + 1/3.
  const double mi = mutual_information_score({1.0, 2.0, 10.0, 11.0}, {0, 0, 1, 1}, 1);
  CHECK(mi == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("mutual information: degenerate inputs score zero") {
  CHECK(mutual_information_score({2.0, 2.0, 2.0, 2.0}, {0, 0, 1, 1}, 1) == 0.0);
  CHECK(mutual_information_score({1.0, 2.0, 3.0, 4.0}, {1, 1, 1, 1}, 1) == 0.0);
}

TEST_CASE("mutual information: separates signal from permuted labels") {
  std::mt19937_64 rng(41);
  const std::size_t n = 200;
  std::vector<int> labels(n);
  std::vector<double> informative(n), noise(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = coin(rng) ? 1 : 0;
    informative[i] = 2.0 * labels[i] + 0.4 * gauss(rng);
    noise[i] = gauss(rng);
  }
  std::vector<int> shuffled = labels;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  const double mi_signal = mutual_information_score(informative, labels);
  const double mi_noise = mutual_information_score(noise, labels);
  const double mi_null = mutual_information_score(informative, shuffled);
  CHECK(mi_signal > 0.3);
  CHECK(mi_noise < 0.1);
  CHECK(mi_null < 0.1);
  CHECK(mi_signal > 3.0 * std::max(mi_noise, mi_null));
}

TEST_CASE("mutual information: k larger than a class shrinks to fit") {
  const double mi = mutual_information_score({1.0, 2.0, 10.0, 11.0, 12.0}, {0, 0, 1, 1, 1}, 3);
  CHECK(std::isfinite(mi));
  CHECK(mi >= 0.0);
}

TEST_CASE("ranking: informative features come first for both tasks") {
  std::mt19937_64 rng(43);
  const Eigen::Index n = 150;
  Mat x = random_mat(n, 4, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = unif(rng) < sigmoid(3.0 * x(i, 1)) ? 1 : 0;
  }
  const Cohort cls = classification_cohort(x, labels);
  RankingConfig cfg;
  cfg.n_bootstrap = 20;
  const FeatureRanking cls_rank = bootstrap_rank_features(cls, "outcome", TaskKind::classification, cfg, 5);
  CHECK(cls_rank.names.front() == "f1");
  for (std::size_t i = 1; i < cls_rank.cumulative_scores.size(); ++i)
    CHECK(cls_rank.cumulative_scores[i] <= cls_rank.cumulative_scores[i - 1]);
  double total = 0.0;
  for (double s : cls_rank.cumulative_scores) {
    CHECK(s > 0.0);
    total += s;
  }
  CHECK(total == doctest::Approx(20.0).epsilon(1e-9));  // one unit of mass per bootstrap
  CHECK(cls_rank.top(2).size() == 2);
  CHECK(cls_rank.top(99).size() == cls_rank.names.size());

  std::vector<double> times(static_cast<std::size_t>(n));
  std::vector<bool> events(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    times[static_cast<std::size_t>(i)] = -std::log(unif(rng)) / std::exp(1.5 * x(i, 2));
    events[static_cast<std::size_t>(i)] = unif(rng) < 0.8;
  }
  const Cohort surv = survival_cohort(x, times, events);
  const FeatureRanking surv_rank = bootstrap_rank_features(surv, "surv", TaskKind::survival, cfg, 6);
  CHECK(surv_rank.names.front() == "f2");
}

TEST_CASE("ranking: deterministic in the seed, type-checked endpoints") {
  std::mt19937_64 rng(47);
  Mat x = random_mat(60, 3, rng);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = (x(static_cast<Eigen::Index>(i), 0) > 0) ? 1 : 0;
  const Cohort c = classification_cohort(x, labels);

  RankingConfig cfg;
  cfg.n_bootstrap = 10;
  const FeatureRanking a = bootstrap_rank_features(c, "outcome", TaskKind::classification, cfg, 9);
  const FeatureRanking b = bootstrap_rank_features(c, "outcome", TaskKind::classification, cfg, 9);
  CHECK(a.names == b.names);
  CHECK(a.cumulative_scores == b.cumulative_scores);

  CHECK_THROWS_AS(bootstrap_rank_features(c, "outcome", TaskKind::survival, cfg, 9), DataError);
  CHECK_THROWS_AS(bootstrap_rank_features(c, "missing", TaskKind::classification, cfg, 9), DataError);

  const FeatureRanking back = FeatureRanking::from_json(a.to_json());
  CHECK(back.names == a.names);
  CHECK(back.cumulative_scores == a.cumulative_scores);
}

TEST_CASE("ranking: all-zero scores fall back to a uniform split") {
  Mat x(40, 3);
  x.setConstant(1.0);  // constant features carry no information
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = static_cast<int>(i % 2);
  const Cohort c = classification_cohort(x, labels);
  RankingConfig cfg;
  cfg.n_bootstrap = 5;
  const FeatureRanking r = bootstrap_rank_features(c, "outcome", TaskKind::classification, cfg, 3);
  REQUIRE(r.names.size() == 3);
  CHECK(std::is_sorted(r.names.begin(), r.names.end()));  // equal scores: lexicographic order
  for (double s : r.cumulative_scores) CHECK(s == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
}
