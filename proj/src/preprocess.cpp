#include "popgraph/preprocess.hpp"

#include "popgraph/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace popgraph {

nlohmann::ordered_json StandardizationParams::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json means, scales;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    means[feature_names[i]] = mean[static_cast<Eigen::Index>(i)];
    scales[feature_names[i]] = scale[static_cast<Eigen::Index>(i)];
  }
  j["mean"] = std::move(means);
  j["scale"] = std::move(scales);
  j["constant_features"] = constant_features;
  return j;
}

StandardizationParams StandardizationParams::from_json(const nlohmann::ordered_json& j) {
  StandardizationParams params;
  const auto& means = j.at("mean");
  params.mean.resize(static_cast<Eigen::Index>(means.size()));
  params.scale.resize(static_cast<Eigen::Index>(means.size()));
  Eigen::Index i = 0;
  for (auto it = means.begin(); it != means.end(); ++it, ++i) {
    params.feature_names.push_back(it.key());
    params.mean[i] = it.value().get<double>();
    params.scale[i] = j.at("scale").at(it.key()).get<double>();
  }
  params.constant_features = j.at("constant_features").get<std::vector<std::string>>();
  return params;
}

StandardizationParams fit_standardizer(const Cohort& cohort) {
  if (cohort.size() < 2) throw DataError("fit_standardizer: need at least 2 patients");
  Mat x = cohort.feature_matrix();
  StandardizationParams params;
  params.feature_names = cohort.feature_names;
  params.mean = x.colwise().mean();
  params.scale.resize(x.cols());
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double var = (x.col(j).array() - params.mean[j]).square().sum() / n;
    double sd = std::sqrt(var);
    if (sd == 0.0) {
      params.scale[j] = 1.0;
      params.constant_features.push_back(cohort.feature_names[static_cast<std::size_t>(j)]);
    } else {
      params.scale[j] = sd;
    }
  }
  return params;
}

Cohort apply_standardizer(const StandardizationParams& params, const Cohort& cohort) {
  if (params.feature_names != cohort.feature_names)
    throw DataError("apply_standardizer: feature names do not match fitted params");
  Cohort out = cohort;
  for (auto& rec : out.patients)
    rec.features = (rec.features - params.mean).cwiseQuotient(params.scale);
  return out;
}

namespace {

// Average ranks (1-based), ties get the midrank.
Vec midranks(const Vec& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&v](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Vec rank(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v[order[static_cast<std::size_t>(j + 1)]] == v[order[static_cast<std::size_t>(i)]]) ++j;
    double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) rank[order[static_cast<std::size_t>(k)]] = mid;
    i = j + 1;
  }
  return rank;
}

}  // namespace

Mat spearman_matrix(const Mat& x) {
  if (x.rows() < 3) throw DataError("spearman_matrix: need at least 3 patients");
  const Eigen::Index p = x.cols();
  Mat ranks(x.rows(), p);
  std::vector<bool> constant(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    ranks.col(j) = midranks(x.col(j));
    constant[static_cast<std::size_t>(j)] = x.col(j).minCoeff() == x.col(j).maxCoeff();
  }
  ranks.rowwise() -= ranks.colwise().mean();
  // Denominator as sqrt of the product of squared norms: exact for integral
  // rank sums (e.g. (1,2,3) vs (3,1,2) gives -0.5 bit-for-bit).
  Vec norms_sq = ranks.colwise().squaredNorm();
  Mat rho = Mat::Identity(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a + 1; b < p; ++b) {
      double r = 0.0;
      if (!constant[static_cast<std::size_t>(a)] && !constant[static_cast<std::size_t>(b)])
        r = ranks.col(a).dot(ranks.col(b)) / std::sqrt(norms_sq[a] * norms_sq[b]);
      rho(a, b) = r;
      rho(b, a) = r;
    }
  }
  return rho;
}

ClusterAssignment cluster_features(const Mat& corr, const std::vector<std::string>& names,
                                   double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("cluster_features: threshold must be in (0,1)");
  const std::size_t p = names.size();
  if (corr.rows() != static_cast<Eigen::Index>(p) || corr.cols() != static_cast<Eigen::Index>(p))
    throw DataError("cluster_features: matrix/name dimension mismatch");

  const double cut = 1.0 - threshold;
  // Active clusters as sorted index lists; merge the closest pair under
  // complete linkage until nothing is below the cut. O(p^3) is fine at a few
  // hundred features.
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < p; ++i) clusters.push_back({i});

  auto complete_dist = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double d = 0.0;
    for (std::size_t i : a)
      for (std::size_t j : b)
        d = std::max(d, 1.0 - std::abs(corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    return d;
  };

  for (;;) {
    double best = cut;
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double d = complete_dist(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    if (!found) break;
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(clusters[bi].begin(), clusters[bi].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  ClusterAssignment assignment;
  for (const auto& members : clusters) {
    std::vector<std::string> group;
    for (std::size_t i : members) group.push_back(names[i]);
    // Representative: maximal total |rho| to mates, lexicographic tie-break.
    std::size_t rep = members.front();
    double rep_score = -1.0;
    for (std::size_t i : members) {
      double score = 0.0;
      for (std::size_t j : members)
        if (j != i) score += std::abs(corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      if (score > rep_score || (score == rep_score && names[i] < names[rep])) {
        rep = i;
        rep_score = score;
      }
    }
    assignment.clusters.push_back(std::move(group));
    assignment.representatives.push_back(names[rep]);
  }
  return assignment;
}

namespace {

double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  return result + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

}  // namespace

double mutual_information_score(const std::vector<double>& feature, const std::vector<int>& labels,
                                int k_neighbors) {
  const std::size_t n = feature.size();
  if (labels.size() != n) throw DataError("mutual_information_score: length mismatch");
  if (n < 2 || k_neighbors < 1) throw ConfigError("mutual_information_score: bad arguments");

  // Group sample positions by label; singleton-label samples are ignored.
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < n; ++i) by_label[labels[i]].push_back(i);
  if (by_label.size() < 2) return 0.0;
  if (*std::max_element(feature.begin(), feature.end()) ==
      *std::min_element(feature.begin(), feature.end()))
    return 0.0;

  std::vector<double> radius(n, 0.0);
  std::vector<int> k_used(n, 0);
  std::vector<std::size_t> kept;
  for (const auto& [label, members] : by_label) {
    if (members.size() < 2) continue;
    int k = std::min<int>(k_neighbors, static_cast<int>(members.size()) - 1);
    std::vector<double> vals;
    vals.reserve(members.size());
    for (std::size_t i : members) vals.push_back(feature[i]);
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&vals](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<double> sorted(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) sorted[i] = vals[order[i]];
    // k-th nearest same-class distance: best window of k+1 consecutive
    // sorted values containing the point.
    for (std::size_t pos = 0; pos < sorted.size(); ++pos) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t lo = pos >= static_cast<std::size_t>(k) ? pos - static_cast<std::size_t>(k) : 0;
      std::size_t hi = std::min(pos, sorted.size() - 1 - static_cast<std::size_t>(k));
      for (std::size_t s = lo; s <= hi; ++s) {
        double d = std::max(sorted[pos] - sorted[s], sorted[s + static_cast<std::size_t>(k)] - sorted[pos]);
        best = std::min(best, d);
      }
      std::size_t idx = members[order[pos]];
      radius[idx] = std::nextafter(best, 0.0);  // exclude ties at exactly the k-th distance
      k_used[idx] = k;
      kept.push_back(idx);
    }
  }
  if (kept.empty()) return 0.0;

  std::vector<double> all_sorted;
  all_sorted.reserve(kept.size());
  for (std::size_t i : kept) all_sorted.push_back(feature[i]);
  std::sort(all_sorted.begin(), all_sorted.end());

  const double n_kept = static_cast<double>(kept.size());
  double mean_dg_k = 0.0, mean_dg_label = 0.0, mean_dg_m = 0.0;
  for (std::size_t i : kept) {
    // Count |x_j - x_i| <= radius by expanding from the point's own position
    // with exact distance comparisons. Forming interval endpoints x_i ± r
    // instead can round across a tie the shrunken radius meant to exclude.
    const double xi = feature[i];
    std::size_t left =
        static_cast<std::size_t>(std::lower_bound(all_sorted.begin(), all_sorted.end(), xi) -
                                 all_sorted.begin());
    std::size_t right = left;
    while (left > 0 && xi - all_sorted[left - 1] <= radius[i]) --left;
    while (right < all_sorted.size() && all_sorted[right] - xi <= radius[i]) ++right;
    double m = static_cast<double>(right - left);  // includes the point itself
    mean_dg_m += digamma(m);
    mean_dg_k += digamma(static_cast<double>(k_used[i]));
    mean_dg_label += digamma(static_cast<double>(by_label[labels[i]].size()));
  }
  mean_dg_m /= n_kept;
  mean_dg_k /= n_kept;
  mean_dg_label /= n_kept;
  double mi = digamma(n_kept) + mean_dg_k - mean_dg_label - mean_dg_m;
  return std::max(0.0, mi);
}

std::vector<std::string> FeatureRanking::top(std::size_t n) const {
  std::vector<std::string> out(names.begin(),
                               names.begin() + static_cast<std::ptrdiff_t>(std::min(n, names.size())));
  return out;
}

nlohmann::ordered_json FeatureRanking::to_json() const {
  nlohmann::ordered_json scores;
  for (std::size_t i = 0; i < names.size(); ++i) scores[names[i]] = cumulative_scores[i];
  nlohmann::ordered_json j;
  j["features"] = std::move(scores);
  return j;
}

FeatureRanking FeatureRanking::from_json(const nlohmann::ordered_json& j) {
  FeatureRanking ranking;
  const auto& scores = j.at("features");
  for (auto it = scores.begin(); it != scores.end(); ++it) {
    ranking.names.push_back(it.key());
    ranking.cumulative_scores.push_back(it.value().get<double>());
  }
  return ranking;
}

FeatureRanking bootstrap_rank_features(const Cohort& cohort, const std::string& endpoint,
                                       TaskKind task, const RankingConfig& cfg,
                                       std::uint64_t seed) {
  if (cfg.n_bootstrap < 1) throw ConfigError("bootstrap_rank_features: n_bootstrap must be >= 1");
  const std::size_t p = cohort.n_features();
  if (p == 0) throw DataError("bootstrap_rank_features: no features");
  if (!cohort.patients.empty()) {
    const auto& first = cohort.patients.front();
    auto it = first.outcomes.find(endpoint);
    if (it == first.outcomes.end())
      throw DataError("bootstrap_rank_features: endpoint '" + endpoint + "' missing");
    bool is_binary = std::holds_alternative<BinaryOutcome>(it->second);
    if (is_binary != (task == TaskKind::classification))
      throw DataError("bootstrap_rank_features: task does not match endpoint type");
  }

  std::vector<Vec> per_iter(static_cast<std::size_t>(cfg.n_bootstrap));
  parallel_for(static_cast<std::size_t>(cfg.n_bootstrap), [&](std::size_t b) {
    Cohort boot = bootstrap_sample(cohort, sub_seed(seed, b));
    Vec s(static_cast<Eigen::Index>(p));
    if (task == TaskKind::classification) {
      auto labels = boot.binary_labels(endpoint);
      Mat x = boot.feature_matrix();
      for (std::size_t j = 0; j < p; ++j) {
        std::vector<double> col(x.col(static_cast<Eigen::Index>(j)).data(),
                                x.col(static_cast<Eigen::Index>(j)).data() + x.rows());
        s[static_cast<Eigen::Index>(j)] = mutual_information_score(col, labels, cfg.mi_neighbors);
      }
    } else {
      auto times = boot.survival_times(endpoint);
      auto events = boot.survival_events(endpoint);
      auto fit = fit_cox_elasticnet(boot.feature_matrix(), times, events, cfg.cox_penalty);
      s = fit.coefficients.cwiseAbs();
    }
    double sum = s.sum();
    if (sum > 0.0)
      s /= sum;
    else
      s.setConstant(1.0 / static_cast<double>(p));  // every bootstrap votes with equal weight
    per_iter[b] = std::move(s);
  });

  Vec cumulative = Vec::Zero(static_cast<Eigen::Index>(p));
  for (const auto& s : per_iter) cumulative += s;

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double sa = cumulative[static_cast<Eigen::Index>(a)];
    double sb = cumulative[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return cohort.feature_names[a] < cohort.feature_names[b];
  });

  FeatureRanking ranking;
  for (std::size_t j : order) {
    double score = cumulative[static_cast<Eigen::Index>(j)];
    if (score <= 0.0) continue;
    ranking.names.push_back(cohort.feature_names[j]);
    ranking.cumulative_scores.push_back(score);
  }
  return ranking;
}

}  // namespace popgraph
