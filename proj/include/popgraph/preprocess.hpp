#pragma once

#include "popgraph/cohort.hpp"
#include "popgraph/common.hpp"
#include "popgraph/linmod.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace popgraph {

struct StandardizationParams {
  std::vector<std::string> feature_names;
  Vec mean;
  Vec scale;                       // population std; 1 for constant columns
  std::vector<std::string> constant_features;

  nlohmann::ordered_json to_json() const;
  static StandardizationParams from_json(const nlohmann::ordered_json& j);
};

StandardizationParams fit_standardizer(const Cohort& cohort);
Cohort apply_standardizer(const StandardizationParams& params, const Cohort& cohort);

/// Pairwise Spearman rank correlation, average ranks on ties, unit diagonal.
/// Constant columns correlate 0 with everything.
Mat spearman_matrix(const Mat& x);
inline Mat spearman_matrix(const Cohort& cohort) { return spearman_matrix(cohort.feature_matrix()); }

struct ClusterAssignment {
  std::vector<std::vector<std::string>> clusters;  // disjoint cover of all features
  std::vector<std::string> representatives;        // one member per cluster
};

/// Agglomerative complete-linkage clustering on distance 1 − |ρ|, cut at
/// 1 − threshold, so every within-cluster pair keeps |ρ| > threshold. The
/// representative maximizes Σ|ρ| to its cluster mates (ties: smaller name).
ClusterAssignment cluster_features(const Mat& corr, const std::vector<std::string>& names,
                                   double threshold = 0.9);

/// Nearest-neighbor (Kozachenko-Leonenko / Ross) MI estimate between a
/// continuous feature and discrete labels, clamped to >= 0. Constant feature
/// or single-class labels score 0.
double mutual_information_score(const std::vector<double>& feature, const std::vector<int>& labels,
                                int k_neighbors = 3);

struct FeatureRanking {
  std::vector<std::string> names;         // non-increasing cumulative score
  std::vector<double> cumulative_scores;  // strictly positive

  std::vector<std::string> top(std::size_t n) const;
  nlohmann::ordered_json to_json() const;
  static FeatureRanking from_json(const nlohmann::ordered_json& j);
};

enum class TaskKind { classification, survival };

struct RankingConfig {
  int n_bootstrap = 100;
  int mi_neighbors = 3;
  // Penalty inside the per-bootstrap Cox fits (survival ranking only).
  ElasticNetConfig cox_penalty{0.1, 0.5, 200, 1e-6};
};

/// Per-bootstrap feature scores (mutual information for classification,
/// |Cox elastic-net coefficients| for survival), each normalized to sum 1,
/// accumulated over n_bootstrap resamples. Zero-cumulative features drop out.
/// Iterations run on independent sub-seeded streams, so the result does not
/// depend on scheduling.
FeatureRanking bootstrap_rank_features(const Cohort& cohort, const std::string& endpoint,
                                       TaskKind task, const RankingConfig& cfg,
                                       std::uint64_t seed);

}  // namespace popgraph
