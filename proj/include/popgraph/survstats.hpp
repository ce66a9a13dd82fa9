#pragma once

#include "popgraph/common.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace popgraph {

/// Product-limit curve. survival_prob[i] is S just after event_times[i];
/// S starts implicitly at 1. at_risk[i] counts patients at risk just before
/// event_times[i] (censored exactly at an event time still count).
struct KMCurve {
  std::vector<double> event_times;
  std::vector<double> survival_prob;
  std::vector<int> at_risk;
  std::vector<double> censor_times;
};

struct LogRankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
};

/// Either the classification block or c_index is populated, depending on the
/// task. auc stays empty when the labels are single-class.
struct MetricsReport {
  std::optional<double> auc;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
  std::optional<double> accuracy;
  std::optional<double> c_index;

  nlohmann::ordered_json to_json() const;
};

/// Mann-Whitney AUC with 0.5 credit for tied scores. Throws DataError when
/// only one class is present.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

MetricsReport classification_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels, double threshold = 0.5);

/// Harrell's c: over pairs (i,j) with E_i=1 and T_i < T_j, concordant when
/// risk_i > risk_j, 0.5 for tied risks. Throws when no pair is comparable.
double concordance_index(const std::vector<double>& risks, const std::vector<double>& times,
                         const std::vector<bool>& events);

KMCurve km_estimate(const std::vector<double>& times, const std::vector<bool>& events);

void write_km_csv(const KMCurve& curve, const std::string& path);

LogRankResult logrank_test(const std::vector<double>& times_a, const std::vector<bool>& events_a,
                           const std::vector<double>& times_b, const std::vector<bool>& events_b);

struct RiskGroups {
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
  bool degenerate() const { return low.empty() || high.empty(); }
};

/// high group = risk >= threshold.
RiskGroups stratify_by_risk(const std::vector<double>& risks, double threshold);

/// Mean over folds of the per-fold median validation risk.
double validation_risk_threshold(const std::vector<std::vector<double>>& validation_risks_per_fold);

}  // namespace popgraph
