#pragma once

#include "popgraph/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace popgraph {

struct ElasticNetConfig {
  double alpha = 0.0;      // total penalty strength, >= 0
  double l1_ratio = 0.5;   // in [0,1]
  int max_iter = 1000;     // outer IRLS iterations
  double tol = 1e-7;       // max coefficient change

  void validate() const;
};

struct LinearModelFit {
  Vec coefficients;
  double intercept = 0.0;  // logistic only; Cox has none
  bool converged = false;
  int n_iter = 0;
};

nlohmann::ordered_json fit_to_json(const LinearModelFit& fit,
                                   const std::vector<std::string>& feature_names);
LinearModelFit fit_from_json(const nlohmann::ordered_json& j,
                             const std::vector<std::string>& feature_names);

/// Minimizes (1/n)·Σ log(1+exp(−ỹᵢ(β·xᵢ+b))) + α·(l1·‖β‖₁ + (1−l1)/2·‖β‖₂²)
/// with unpenalized intercept, ỹ ∈ {−1,+1}. Cyclic coordinate descent on the
/// IRLS quadratic; each sweep is line-searched so the true penalized
/// objective never increases.
LinearModelFit fit_logistic_elasticnet(const Mat& x, const std::vector<int>& y,
                                       const ElasticNetConfig& cfg);

Vec predict_logistic(const LinearModelFit& fit, const Mat& x);

/// Minimizes −(1/n)·log partial likelihood (Breslow ties) + elastic-net
/// penalty. No intercept: the baseline hazard absorbs it.
LinearModelFit fit_cox_elasticnet(const Mat& x, const std::vector<double>& times,
                                  const std::vector<bool>& events, const ElasticNetConfig& cfg);

/// Linear predictor β·x per row (log-risk; higher = higher hazard).
Vec predict_cox_risk(const LinearModelFit& fit, const Mat& x);

/// Penalized objectives, exposed for the solver's monotonicity guarantee and
/// for test-side verification.
double logistic_objective(const Mat& x, const std::vector<int>& y, const Vec& beta,
                          double intercept, const ElasticNetConfig& cfg);
double cox_objective(const Mat& x, const std::vector<double>& times,
                     const std::vector<bool>& events, const Vec& beta,
                     const ElasticNetConfig& cfg);

/// Objective value after each accepted sweep of the most recent fit; used to
/// assert per-sweep monotone decrease.
const std::vector<double>& last_objective_trace();

}  // namespace popgraph
