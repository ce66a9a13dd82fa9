#include "popgraph/linmod.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace popgraph {

namespace {

thread_local std::vector<double> g_objective_trace;

double soft_threshold(double u, double lambda) {
  if (u > lambda) return u - lambda;
  if (u < -lambda) return u + lambda;
  return 0.0;
}

double penalty_value(const Vec& beta, const ElasticNetConfig& cfg) {
  return cfg.alpha * (cfg.l1_ratio * beta.template lpNorm<1>() +
                      0.5 * (1.0 - cfg.l1_ratio) * beta.squaredNorm());
}

constexpr double kWeightFloor = 1e-5;

// Sorted-time scaffolding shared by the Cox objective and its IRLS weights.
struct CoxOrder {
  std::vector<std::size_t> asc;  // patient indices by ascending time
  std::size_t n_events = 0;
};

CoxOrder make_cox_order(const std::vector<double>& times, const std::vector<bool>& events) {
  CoxOrder ord;
  ord.asc.resize(times.size());
  std::iota(ord.asc.begin(), ord.asc.end(), std::size_t{0});
  std::sort(ord.asc.begin(), ord.asc.end(),
            [&times](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  for (bool e : events) ord.n_events += static_cast<std::size_t>(e);
  return ord;
}

// Breslow: -(1/n)·Σ_events [η_i − log Σ_{T_j ≥ T_i} e^{η_j}], shift-stabilized.
double cox_negloglik(const CoxOrder& ord, const std::vector<double>& times,
                     const std::vector<bool>& events, const Vec& eta) {
  const std::size_t n = ord.asc.size();
  const double shift = eta.maxCoeff();
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + std::exp(eta[static_cast<Eigen::Index>(ord.asc[i])] - shift);
  double loglik = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && times[ord.asc[j]] == times[ord.asc[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      std::size_t idx = ord.asc[k];
      if (events[idx]) loglik += eta[static_cast<Eigen::Index>(idx)] - shift - std::log(suffix[i]);
    }
    i = j;
  }
  return -loglik / static_cast<double>(n);
}

// Per-patient gradient g_k = e^{η_k}A_k − E_k and diagonal Hessian
// h_k = e^{η_k}A_k − e^{2η_k}B_k of the un-normalized negative log partial
// likelihood, with A_k = Σ_{event times t ≤ T_k} d_t/S(t), B_k the same with
// S(t)².
void cox_grad_hess(const CoxOrder& ord, const std::vector<double>& times,
                   const std::vector<bool>& events, const Vec& eta, Vec& grad, Vec& hess) {
  const std::size_t n = ord.asc.size();
  const double shift = eta.maxCoeff();
  std::vector<double> e(n);  // exp(eta - shift) in ascending-time order
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    e[i] = std::exp(eta[static_cast<Eigen::Index>(ord.asc[i])] - shift);
    suffix[i] = suffix[i + 1] + e[i];
  }
  grad.resize(static_cast<Eigen::Index>(n));
  hess.resize(static_cast<Eigen::Index>(n));
  double cum_a = 0.0, cum_b = 0.0;  // in the shifted scale
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    int d = 0;
    while (j < n && times[ord.asc[j]] == times[ord.asc[i]]) {
      d += static_cast<int>(events[ord.asc[j]]);
      ++j;
    }
    if (d > 0) {
      cum_a += static_cast<double>(d) / suffix[i];
      cum_b += static_cast<double>(d) / (suffix[i] * suffix[i]);
    }
    for (std::size_t k = i; k < j; ++k) {
      std::size_t idx = ord.asc[k];
      double ea = e[k] * cum_a;
      grad[static_cast<Eigen::Index>(idx)] = ea - (events[idx] ? 1.0 : 0.0);
      hess[static_cast<Eigen::Index>(idx)] = ea - e[k] * e[k] * cum_b;
    }
    i = j;
  }
}

// One cyclic sweep of penalized weighted least squares. r is the working
// residual z − intercept − Xβ and is kept consistent with beta/intercept.
void cd_sweep(const Mat& x, const Vec& w, Vec& r, Vec& beta, double* intercept,
              const ElasticNetConfig& cfg) {
  const double n = static_cast<double>(x.rows());
  const double l1 = cfg.alpha * cfg.l1_ratio;
  const double l2 = cfg.alpha * (1.0 - cfg.l1_ratio);
  if (intercept) {
    double wsum = w.sum();
    double delta = w.dot(r) / wsum;
    *intercept += delta;
    r.array() -= delta;
  }
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double wxx = (w.array() * x.col(j).array().square()).sum() / n;
    double u = (w.array() * x.col(j).array() * r.array()).sum() / n + wxx * beta[j];
    double bj = soft_threshold(u, l1) / (wxx + l2);
    if (bj != beta[j]) {
      r -= x.col(j) * (bj - beta[j]);
      beta[j] = bj;
    }
  }
}

// Accepts the largest step t ∈ {1, 1/2, ...} with objective(new) ≤ current.
// Returns t, or 0 when no step decreases the objective.
template <typename Objective>
double backtrack(const Objective& f, double f_old, const Vec& beta_old, double b_old,
                 const Vec& beta_new, double b_new, Vec& beta_out, double& b_out) {
  double t = 1.0;
  for (int k = 0; k < 50; ++k) {
    beta_out = beta_old + t * (beta_new - beta_old);
    b_out = b_old + t * (b_new - b_old);
    if (f(beta_out, b_out) <= f_old) return t;
    t *= 0.5;
  }
  beta_out = beta_old;
  b_out = b_old;
  return 0.0;
}

}  // namespace

void ElasticNetConfig::validate() const {
  if (alpha < 0.0) throw ConfigError("ElasticNetConfig: alpha must be >= 0");
  if (l1_ratio < 0.0 || l1_ratio > 1.0) throw ConfigError("ElasticNetConfig: l1_ratio must be in [0,1]");
  if (max_iter <= 0) throw ConfigError("ElasticNetConfig: max_iter must be positive");
  if (tol <= 0.0) throw ConfigError("ElasticNetConfig: tol must be positive");
}

const std::vector<double>& last_objective_trace() { return g_objective_trace; }

double logistic_objective(const Mat& x, const std::vector<int>& y, const Vec& beta,
                          double intercept, const ElasticNetConfig& cfg) {
  Vec eta = x * beta;
  eta.array() += intercept;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double sign = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    loss += log1pexp(-sign * eta[i]);
  }
  return loss / static_cast<double>(x.rows()) + penalty_value(beta, cfg);
}

LinearModelFit fit_logistic_elasticnet(const Mat& x, const std::vector<int>& y,
                                       const ElasticNetConfig& cfg) {
  cfg.validate();
  const auto n = x.rows();
  const auto p = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw DataError("fit_logistic_elasticnet: X/y size mismatch");
  std::size_t n_pos = 0;
  for (int yi : y) {
    if (yi != 0 && yi != 1) throw DataError("fit_logistic_elasticnet: labels must be 0/1");
    n_pos += static_cast<std::size_t>(yi);
  }
  if (n_pos == 0 || n_pos == y.size())
    throw DataError("fit_logistic_elasticnet: single-class labels");

  LinearModelFit fit;
  fit.coefficients = Vec::Zero(p);
  fit.intercept = 0.0;

  auto objective = [&](const Vec& b, double c) { return logistic_objective(x, y, b, c, cfg); };

  g_objective_trace.clear();
  double f_cur = objective(fit.coefficients, fit.intercept);
  g_objective_trace.push_back(f_cur);

  Vec beta_new(p), beta_next(p);
  double b_next = 0.0;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    fit.n_iter = iter + 1;
    Vec eta = x * fit.coefficients;
    eta.array() += fit.intercept;
    Vec w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double pi = sigmoid(eta[i]);
      double wi = std::max(pi * (1.0 - pi), kWeightFloor);
      w[i] = wi;
      z[i] = eta[i] + (static_cast<double>(y[static_cast<std::size_t>(i)]) - pi) / wi;
    }
    beta_new = fit.coefficients;
    double b_new = fit.intercept;
    Vec r = z - eta;  // z − b − Xβ at the expansion point
    cd_sweep(x, w, r, beta_new, &b_new, cfg);

    double t = backtrack(objective, f_cur, fit.coefficients, fit.intercept, beta_new, b_new,
                         beta_next, b_next);
    if (t == 0.0) {
      fit.converged = true;
      break;
    }
    double max_change = std::max((beta_next - fit.coefficients).template lpNorm<Eigen::Infinity>(),
                                 std::abs(b_next - fit.intercept));
    fit.coefficients = beta_next;
    fit.intercept = b_next;
    f_cur = objective(fit.coefficients, fit.intercept);
    g_objective_trace.push_back(f_cur);
    if (max_change < cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.coefficients.allFinite()) throw TrainError("fit_logistic_elasticnet: non-finite coefficients");
  return fit;
}

Vec predict_logistic(const LinearModelFit& fit, const Mat& x) {
  if (x.cols() != fit.coefficients.size())
    throw DataError("predict_logistic: feature dimension mismatch");
  Vec eta = x * fit.coefficients;
  eta.array() += fit.intercept;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = sigmoid(eta[i]);
  return eta;
}

double cox_objective(const Mat& x, const std::vector<double>& times,
                     const std::vector<bool>& events, const Vec& beta,
                     const ElasticNetConfig& cfg) {
  CoxOrder ord = make_cox_order(times, events);
  Vec eta = x * beta;
  return cox_negloglik(ord, times, events, eta) + penalty_value(beta, cfg);
}

LinearModelFit fit_cox_elasticnet(const Mat& x, const std::vector<double>& times,
                                  const std::vector<bool>& events, const ElasticNetConfig& cfg) {
  cfg.validate();
  const auto n = x.rows();
  const auto p = x.cols();
  if (static_cast<std::size_t>(n) != times.size() || times.size() != events.size())
    throw DataError("fit_cox_elasticnet: X/times/events size mismatch");
  CoxOrder ord = make_cox_order(times, events);
  if (ord.n_events == 0) throw DataError("fit_cox_elasticnet: no events");

  LinearModelFit fit;
  fit.coefficients = Vec::Zero(p);

  auto objective = [&](const Vec& b, double) {
    Vec eta = x * b;
    return cox_negloglik(ord, times, events, eta) + penalty_value(b, cfg);
  };

  g_objective_trace.clear();
  double f_cur = objective(fit.coefficients, 0.0);
  g_objective_trace.push_back(f_cur);

  Vec grad, hess, beta_new(p), beta_next(p);
  double b_unused = 0.0;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    fit.n_iter = iter + 1;
    Vec eta = x * fit.coefficients;
    cox_grad_hess(ord, times, events, eta, grad, hess);
    Vec w(n), r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w[i] = std::max(hess[i], kWeightFloor);
      r[i] = -grad[i] / w[i];  // z − Xβ with z = η − g/w
    }
    beta_new = fit.coefficients;
    cd_sweep(x, w, r, beta_new, nullptr, cfg);

    double t = backtrack(objective, f_cur, fit.coefficients, 0.0, beta_new, 0.0, beta_next,
                         b_unused);
    if (t == 0.0) {
      fit.converged = true;
      break;
    }
    double max_change = (beta_next - fit.coefficients).template lpNorm<Eigen::Infinity>();
    fit.coefficients = beta_next;
    f_cur = objective(fit.coefficients, 0.0);
    g_objective_trace.push_back(f_cur);
    if (max_change < cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.coefficients.allFinite()) throw TrainError("fit_cox_elasticnet: non-finite coefficients");
  return fit;
}

Vec predict_cox_risk(const LinearModelFit& fit, const Mat& x) {
  if (x.cols() != fit.coefficients.size())
    throw DataError("predict_cox_risk: feature dimension mismatch");
  return x * fit.coefficients;
}

nlohmann::ordered_json fit_to_json(const LinearModelFit& fit,
                                   const std::vector<std::string>& feature_names) {
  if (static_cast<Eigen::Index>(feature_names.size()) != fit.coefficients.size())
    throw DataError("fit_to_json: name count mismatch");
  nlohmann::ordered_json j;
  nlohmann::ordered_json coefs;
  for (std::size_t i = 0; i < feature_names.size(); ++i)
    coefs[feature_names[i]] = fit.coefficients[static_cast<Eigen::Index>(i)];
  j["coefficients"] = std::move(coefs);
  j["intercept"] = fit.intercept;
  j["converged"] = fit.converged;
  j["n_iter"] = fit.n_iter;
  return j;
}

LinearModelFit fit_from_json(const nlohmann::ordered_json& j,
                             const std::vector<std::string>& feature_names) {
  LinearModelFit fit;
  fit.coefficients.resize(static_cast<Eigen::Index>(feature_names.size()));
  const auto& coefs = j.at("coefficients");
  for (std::size_t i = 0; i < feature_names.size(); ++i)
    fit.coefficients[static_cast<Eigen::Index>(i)] = coefs.at(feature_names[i]).get<double>();
  fit.intercept = j.at("intercept").get<double>();
  fit.converged = j.at("converged").get<bool>();
  fit.n_iter = j.at("n_iter").get<int>();
  return fit;
}

}  // namespace popgraph
