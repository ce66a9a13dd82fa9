#include "popgraph/survstats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace popgraph {

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v.has_value())
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  if (c_index.has_value()) {
    put("c_index", c_index);
    return j;
  }
  put("auc", auc);
  put("sensitivity", sensitivity);
  put("specificity", specificity);
  put("f1", f1);
  put("accuracy", accuracy);
  return j;
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("auc_score: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += static_cast<std::size_t>(y == 1);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc_score: AUC undefined for single-class labels");

  // Midranks handle ties, giving exactly 0.5 credit per tied pair.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) rank_sum_pos += rank[k];
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport classification_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size()) throw DataError("classification_metrics: length mismatch");
  if (scores.empty()) throw DataError("classification_metrics: empty input");

  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    bool pred = scores[k] >= threshold;
    if (labels[k] == 1)
      (pred ? tp : fn) += 1;
    else
      (pred ? fp : tn) += 1;
  }

  MetricsReport report;
  try {
    report.auc = auc_score(scores, labels);
  } catch (const DataError&) {
    // Single-class labels: the remaining metrics are still meaningful.
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  report.sensitivity = ratio(tp, tp + fn);
  report.specificity = ratio(tn, tn + fp);
  report.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  report.accuracy = ratio(tp + tn, scores.size());
  return report;
}

double concordance_index(const std::vector<double>& risks, const std::vector<double>& times,
                         const std::vector<bool>& events) {
  const std::size_t n = risks.size();
  if (times.size() != n || events.size() != n) throw DataError("concordance_index: length mismatch");
  // Integer pair counts keep the final ratio reproducible regardless of
  // iteration order.
  std::uint64_t comparable = 0, concordant2 = 0;  // concordant2 counts half-units
  for (std::size_t i = 0; i < n; ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (times[i] >= times[j]) continue;
      ++comparable;
      if (risks[i] > risks[j])
        concordant2 += 2;
      else if (risks[i] == risks[j])
        concordant2 += 1;
    }
  }
  if (comparable == 0) throw DataError("concordance_index: no comparable pairs");
  return (static_cast<double>(concordant2) / 2.0) / static_cast<double>(comparable);
}

KMCurve km_estimate(const std::vector<double>& times, const std::vector<bool>& events) {
  const std::size_t n = times.size();
  if (n == 0 || events.size() != n) throw DataError("km_estimate: empty or mismatched input");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&times](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  KMCurve curve;
  double surv = 1.0;
  std::size_t i = 0;
  std::size_t at_risk = n;
  while (i < n) {
    std::size_t j = i;
    int d = 0, c = 0;
    while (j < n && times[order[j]] == times[order[i]]) {
      (events[order[j]] ? d : c) += 1;
      ++j;
    }
    if (d > 0) {
      // Censored at this exact time are still in the risk set.
      surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      curve.event_times.push_back(times[order[i]]);
      curve.survival_prob.push_back(surv);
      curve.at_risk.push_back(static_cast<int>(at_risk));
    }
    if (c > 0) curve.censor_times.insert(curve.censor_times.end(), static_cast<std::size_t>(c), times[order[i]]);
    at_risk -= static_cast<std::size_t>(j - i);
    i = j;
  }
  return curve;
}

void write_km_csv(const KMCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "time,survival,at_risk,censored\n";
  std::size_t ci = 0;
  auto censored_until = [&](double t) {
    int c = 0;
    while (ci < curve.censor_times.size() && curve.censor_times[ci] <= t) {
      ++c;
      ++ci;
    }
    return c;
  };
  for (std::size_t k = 0; k < curve.event_times.size(); ++k)
    out << curve.event_times[k] << ',' << curve.survival_prob[k] << ',' << curve.at_risk[k] << ','
        << censored_until(curve.event_times[k]) << '\n';
  // Trailing censorings past the last event keep the plot's tick marks complete.
  if (ci < curve.censor_times.size()) {
    double last_surv = curve.survival_prob.empty() ? 1.0 : curve.survival_prob.back();
    double t = curve.censor_times.back();
    out << t << ',' << last_surv << ',' << 0 << ',' << (curve.censor_times.size() - ci) << '\n';
  }
}

LogRankResult logrank_test(const std::vector<double>& times_a, const std::vector<bool>& events_a,
                           const std::vector<double>& times_b, const std::vector<bool>& events_b) {
  if (times_a.empty() || times_b.empty()) throw DataError("logrank_test: empty group");
  if (times_a.size() != events_a.size() || times_b.size() != events_b.size())
    throw DataError("logrank_test: length mismatch");

  struct Obs {
    double time;
    bool event;
    bool group_a;
  };
  std::vector<Obs> all;
  all.reserve(times_a.size() + times_b.size());
  for (std::size_t i = 0; i < times_a.size(); ++i) all.push_back({times_a[i], events_a[i], true});
  for (std::size_t i = 0; i < times_b.size(); ++i) all.push_back({times_b[i], events_b[i], false});
  std::sort(all.begin(), all.end(), [](const Obs& x, const Obs& y) { return x.time < y.time; });

  std::size_t total_events = 0;
  for (const auto& o : all) total_events += static_cast<std::size_t>(o.event);
  if (total_events == 0) throw DataError("logrank_test: no events in either group");

  double sum_o_minus_e = 0.0, sum_var = 0.0;
  std::size_t n_at_risk = all.size();
  std::size_t na_at_risk = times_a.size();
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t d = 0, da = 0, removed_a = 0;
    while (j < all.size() && all[j].time == all[i].time) {
      if (all[j].event) {
        ++d;
        da += static_cast<std::size_t>(all[j].group_a);
      }
      removed_a += static_cast<std::size_t>(all[j].group_a);
      ++j;
    }
    if (d > 0) {
      double n = static_cast<double>(n_at_risk);
      double na = static_cast<double>(na_at_risk);
      double dd = static_cast<double>(d);
      sum_o_minus_e += static_cast<double>(da) - dd * na / n;
      if (n_at_risk > 1)
        sum_var += dd * (na / n) * (1.0 - na / n) * (n - dd) / (n - 1.0);
    }
    n_at_risk -= j - i;
    na_at_risk -= removed_a;
    i = j;
  }

  LogRankResult result;
  if (sum_var <= 0.0) {
    result.chi_square = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.chi_square = sum_o_minus_e * sum_o_minus_e / sum_var;
  // df=1 chi-square upper tail: P(X > x) = erfc(sqrt(x/2)).
  result.p_value = std::erfc(std::sqrt(result.chi_square / 2.0));
  return result;
}

RiskGroups stratify_by_risk(const std::vector<double>& risks, double threshold) {
  RiskGroups groups;
  for (std::size_t i = 0; i < risks.size(); ++i)
    (risks[i] >= threshold ? groups.high : groups.low).push_back(i);
  return groups;
}

double validation_risk_threshold(const std::vector<std::vector<double>>& validation_risks_per_fold) {
  if (validation_risks_per_fold.empty()) throw DataError("validation_risk_threshold: no folds");
  double sum = 0.0;
  for (const auto& fold : validation_risks_per_fold) {
    if (fold.empty()) throw DataError("validation_risk_threshold: empty fold");
    std::vector<double> sorted = fold;
    std::sort(sorted.begin(), sorted.end());
    std::size_t m = sorted.size();
    double median = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    sum += median;
  }
  return sum / static_cast<double>(validation_risks_per_fold.size());
}

}  // namespace popgraph
