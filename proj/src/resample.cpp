#include "popgraph/resample.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace popgraph {

std::vector<std::size_t> FoldSplit::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::validation_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

FoldSplit stratified_kfold(const Cohort& cohort, const std::string& endpoint, int k,
                           std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be >= 2");
  if (cohort.size() == 0) throw DataError("stratified_kfold: empty cohort");

  // Stratum key: class label for binary endpoints, event flag for survival.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& rec = cohort.patients[i];
    auto it = rec.outcomes.find(endpoint);
    if (it == rec.outcomes.end())
      throw DataError("stratified_kfold: patient " + rec.id + " lacks endpoint '" + endpoint + "'");
    int key;
    if (const auto* b = std::get_if<BinaryOutcome>(&it->second))
      key = b->label;
    else
      key = std::get<SurvivalOutcome>(it->second).event ? 1 : 0;
    strata[key].push_back(i);
  }
  for (const auto& [key, members] : strata)
    if (members.size() < static_cast<std::size_t>(k))
      throw DataError("stratified_kfold: stratum " + std::to_string(key) + " has " +
                      std::to_string(members.size()) + " patients, fewer than k");

  auto rng = make_rng(seed);
  FoldSplit split;
  split.k = k;
  split.fold_of.assign(cohort.size(), -1);
  // The round-robin position carries across strata so overall fold sizes
  // differ by at most one.
  int pos = 0;
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) {
      split.fold_of[idx] = pos % k;
      ++pos;
    }
  }
  return split;
}

Cohort bootstrap_sample(const Cohort& cohort, std::uint64_t seed) {
  if (cohort.size() == 0) throw DataError("bootstrap_sample: empty cohort");
  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cohort.size() - 1);
  Cohort out;
  out.feature_names = cohort.feature_names;
  out.patients.reserve(cohort.size());
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    PatientRecord rec = cohort.patients[pick(rng)];
    int count = ++seen[rec.id];
    if (count > 1) rec.id += "#" + std::to_string(count);
    out.patients.push_back(std::move(rec));
  }
  return out;
}

namespace {

// Indices of the k nearest rows to `query` among `candidates` (self excluded
// by the caller), ties broken by row index.
std::vector<std::size_t> k_nearest(const Mat& x, std::size_t query,
                                   const std::vector<std::size_t>& candidates, int k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(candidates.size());
  for (std::size_t c : candidates) {
    if (c == query) continue;
    double d = (x.row(static_cast<Eigen::Index>(c)) - x.row(static_cast<Eigen::Index>(query))).norm();
    dist.emplace_back(d, c);
  }
  std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
  std::vector<std::size_t> out;
  out.reserve(kk);
  for (std::size_t i = 0; i < kk; ++i) out.push_back(dist[i].second);
  return out;
}

}  // namespace

AdasynResult adasyn_oversample(const Mat& x, const std::vector<int>& y, int k_neighbors,
                               double beta, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw DataError("adasyn_oversample: X/y size mismatch");
  if (k_neighbors < 1) throw ConfigError("adasyn_oversample: k_neighbors must be >= 1");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("adasyn_oversample: beta must be in [0,1]");

  std::vector<std::size_t> class_rows[2];
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) throw DataError("adasyn_oversample: labels must be 0/1");
    class_rows[y[i]].push_back(i);
  }
  if (class_rows[0].empty() || class_rows[1].empty())
    throw DataError("adasyn_oversample: both classes required");

  AdasynResult result;
  result.x = x;
  result.y = y;
  if (class_rows[0].size() == class_rows[1].size()) return result;  // no deficit

  const int minority = class_rows[0].size() < class_rows[1].size() ? 0 : 1;
  const auto& min_rows = class_rows[minority];
  const std::size_t n_min = min_rows.size();
  const std::size_t n_maj = n - n_min;
  if (n_min <= static_cast<std::size_t>(k_neighbors))
    throw DataError("adasyn_oversample: minority class smaller than k_neighbors + 1");

  const double g_total = beta * static_cast<double>(n_maj - n_min);

  // r_i: majority share of each minority point's k nearest neighbors.
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::vector<double> r(n_min, 0.0);
  double r_sum = 0.0;
  for (std::size_t i = 0; i < n_min; ++i) {
    auto nn = k_nearest(x, min_rows[i], all_rows, k_neighbors);
    int maj = 0;
    for (std::size_t idx : nn) maj += static_cast<int>(y[idx] != minority);
    r[i] = static_cast<double>(maj) / static_cast<double>(nn.size());
    r_sum += r[i];
  }

  std::vector<long long> g(n_min, 0);
  for (std::size_t i = 0; i < n_min; ++i) {
    double rhat = r_sum > 0.0 ? r[i] / r_sum : 1.0 / static_cast<double>(n_min);
    g[i] = std::llround(rhat * g_total);
  }

  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n_min; ++i) {
    if (g[i] == 0) continue;
    auto min_nn = k_nearest(x, min_rows[i], min_rows, k_neighbors);
    std::uniform_int_distribution<std::size_t> pick(0, min_nn.size() - 1);
    for (long long s = 0; s < g[i]; ++s) {
      std::size_t nn = min_nn[pick(rng)];
      double lambda = unif(rng);
      while (lambda == 0.0) lambda = unif(rng);  // keep the interpolation strict
      result.provenance.push_back({min_rows[i], nn, lambda});
    }
  }

  const std::size_t n_new = result.provenance.size();
  result.x.conservativeResize(static_cast<Eigen::Index>(n + n_new), x.cols());
  for (std::size_t s = 0; s < n_new; ++s) {
    const auto& prov = result.provenance[s];
    result.x.row(static_cast<Eigen::Index>(n + s)) =
        x.row(static_cast<Eigen::Index>(prov.seed_row)) +
        prov.lambda * (x.row(static_cast<Eigen::Index>(prov.neighbor_row)) -
                       x.row(static_cast<Eigen::Index>(prov.seed_row)));
    result.y.push_back(minority);
  }
  return result;
}

}  // namespace popgraph
