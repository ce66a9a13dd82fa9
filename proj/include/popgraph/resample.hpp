#pragma once

#include "popgraph/cohort.hpp"
#include "popgraph/common.hpp"

#include <vector>

namespace popgraph {

struct FoldSplit {
  std::vector<int> fold_of;  // per-patient fold index in [0, k)
  int k = 0;

  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> validation_indices(int fold) const;
};

/// Shuffles within strata (class label, or event flag for survival) and
/// deals round-robin into k folds.
FoldSplit stratified_kfold(const Cohort& cohort, const std::string& endpoint, int k,
                           std::uint64_t seed);

/// n draws with replacement; duplicated patients get `#<copy>` id suffixes so
/// id uniqueness survives.
Cohort bootstrap_sample(const Cohort& cohort, std::uint64_t seed);

/// Interpolation record for one synthetic row: x = seed + lambda*(neighbor − seed).
struct SyntheticProvenance {
  std::size_t seed_row;
  std::size_t neighbor_row;
  double lambda;
};

struct AdasynResult {
  Mat x;
  std::vector<int> y;
  std::vector<SyntheticProvenance> provenance;  // one per appended row
};

/// ADASYN: G = beta·(n_maj − n_min) synthetics, allocated to minority points
/// by the majority share of their k nearest neighbors; each synthetic
/// interpolates toward a random one of the point's k nearest minority
/// neighbors with λ ~ U(0,1).
AdasynResult adasyn_oversample(const Mat& x, const std::vector<int>& y, int k_neighbors,
                               double beta, std::uint64_t seed);

}  // namespace popgraph
