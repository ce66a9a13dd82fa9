#pragma once

#include "popgraph/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace popgraph {

/// Right-censored time-to-event observation.
struct SurvivalOutcome {
  double time_days = 0.0;
  bool event = false;
};

struct BinaryOutcome {
  int label = 0;  // 0 or 1
};

using Outcome = std::variant<SurvivalOutcome, BinaryOutcome>;

struct PatientRecord {
  std::string id;
  Vec features;
  std::map<std::string, Outcome> outcomes;

  bool has_outcome(const std::string& endpoint) const { return outcomes.count(endpoint) > 0; }
  const SurvivalOutcome& survival(const std::string& endpoint) const;
  const BinaryOutcome& binary(const std::string& endpoint) const;
};

/// Ordered patient collection; node index in the graph models equals the
/// patient's position. Immutable after construction.
struct Cohort {
  std::vector<PatientRecord> patients;
  std::vector<std::string> feature_names;

  std::size_t size() const { return patients.size(); }
  std::size_t n_features() const { return feature_names.size(); }

  /// Feature matrix, one row per patient in cohort order.
  Mat feature_matrix() const;
  /// Subset by patient positions, keeping the given order.
  Cohort subset(const std::vector<std::size_t>& indices) const;
  /// Drops all but the named feature columns, in the given order.
  Cohort select_features(const std::vector<std::string>& names) const;

  /// Checks id uniqueness, feature dimensions and finiteness.
  void validate() const;

  std::vector<double> survival_times(const std::string& endpoint) const;
  std::vector<bool> survival_events(const std::string& endpoint) const;
  std::vector<int> binary_labels(const std::string& endpoint) const;
};

/// Reads the feature and endpoint CSV files into a cohort. Feature columns
/// are all columns after patient_id; endpoint columns come in
/// `<name>_time`/`<name>_event` pairs or as `<name>_label`. Empty endpoint
/// cells mean the outcome is absent for that patient.
Cohort load_cohort(const std::string& features_path, const std::string& endpoints_path);

void save_cohort(const Cohort& cohort, const std::string& features_path,
                 const std::string& endpoints_path);

struct BinarizeResult {
  Cohort cohort;
  std::vector<std::string> excluded_ids;
};

/// Adds a `bin_<endpoint>` binary outcome: event within threshold -> 1,
/// any observation past threshold -> 0, censored within threshold -> the
/// patient is excluded. A time exactly at the threshold counts as 1.
BinarizeResult binarize_survival(const Cohort& cohort, const std::string& endpoint,
                                 double threshold_days = 730.0);

enum class SyntheticTask { classification, survival };

/// Standard-normal features with outcomes drawn from a logistic model
/// (endpoint "outcome") or an exponential proportional-hazards model with
/// hazard exp(signal.x) (endpoint "surv"). Pure function of its arguments.
Cohort generate_synthetic_cohort(std::size_t n, std::size_t p, SyntheticTask task,
                                 const Vec& signal, double censor_rate, std::uint64_t seed);

}  // namespace popgraph
