#pragma once

#include "popgraph/cohort.hpp"
#include "popgraph/common.hpp"
#include "popgraph/graphnets.hpp"
#include "popgraph/linmod.hpp"
#include "popgraph/preprocess.hpp"
#include "popgraph/resample.hpp"
#include "popgraph/survstats.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace popgraph {

enum class ModelKind { linear, lpnl, phgn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

enum class SelectionMode { best_config, top_configs };

/// One point of the hyperparameter grid. Which fields matter depends on the
/// model kind; the rest ride along untouched.
struct HyperPoint {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int k_neighbors = 5;
  int hidden_dim = 32;
  int latent_dim = 16;
  int n_features = 10;
  int epochs = 300;
  double alpha = 0.1;
  double l1_ratio = 0.5;
  double dropout = 0.0;
  double soft_threshold_init = 1.0;
  double temperature = 1.0;
  double l2_lambda = 1e-4;

  nlohmann::ordered_json to_json() const;
  static HyperPoint from_json(const nlohmann::ordered_json& j);
};

struct RunConfig {
  std::string features_path;
  std::string endpoints_path;
  std::string test_features_path;
  std::string test_endpoints_path;

  // Endpoint to model. A "bin_<name>" endpoint asks for binarization of the
  // survival endpoint <name> at binarize_threshold_days.
  std::string endpoint;
  double binarize_threshold_days = 730.0;

  ModelKind model = ModelKind::linear;
  nlohmann::ordered_json grid;  // parameter name -> list of values
  SelectionMode selection_mode = SelectionMode::best_config;

  double cluster_threshold = 0.9;
  RankingConfig ranking;

  int k_folds = 5;
  int batch_size = 128;  // LPNL classification training batches
  int patience = 30;     // early-stopping patience on validation loss
  bool use_adasyn = true;
  int adasyn_k = 5;
  double adasyn_beta = 1.0;

  std::uint64_t seed = 0;
  std::string out_dir = ".";

  static RunConfig from_json(const nlohmann::ordered_json& j);
};

/// Expands the named value lists into the cartesian product, in a fixed
/// deterministic order. Unknown grid keys are an error.
std::vector<HyperPoint> expand_grid(const nlohmann::ordered_json& grid);

/// Working cohort for a modeling endpoint. The endpoint is either present as
/// an outcome, or spelled `bin_<name>` to request binarization of the
/// survival endpoint <name> (patients censored before the threshold drop out).
struct ResolvedTask {
  Cohort cohort;
  TaskKind kind = TaskKind::classification;
  std::string endpoint;
  std::string binarize_source;  // empty unless the endpoint was derived
  std::vector<std::string> excluded_ids;
};

ResolvedTask resolve_endpoint(const Cohort& cohort, const std::string& endpoint,
                              double binarize_threshold_days = 730.0);

/// Per-fold preprocessing state, fitted on the fold's training portion only
/// and replayed verbatim at inference.
struct FoldPreprocess {
  StandardizationParams standardizer;
  std::vector<std::string> representatives;
  FeatureRanking ranking;
  std::vector<std::string> selected;

  Mat transform(const Cohort& cohort) const;
  nlohmann::ordered_json to_json() const;
  static FoldPreprocess from_json(const nlohmann::ordered_json& j);
};

struct FoldModel {
  ModelKind kind = ModelKind::linear;
  TaskKind task = TaskKind::classification;
  int fold = 0;
  HyperPoint hyper;
  FoldPreprocess prep;
  LinearModelFit linear_fit;            // kind == linear
  NetworkConfig net_cfg;                // graph kinds
  nlohmann::ordered_json net_params;    // serialized tensors, graph kinds
  double train_score = 0.0;
  double val_score = 0.0;
  std::vector<double> val_risks;

  /// Probability of the positive class (classification) or log-risk
  /// (survival), one per patient.
  std::vector<double> predict(const Cohort& cohort) const;
};

struct ConfigScore {
  std::size_t config_index = 0;
  HyperPoint hyper;
  std::vector<double> fold_train_scores;
  std::vector<double> fold_val_scores;
  double mean_combined = 0.0;  // mean over folds of (train + val)/2
  bool disqualified = false;
  std::string reason;
};

struct SelectionResult {
  ModelKind model = ModelKind::linear;
  TaskKind task = TaskKind::classification;
  std::string endpoint;          // endpoint the models were trained on
  std::string binarize_source;   // survival endpoint binarized into `endpoint`, if any
  double binarize_threshold_days = 730.0;
  SelectionMode mode = SelectionMode::best_config;
  std::vector<ConfigScore> ranked;  // every grid point, best first
  std::vector<FoldModel> chosen;    // exactly five
  double risk_threshold = 0.5;      // stratification threshold for predict_test

  void save(const std::string& dir) const;
  static SelectionResult load(const std::string& dir);
};

/// Grid search over 5-fold CV. Per fold: standardizer, correlation
/// clustering and bootstrap ranking are fitted on the training portion only;
/// classification training data is ADASYN-oversampled. Configurations run on
/// independent sub-seeded streams and merge by index, so results do not
/// depend on scheduling. A configuration whose training diverges is
/// disqualified with a recorded reason.
SelectionResult run_cv_search(const Cohort& cohort, const RunConfig& cfg);

struct StratificationReport {
  bool skipped = false;
  std::string skip_reason;
  double threshold = 0.5;
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
  KMCurve km_low;
  KMCurve km_high;
  LogRankResult logrank;
};

struct TestReport {
  std::vector<std::vector<double>> per_model;  // one vector per chosen model
  std::vector<double> mean_prediction;
  MetricsReport metrics;
  std::optional<StratificationReport> stratification;

  nlohmann::ordered_json to_json() const;
};

/// Each chosen model transforms the test cohort with its own preprocessing
/// state and predicts; the mean prediction feeds the metrics and the
/// KM/log-rank stratification (threshold 0.5 for classification,
/// validation-derived for survival).
TestReport predict_test(const SelectionResult& selection, const Cohort& test);

/// KM curves and log-rank test for the low/high split of `predictions` at
/// `threshold`, against the observed time-to-event endpoint `surv_endpoint`.
/// An empty group marks the report skipped instead of erroring.
StratificationReport stratify_predictions(const std::vector<double>& predictions,
                                          const Cohort& cohort, const std::string& surv_endpoint,
                                          double threshold);

/// Elementwise mean across per-model prediction vectors.
std::vector<double> combo_ensemble(const std::vector<std::vector<double>>& predictions);

}  // namespace popgraph
