#include "popgraph/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace popgraph;
namespace fs = std::filesystem;

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[info] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_log_level >= 2) std::cerr << "[debug] " << msg << '\n';
}

nlohmann::ordered_json read_json_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    nlohmann::ordered_json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_or_throw(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig load_run_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) throw ConfigError("--config is required for this subcommand");
  nlohmann::ordered_json j = read_json_or_throw(opts.config_path);
  RunConfig cfg;
  try {
    cfg = RunConfig::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(opts.config_path) + ": " + e.what());
  }
  if (opts.seed.has_value()) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir.empty() ? "." : dir);
  return (fs::path(dir.empty() ? "." : dir) / name).string();
}

int run_synth(const CommonOpts& opts, std::size_t n, std::size_t p, const std::string& task,
              int signal_features, double signal_weight, double censor_rate) {
  SyntheticTask kind;
  if (task == "classification")
    kind = SyntheticTask::classification;
  else if (task == "survival")
    kind = SyntheticTask::survival;
  else
    throw ConfigError("--task must be classification or survival");

  Vec signal = Vec::Zero(static_cast<Eigen::Index>(p));
  for (int i = 0; i < signal_features && i < static_cast<int>(p); ++i) signal[i] = signal_weight;

  Cohort cohort = generate_synthetic_cohort(n, p, kind, signal, censor_rate,
                                            opts.seed.value_or(0));
  const std::string fpath = out_path(opts.out_dir, "features.csv");
  const std::string epath = out_path(opts.out_dir, "endpoints.csv");
  save_cohort(cohort, fpath, epath);
  log_info("wrote " + fpath + " and " + epath + " (n=" + std::to_string(n) +
           ", p=" + std::to_string(p) + ")");
  return 0;
}

int run_preprocess(const CommonOpts& opts) {
  RunConfig cfg = load_run_config(opts);
  Cohort raw = load_cohort(cfg.features_path, cfg.endpoints_path);
  ResolvedTask task = resolve_endpoint(raw, cfg.endpoint, cfg.binarize_threshold_days);
  log_info("cohort n=" + std::to_string(task.cohort.size()) +
           ", p=" + std::to_string(task.cohort.n_features()) +
           (task.excluded_ids.empty()
                ? ""
                : ", excluded " + std::to_string(task.excluded_ids.size()) + " by binarization"));

  StandardizationParams std_params = fit_standardizer(task.cohort);
  Cohort standardized = apply_standardizer(std_params, task.cohort);
  Mat corr = spearman_matrix(standardized);
  ClusterAssignment clusters =
      cluster_features(corr, standardized.feature_names, cfg.cluster_threshold);
  Cohort reduced = standardized.select_features(clusters.representatives);
  FeatureRanking ranking =
      bootstrap_rank_features(reduced, task.endpoint, task.kind, cfg.ranking, cfg.seed);

  nlohmann::ordered_json j;
  j["endpoint"] = task.endpoint;
  j["task"] = task.kind == TaskKind::classification ? "classification" : "survival";
  j["excluded_ids"] = task.excluded_ids;
  j["standardizer"] = std_params.to_json();
  j["clusters"] = clusters.clusters;
  j["representatives"] = clusters.representatives;
  j["ranking"] = ranking.to_json();
  const std::string path = out_path(cfg.out_dir, "preprocess.json");
  write_json_or_throw(j, path);
  log_info("wrote " + path);
  return 0;
}

int run_train(const CommonOpts& opts) {
  RunConfig cfg = load_run_config(opts);
  Cohort cohort = load_cohort(cfg.features_path, cfg.endpoints_path);
  log_info("cohort n=" + std::to_string(cohort.size()) +
           ", p=" + std::to_string(cohort.n_features()) + ", model=" + to_string(cfg.model) +
           ", grid=" + std::to_string(expand_grid(cfg.grid).size()) + " configurations");

  SelectionResult selection = run_cv_search(cohort, cfg);
  selection.save(cfg.out_dir);

  std::ofstream run_log(out_path(cfg.out_dir, "run.log"));
  run_log << "endpoint=" << selection.endpoint << " model=" << to_string(selection.model)
          << " seed=" << cfg.seed << "\n";
  for (const auto& cs : selection.ranked) {
    run_log << "config " << cs.config_index << ": mean_combined=" << cs.mean_combined;
    if (cs.disqualified) run_log << " DISQUALIFIED (" << cs.reason << ")";
    run_log << "\n";
  }
  log_info("best configuration mean_combined=" +
           std::to_string(selection.ranked.front().mean_combined));
  log_info("wrote " + out_path(cfg.out_dir, "selection.json"));
  return 0;
}

void write_km_files(const StratificationReport& st, const std::string& dir) {
  if (st.skipped) {
    log_info("stratification skipped: " + st.skip_reason);
    return;
  }
  const std::string low = out_path(dir, "km_low.csv");
  const std::string high = out_path(dir, "km_high.csv");
  write_km_csv(st.km_low, low);
  write_km_csv(st.km_high, high);
  log_info("wrote " + low + " and " + high);
}

int run_evaluate(const CommonOpts& opts, std::vector<std::string> checkpoints,
                 std::string features_path, std::string endpoints_path) {
  RunConfig cfg = load_run_config(opts);
  if (checkpoints.empty()) checkpoints.push_back(cfg.out_dir);
  if (features_path.empty()) features_path = cfg.test_features_path;
  if (endpoints_path.empty()) endpoints_path = cfg.test_endpoints_path;
  if (features_path.empty() || endpoints_path.empty())
    throw ConfigError("test cohort paths required (data.test_features/test_endpoints or flags)");

  Cohort test = load_cohort(features_path, endpoints_path);
  log_info("test cohort n=" + std::to_string(test.size()));

  std::vector<SelectionResult> selections;
  for (const auto& dir : checkpoints) selections.push_back(SelectionResult::load(dir));

  std::vector<TestReport> reports;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    reports.push_back(predict_test(selections[i], test));
    log_debug("checkpoint " + checkpoints[i] + " evaluated");
  }

  nlohmann::ordered_json j;
  std::optional<StratificationReport> combo_strat;
  const StratificationReport* km_source = nullptr;
  if (reports.size() == 1) {
    j = reports.front().to_json();
    if (reports.front().stratification.has_value()) km_source = &*reports.front().stratification;
  } else {
    // Combo: the member models' mean predictions averaged once more, with
    // metrics and stratification recomputed on the combined vector.
    for (const auto& sel : selections)
      if (sel.endpoint != selections.front().endpoint || sel.task != selections.front().task)
        throw DataError("combo checkpoints must share endpoint and task");

    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    std::vector<std::vector<double>> member_means;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      nlohmann::ordered_json m;
      m["checkpoint"] = checkpoints[i];
      m["model"] = to_string(selections[i].model);
      m["report"] = reports[i].to_json();
      members.push_back(std::move(m));
      member_means.push_back(reports[i].mean_prediction);
    }
    j["models"] = std::move(members);

    const SelectionResult& first = selections.front();
    ResolvedTask task = resolve_endpoint(test, first.endpoint, first.binarize_threshold_days);
    std::vector<double> combo = combo_ensemble(member_means);
    nlohmann::ordered_json cj;
    cj["mean_prediction"] = combo;
    MetricsReport metrics;
    if (first.task == TaskKind::classification) {
      metrics = classification_metrics(combo, task.cohort.binary_labels(first.endpoint));
    } else {
      metrics.c_index = concordance_index(combo, task.cohort.survival_times(first.endpoint),
                                          task.cohort.survival_events(first.endpoint));
    }
    cj["metrics"] = metrics.to_json();

    std::string surv_endpoint = first.task == TaskKind::survival ? first.endpoint
                                                                 : first.binarize_source;
    if (!surv_endpoint.empty()) {
      double threshold = 0.5;
      if (first.task == TaskKind::survival) {
        threshold = 0.0;
        for (const auto& sel : selections) threshold += sel.risk_threshold;
        threshold /= static_cast<double>(selections.size());
      }
      combo_strat = stratify_predictions(combo, task.cohort, surv_endpoint, threshold);
      TestReport strat_holder;
      strat_holder.stratification = *combo_strat;
      cj["stratification"] = strat_holder.to_json().at("stratification");
      km_source = &*combo_strat;
    } else {
      cj["stratification"] = nullptr;
    }
    j["combo"] = std::move(cj);
  }

  const std::string report_path = out_path(opts.out_dir.empty() ? "." : opts.out_dir,
                                           "test_report.json");
  write_json_or_throw(j, report_path);
  log_info("wrote " + report_path);
  if (km_source != nullptr) write_km_files(*km_source, opts.out_dir.empty() ? "." : opts.out_dir);
  return 0;
}

KMCurve km_from_json(const nlohmann::ordered_json& j) {
  KMCurve curve;
  curve.event_times = j.at("event_times").get<std::vector<double>>();
  curve.survival_prob = j.at("survival_prob").get<std::vector<double>>();
  curve.at_risk = j.at("at_risk").get<std::vector<int>>();
  curve.censor_times = j.at("censor_times").get<std::vector<double>>();
  return curve;
}

int run_km_export(const CommonOpts& opts, const std::string& report_path) {
  if (report_path.empty()) throw ConfigError("--report is required");
  if (!fs::exists(report_path)) throw DataError("missing report file " + report_path);
  nlohmann::ordered_json j = read_json_or_throw(report_path);

  const nlohmann::ordered_json* strat = nullptr;
  if (j.contains("stratification") && !j.at("stratification").is_null())
    strat = &j.at("stratification");
  else if (j.contains("combo") && j.at("combo").contains("stratification") &&
           !j.at("combo").at("stratification").is_null())
    strat = &j.at("combo").at("stratification");
  if (strat == nullptr) throw DataError(report_path + " carries no stratification section");
  if (strat->at("skipped").get<bool>())
    throw DataError(report_path + " stratification was skipped: " +
                    strat->at("skip_reason").get<std::string>());

  try {
    const std::string low = out_path(opts.out_dir, "km_low.csv");
    const std::string high = out_path(opts.out_dir, "km_high.csv");
    write_km_csv(km_from_json(strat->at("km_low")), low);
    write_km_csv(km_from_json(strat->at("km_high")), high);
    log_info("wrote " + low + " and " + high);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(report_path + ": " + e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Population-graph outcome modeling for tabular cohorts"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string log_level = "info";
  std::uint64_t seed_value = 0;
  app.add_option("--config", opts.config_path, "JSON run configuration")->expected(1);
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides the config)");
  app.add_option("--out", opts.out_dir, "Output directory (overrides the config)");
  app.add_option("--log-level", log_level, "quiet, info or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));
  app.fallthrough();

  std::size_t synth_n = 500, synth_p = 10;
  std::string synth_task = "classification";
  int synth_signal_features = 3;
  double synth_signal_weight = 1.0, synth_censor_rate = 0.3;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort as CSV files");
  synth->add_option("--n", synth_n, "Number of patients");
  synth->add_option("--p", synth_p, "Number of features");
  synth->add_option("--task", synth_task, "classification or survival");
  synth->add_option("--signal-features", synth_signal_features,
                    "How many leading features carry signal");
  synth->add_option("--signal-weight", synth_signal_weight, "Coefficient of signal features");
  synth->add_option("--censor-rate", synth_censor_rate, "Expected censoring fraction (survival)");

  auto* preprocess =
      app.add_subcommand("preprocess", "Fit standardizer, clustering and feature ranking");
  auto* train = app.add_subcommand("train", "Cross-validated grid search; writes a checkpoint");

  std::vector<std::string> eval_checkpoints;
  std::string eval_features, eval_endpoints;
  auto* evaluate = app.add_subcommand("evaluate", "Predict on the test cohort from checkpoints");
  evaluate->add_option("--checkpoint", eval_checkpoints,
                       "Checkpoint directory (repeat for a combo ensemble)");
  evaluate->add_option("--features", eval_features, "Test feature CSV (overrides the config)");
  evaluate->add_option("--endpoints", eval_endpoints, "Test endpoint CSV (overrides the config)");

  std::string km_report;
  auto* km_export = app.add_subcommand("km-export", "Write KM curves from a test report as CSV");
  km_export->add_option("--report", km_report, "test_report.json produced by evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  g_log_level = log_level == "quiet" ? 0 : log_level == "debug" ? 2 : 1;
  if (seed_opt->count() > 0) opts.seed = seed_value;

  try {
    if (*synth)
      return run_synth(opts, synth_n, synth_p, synth_task, synth_signal_features,
                       synth_signal_weight, synth_censor_rate);
    if (*preprocess) return run_preprocess(opts);
    if (*train) return run_train(opts);
    if (*evaluate) return run_evaluate(opts, eval_checkpoints, eval_features, eval_endpoints);
    if (*km_export) return run_km_export(opts, km_report);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
