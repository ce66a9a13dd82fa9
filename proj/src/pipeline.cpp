#include "popgraph/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace popgraph {

namespace {

nlohmann::ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return j;
}

void write_json_file(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::lpnl: return "lpnl";
    case ModelKind::phgn: return "phgn";
  }
  throw std::logic_error("unreachable");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "linear") return ModelKind::linear;
  if (name == "lpnl") return ModelKind::lpnl;
  if (name == "phgn") return ModelKind::phgn;
  throw ConfigError("unknown model '" + name + "' (expected linear, lpnl or phgn)");
}

nlohmann::ordered_json HyperPoint::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["k_neighbors"] = k_neighbors;
  j["hidden_dim"] = hidden_dim;
  j["latent_dim"] = latent_dim;
  j["n_features"] = n_features;
  j["epochs"] = epochs;
  j["alpha"] = alpha;
  j["l1_ratio"] = l1_ratio;
  j["dropout"] = dropout;
  j["soft_threshold_init"] = soft_threshold_init;
  j["temperature"] = temperature;
  j["l2_lambda"] = l2_lambda;
  return j;
}

HyperPoint HyperPoint::from_json(const nlohmann::ordered_json& j) {
  HyperPoint hp;
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.weight_decay = j.at("weight_decay").get<double>();
  hp.k_neighbors = j.at("k_neighbors").get<int>();
  hp.hidden_dim = j.at("hidden_dim").get<int>();
  hp.latent_dim = j.at("latent_dim").get<int>();
  hp.n_features = j.at("n_features").get<int>();
  hp.epochs = j.at("epochs").get<int>();
  hp.alpha = j.at("alpha").get<double>();
  hp.l1_ratio = j.at("l1_ratio").get<double>();
  hp.dropout = j.at("dropout").get<double>();
  hp.soft_threshold_init = j.at("soft_threshold_init").get<double>();
  hp.temperature = j.at("temperature").get<double>();
  hp.l2_lambda = j.at("l2_lambda").get<double>();
  return hp;
}

RunConfig RunConfig::from_json(const nlohmann::ordered_json& j) {
  RunConfig cfg;
  const auto& data = j.at("data");
  cfg.features_path = data.at("features").get<std::string>();
  cfg.endpoints_path = data.at("endpoints").get<std::string>();
  cfg.test_features_path = data.value("test_features", std::string());
  cfg.test_endpoints_path = data.value("test_endpoints", std::string());

  const auto& task = j.at("task");
  cfg.endpoint = task.at("endpoint").get<std::string>();
  cfg.binarize_threshold_days = task.value("binarize_threshold_days", 730.0);

  cfg.model = model_kind_from_string(j.at("model").get<std::string>());
  cfg.grid = j.at("grid");

  if (j.contains("selection")) {
    std::string mode = j.at("selection").value("mode", "best_config");
    if (mode == "best_config")
      cfg.selection_mode = SelectionMode::best_config;
    else if (mode == "top_configs")
      cfg.selection_mode = SelectionMode::top_configs;
    else
      throw ConfigError("selection.mode must be best_config or top_configs");
  }

  if (j.contains("preprocess")) {
    const auto& pp = j.at("preprocess");
    cfg.cluster_threshold = pp.value("cluster_threshold", 0.9);
    cfg.ranking.n_bootstrap = pp.value("n_bootstrap", 100);
    cfg.ranking.mi_neighbors = pp.value("mi_neighbors", 3);
    cfg.ranking.cox_penalty.alpha = pp.value("cox_alpha", 0.1);
    cfg.ranking.cox_penalty.l1_ratio = pp.value("cox_l1_ratio", 0.5);
  }

  if (j.contains("train")) {
    const auto& tr = j.at("train");
    cfg.k_folds = tr.value("k_folds", 5);
    cfg.batch_size = tr.value("batch_size", 128);
    cfg.patience = tr.value("patience", 30);
    cfg.use_adasyn = tr.value("adasyn", true);
    cfg.adasyn_k = tr.value("adasyn_k", 5);
    cfg.adasyn_beta = tr.value("adasyn_beta", 1.0);
  }

  if (j.contains("output")) cfg.out_dir = j.at("output").value("dir", ".");
  cfg.seed = j.value("seed", std::uint64_t{0});
  return cfg;
}

std::vector<HyperPoint> expand_grid(const nlohmann::ordered_json& grid) {
  if (!grid.is_object() || grid.empty()) throw ConfigError("grid must be a non-empty object");

  using Setter = std::function<void(HyperPoint&, double)>;
  static const std::vector<std::pair<std::string, Setter>> known = {
      {"learning_rate", [](HyperPoint& h, double v) { h.learning_rate = v; }},
      {"weight_decay", [](HyperPoint& h, double v) { h.weight_decay = v; }},
      {"k_neighbors", [](HyperPoint& h, double v) { h.k_neighbors = static_cast<int>(v); }},
      {"hidden_dim", [](HyperPoint& h, double v) { h.hidden_dim = static_cast<int>(v); }},
      {"latent_dim", [](HyperPoint& h, double v) { h.latent_dim = static_cast<int>(v); }},
      {"n_features", [](HyperPoint& h, double v) { h.n_features = static_cast<int>(v); }},
      {"epochs", [](HyperPoint& h, double v) { h.epochs = static_cast<int>(v); }},
      {"alpha", [](HyperPoint& h, double v) { h.alpha = v; }},
      {"l1_ratio", [](HyperPoint& h, double v) { h.l1_ratio = v; }},
      {"dropout", [](HyperPoint& h, double v) { h.dropout = v; }},
      {"soft_threshold_init", [](HyperPoint& h, double v) { h.soft_threshold_init = v; }},
      {"temperature", [](HyperPoint& h, double v) { h.temperature = v; }},
      {"l2_lambda", [](HyperPoint& h, double v) { h.l2_lambda = v; }},
  };

  std::vector<std::pair<const Setter*, std::vector<double>>> axes;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    auto match = std::find_if(known.begin(), known.end(),
                              [&](const auto& kv) { return kv.first == it.key(); });
    if (match == known.end()) throw ConfigError("unknown grid parameter '" + it.key() + "'");
    if (!it.value().is_array() || it.value().empty())
      throw ConfigError("grid parameter '" + it.key() + "' must be a non-empty list");
    axes.emplace_back(&match->second, it.value().get<std::vector<double>>());
  }

  std::vector<HyperPoint> points{HyperPoint{}};
  for (const auto& [setter, values] : axes) {
    std::vector<HyperPoint> next;
    next.reserve(points.size() * values.size());
    for (const auto& base : points) {
      for (double v : values) {
        HyperPoint hp = base;
        (*setter)(hp, v);
        next.push_back(hp);
      }
    }
    points = std::move(next);
  }
  return points;
}

Mat FoldPreprocess::transform(const Cohort& cohort) const {
  return apply_standardizer(standardizer, cohort).select_features(selected).feature_matrix();
}

nlohmann::ordered_json FoldPreprocess::to_json() const {
  nlohmann::ordered_json j;
  j["standardizer"] = standardizer.to_json();
  j["representatives"] = representatives;
  j["ranking"] = ranking.to_json();
  j["selected"] = selected;
  return j;
}

FoldPreprocess FoldPreprocess::from_json(const nlohmann::ordered_json& j) {
  FoldPreprocess prep;
  prep.standardizer = StandardizationParams::from_json(j.at("standardizer"));
  prep.representatives = j.at("representatives").get<std::vector<std::string>>();
  prep.ranking = FeatureRanking::from_json(j.at("ranking"));
  prep.selected = j.at("selected").get<std::vector<std::string>>();
  return prep;
}

namespace {

struct TaskSpec {
  std::string endpoint;         // endpoint models consume
  TaskKind kind = TaskKind::classification;
  std::string binarize_source;  // non-empty when endpoint is derived
  double threshold_days = 730.0;
};

TaskSpec resolve_task(const Cohort& cohort, const std::string& endpoint, double threshold_days) {
  if (cohort.size() == 0) throw DataError("empty cohort");
  const auto& outcomes = cohort.patients.front().outcomes;
  TaskSpec spec;
  spec.endpoint = endpoint;
  spec.threshold_days = threshold_days;
  auto it = outcomes.find(endpoint);
  if (it != outcomes.end()) {
    spec.kind = std::holds_alternative<BinaryOutcome>(it->second) ? TaskKind::classification
                                                                  : TaskKind::survival;
    return spec;
  }
  if (endpoint.rfind("bin_", 0) == 0) {
    std::string source = endpoint.substr(4);
    auto sit = outcomes.find(source);
    if (sit != outcomes.end() && std::holds_alternative<SurvivalOutcome>(sit->second)) {
      spec.kind = TaskKind::classification;
      spec.binarize_source = source;
      return spec;
    }
  }
  throw DataError("endpoint '" + endpoint + "' not found in cohort");
}

Cohort task_cohort(const Cohort& cohort, const TaskSpec& spec) {
  if (spec.binarize_source.empty()) return cohort;
  return binarize_survival(cohort, spec.binarize_source, spec.threshold_days).cohort;
}

}  // namespace

ResolvedTask resolve_endpoint(const Cohort& cohort, const std::string& endpoint,
                              double binarize_threshold_days) {
  TaskSpec spec = resolve_task(cohort, endpoint, binarize_threshold_days);
  ResolvedTask out;
  out.kind = spec.kind;
  out.endpoint = spec.endpoint;
  out.binarize_source = spec.binarize_source;
  if (spec.binarize_source.empty()) {
    out.cohort = cohort;
  } else {
    BinarizeResult bin = binarize_survival(cohort, spec.binarize_source, spec.threshold_days);
    out.cohort = std::move(bin.cohort);
    out.excluded_ids = std::move(bin.excluded_ids);
  }
  return out;
}

namespace {

double score_predictions(TaskKind task, const std::vector<double>& preds, const Cohort& cohort,
                         const std::string& endpoint) {
  if (task == TaskKind::classification) return auc_score(preds, cohort.binary_labels(endpoint));
  return concordance_index(preds, cohort.survival_times(endpoint), cohort.survival_events(endpoint));
}

NetworkConfig make_network_config(const HyperPoint& hp, TaskKind task) {
  NetworkConfig nc;
  nc.latent_dim = hp.latent_dim;
  nc.hidden_dims = {hp.hidden_dim, hp.hidden_dim};
  nc.k_neighbors = hp.k_neighbors;
  nc.soft_threshold_init = hp.soft_threshold_init;
  nc.temperature = hp.temperature;
  nc.head = task == TaskKind::classification ? HeadKind::classification : HeadKind::survival;
  nc.dropout_rate = hp.dropout;
  nc.validate();
  return nc;
}

nlohmann::ordered_json network_config_to_json(const NetworkConfig& nc) {
  nlohmann::ordered_json j;
  j["latent_dim"] = nc.latent_dim;
  j["hidden_dims"] = nc.hidden_dims;
  j["k_neighbors"] = nc.k_neighbors;
  j["soft_threshold_init"] = nc.soft_threshold_init;
  j["temperature"] = nc.temperature;
  j["head"] = nc.head == HeadKind::classification ? "classification" : "survival";
  j["dropout_rate"] = nc.dropout_rate;
  return j;
}

NetworkConfig network_config_from_json(const nlohmann::ordered_json& j) {
  NetworkConfig nc;
  nc.latent_dim = j.at("latent_dim").get<int>();
  nc.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  nc.k_neighbors = j.at("k_neighbors").get<int>();
  nc.soft_threshold_init = j.at("soft_threshold_init").get<double>();
  nc.temperature = j.at("temperature").get<double>();
  nc.head = j.at("head").get<std::string>() == "survival" ? HeadKind::survival
                                                          : HeadKind::classification;
  nc.dropout_rate = j.at("dropout_rate").get<double>();
  return nc;
}

struct TrainInputs {
  Mat x;  // training matrix (ADASYN-augmented for classification)
  std::vector<int> labels;
  std::vector<double> times;
  std::vector<bool> events;
  Mat x_val;
  std::vector<int> val_labels;
  std::vector<double> val_times;
  std::vector<bool> val_events;
};

template <typename ModelT>
nlohmann::ordered_json train_graph_model(ModelT& model, const TrainInputs& in, TaskKind task,
                                         const HyperPoint& hp, const RunConfig& cfg,
                                         bool batch_training, std::uint64_t seed) {
  auto params = model.parameters();
  AdamState state;
  state.learning_rate = hp.learning_rate;
  state.weight_decay = hp.weight_decay;
  auto rng = make_rng(sub_seed(seed, 0xD0));

  auto data_loss = [&](const Mat& x, const std::vector<int>& y, const std::vector<double>& t,
                       const std::vector<bool>& e, bool training) {
    Tensor scores = model.forward(x, training, training ? &rng : nullptr);
    if (task == TaskKind::classification) return bce_loss(scores, y);
    return cox_partial_loss(scores, t, e, training ? hp.l2_lambda : 0.0,
                            training ? params : std::vector<Tensor>{});
  };

  const std::size_t n = static_cast<std::size_t>(in.x.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Mat> snapshot;
  int since_best = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    if (batch_training && n > static_cast<std::size_t>(cfg.batch_size)) {
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
        std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        Mat xb(static_cast<Eigen::Index>(stop - start), in.x.cols());
        std::vector<int> yb(stop - start);
        for (std::size_t r = start; r < stop; ++r) {
          xb.row(static_cast<Eigen::Index>(r - start)) = in.x.row(static_cast<Eigen::Index>(perm[r]));
          yb[r - start] = in.labels[perm[r]];
        }
        Tensor loss = [&] {
          Tensor scores = model.forward(xb, true, &rng);
          return bce_loss(scores, yb);
        }();
        backward(loss);
        adam_step(params, state);
      }
    } else {
      Tensor loss = data_loss(in.x, in.labels, in.times, in.events, true);
      backward(loss);
      adam_step(params, state);
    }

    double val = data_loss(in.x_val, in.val_labels, in.val_times, in.val_events, false).item();
    if (val < best_val) {
      best_val = val;
      snapshot.clear();
      for (auto& p : params) snapshot.push_back(p.value());
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (!snapshot.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value_mut() = snapshot[i];
  return params_to_json(model.named_parameters());
}

struct FoldData {
  Cohort train;
  Cohort val;
  FoldPreprocess base;  // selected filled per configuration
};

FoldModel train_fold(const FoldData& fd, const HyperPoint& hp, const TaskSpec& spec,
                     const RunConfig& cfg, int fold, std::uint64_t seed) {
  FoldModel fm;
  fm.kind = cfg.model;
  fm.task = spec.kind;
  fm.fold = fold;
  fm.hyper = hp;
  fm.prep = fd.base;
  fm.prep.selected = fd.base.ranking.top(static_cast<std::size_t>(std::max(1, hp.n_features)));
  if (fm.prep.selected.empty()) throw TrainError("no ranked features available");

  TrainInputs in;
  in.x = fm.prep.transform(fd.train);
  in.x_val = fm.prep.transform(fd.val);
  if (spec.kind == TaskKind::classification) {
    in.labels = fd.train.binary_labels(spec.endpoint);
    in.val_labels = fd.val.binary_labels(spec.endpoint);
    if (cfg.use_adasyn) {
      try {
        AdasynResult aug = adasyn_oversample(in.x, in.labels, cfg.adasyn_k, cfg.adasyn_beta,
                                             sub_seed(seed, 0xADA));
        in.x = std::move(aug.x);
        in.labels = std::move(aug.y);
      } catch (const DataError&) {
        // Minority class smaller than the neighborhood: train on the raw fold.
      }
    }
  } else {
    in.times = fd.train.survival_times(spec.endpoint);
    in.events = fd.train.survival_events(spec.endpoint);
    in.val_times = fd.val.survival_times(spec.endpoint);
    in.val_events = fd.val.survival_events(spec.endpoint);
  }

  if (cfg.model == ModelKind::linear) {
    ElasticNetConfig en;
    en.alpha = hp.alpha;
    en.l1_ratio = hp.l1_ratio;
    if (spec.kind == TaskKind::classification)
      fm.linear_fit = fit_logistic_elasticnet(in.x, in.labels, en);
    else
      fm.linear_fit = fit_cox_elasticnet(in.x, in.times, in.events, en);
  } else {
    fm.net_cfg = make_network_config(hp, spec.kind);
    const int n_in = static_cast<int>(fm.prep.selected.size());
    const bool batched = cfg.model == ModelKind::lpnl && spec.kind == TaskKind::classification;
    if (cfg.model == ModelKind::lpnl) {
      LPNLModel model(n_in, fm.net_cfg, sub_seed(seed, 0x111));
      fm.net_params = train_graph_model(model, in, spec.kind, hp, cfg, batched, seed);
    } else {
      PHGNModel model(n_in, fm.net_cfg, sub_seed(seed, 0x111));
      fm.net_params = train_graph_model(model, in, spec.kind, hp, cfg, false, seed);
    }
  }

  // Scores are computed on the real patients, never on synthetic rows.
  auto train_preds = fm.predict(fd.train);
  auto val_preds = fm.predict(fd.val);
  fm.train_score = score_predictions(spec.kind, train_preds, fd.train, spec.endpoint);
  fm.val_score = score_predictions(spec.kind, val_preds, fd.val, spec.endpoint);
  fm.val_risks = val_preds;
  return fm;
}

}  // namespace

std::vector<double> FoldModel::predict(const Cohort& cohort) const {
  Mat x = prep.transform(cohort);
  Vec out;
  if (kind == ModelKind::linear) {
    out = task == TaskKind::classification ? predict_logistic(linear_fit, x)
                                           : predict_cox_risk(linear_fit, x);
  } else {
    const int n_in = static_cast<int>(prep.selected.size());
    Tensor scores = [&] {
      if (kind == ModelKind::lpnl) {
        LPNLModel model(n_in, net_cfg, 0);
        auto named = model.named_parameters();
        params_from_json(net_params, named);
        return model.forward(x, false, nullptr);
      }
      PHGNModel model(n_in, net_cfg, 0);
      auto named = model.named_parameters();
      params_from_json(net_params, named);
      return model.forward(x, false, nullptr);
    }();
    out = scores.value().col(0);
    if (task == TaskKind::classification)
      for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
  }
  return std::vector<double>(out.data(), out.data() + out.size());
}

SelectionResult run_cv_search(const Cohort& raw_cohort, const RunConfig& cfg) {
  TaskSpec spec = resolve_task(raw_cohort, cfg.endpoint, cfg.binarize_threshold_days);
  Cohort cohort = task_cohort(raw_cohort, spec);
  cohort.validate();

  auto points = expand_grid(cfg.grid);
  if (cfg.selection_mode == SelectionMode::top_configs && points.size() < 5)
    throw ConfigError("top_configs selection needs at least 5 grid configurations");

  FoldSplit split = stratified_kfold(cohort, spec.endpoint, cfg.k_folds, sub_seed(cfg.seed, 1));

  // Configuration-independent per-fold preprocessing, fitted on the training
  // portion only.
  std::vector<FoldData> folds(static_cast<std::size_t>(cfg.k_folds));
  parallel_for(folds.size(), [&](std::size_t f) {
    FoldData& fd = folds[f];
    fd.train = cohort.subset(split.train_indices(static_cast<int>(f)));
    fd.val = cohort.subset(split.validation_indices(static_cast<int>(f)));
    fd.base.standardizer = fit_standardizer(fd.train);
    Cohort strain = apply_standardizer(fd.base.standardizer, fd.train);
    Mat corr = spearman_matrix(strain);
    auto clusters = cluster_features(corr, strain.feature_names, cfg.cluster_threshold);
    fd.base.representatives = clusters.representatives;
    Cohort reduced = strain.select_features(fd.base.representatives);
    fd.base.ranking =
        bootstrap_rank_features(reduced, spec.endpoint, spec.kind, cfg.ranking, sub_seed(cfg.seed, 2, f));
  });

  std::vector<ConfigScore> scores(points.size());
  std::vector<std::vector<FoldModel>> models(points.size());
  parallel_for(points.size(), [&](std::size_t ci) {
    ConfigScore cs;
    cs.config_index = ci;
    cs.hyper = points[ci];
    std::vector<FoldModel> fms;
    try {
      double combined = 0.0;
      for (int f = 0; f < cfg.k_folds; ++f) {
        FoldModel fm = train_fold(folds[static_cast<std::size_t>(f)], points[ci], spec, cfg, f,
                                  sub_seed(cfg.seed, 0x100 + ci, static_cast<std::uint64_t>(f)));
        cs.fold_train_scores.push_back(fm.train_score);
        cs.fold_val_scores.push_back(fm.val_score);
        combined += 0.5 * (fm.train_score + fm.val_score);
        fms.push_back(std::move(fm));
      }
      cs.mean_combined = combined / static_cast<double>(cfg.k_folds);
    } catch (const TrainError& e) {
      cs.disqualified = true;
      cs.reason = e.what();
      fms.clear();
    }
    scores[ci] = std::move(cs);
    models[ci] = std::move(fms);
  });

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    if (scores[a].disqualified != scores[b].disqualified) return scores[b].disqualified;
    if (scores[a].mean_combined != scores[b].mean_combined)
      return scores[a].mean_combined > scores[b].mean_combined;
    return a < b;
  });

  SelectionResult result;
  result.model = cfg.model;
  result.task = spec.kind;
  result.endpoint = spec.endpoint;
  result.binarize_source = spec.binarize_source;
  result.binarize_threshold_days = spec.threshold_days;
  result.mode = cfg.selection_mode;
  for (std::size_t i : order) result.ranked.push_back(scores[i]);

  if (result.ranked.empty() || result.ranked.front().disqualified)
    throw TrainError("run_cv_search: every configuration was disqualified");

  if (cfg.selection_mode == SelectionMode::best_config) {
    result.chosen = models[result.ranked.front().config_index];
  } else {
    // One representative per top configuration: its best-validation fold.
    for (const auto& cs : result.ranked) {
      if (result.chosen.size() == 5) break;
      if (cs.disqualified) break;
      const auto& fms = models[cs.config_index];
      std::size_t best = 0;
      for (std::size_t f = 1; f < fms.size(); ++f)
        if (fms[f].val_score > fms[best].val_score) best = f;
      result.chosen.push_back(fms[best]);
    }
    if (result.chosen.size() < 5)
      throw TrainError("run_cv_search: fewer than 5 qualified configurations for top_configs");
  }

  if (spec.kind == TaskKind::survival) {
    std::vector<std::vector<double>> fold_risks;
    for (const auto& fm : result.chosen) fold_risks.push_back(fm.val_risks);
    result.risk_threshold = validation_risk_threshold(fold_risks);
  } else {
    result.risk_threshold = 0.5;
  }
  return result;
}

void SelectionResult::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["model"] = to_string(model);
  j["task"] = task == TaskKind::classification ? "classification" : "survival";
  j["endpoint"] = endpoint;
  j["binarize_source"] = binarize_source;
  j["binarize_threshold_days"] = binarize_threshold_days;
  j["mode"] = mode == SelectionMode::best_config ? "best_config" : "top_configs";
  j["risk_threshold"] = risk_threshold;

  nlohmann::ordered_json ranked_j = nlohmann::ordered_json::array();
  for (const auto& cs : ranked) {
    nlohmann::ordered_json c;
    c["config_index"] = cs.config_index;
    c["hyper"] = cs.hyper.to_json();
    c["fold_train_scores"] = cs.fold_train_scores;
    c["fold_val_scores"] = cs.fold_val_scores;
    c["mean_combined"] = cs.mean_combined;
    c["disqualified"] = cs.disqualified;
    c["reason"] = cs.reason;
    ranked_j.push_back(std::move(c));
  }
  j["ranked"] = std::move(ranked_j);

  nlohmann::ordered_json chosen_j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& fm = chosen[i];
    nlohmann::ordered_json c;
    c["kind"] = to_string(fm.kind);
    c["fold"] = fm.fold;
    c["hyper"] = fm.hyper.to_json();
    c["preprocess"] = fm.prep.to_json();
    c["train_score"] = fm.train_score;
    c["val_score"] = fm.val_score;
    c["val_risks"] = fm.val_risks;
    std::string params_file = "params_fold" + std::to_string(i) + ".json";
    c["params_file"] = params_file;
    nlohmann::ordered_json pf;
    if (fm.kind == ModelKind::linear) {
      pf["linear"] = fit_to_json(fm.linear_fit, fm.prep.selected);
    } else {
      pf["network_config"] = network_config_to_json(fm.net_cfg);
      pf["tensors"] = fm.net_params;
    }
    write_json_file(pf, (std::filesystem::path(dir) / params_file).string());
    chosen_j.push_back(std::move(c));
  }
  j["chosen"] = std::move(chosen_j);
  write_json_file(j, (std::filesystem::path(dir) / "selection.json").string());
}

SelectionResult SelectionResult::load(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "selection.json").string();
  if (!std::filesystem::exists(path)) throw DataError("missing checkpoint file " + path);
  nlohmann::ordered_json j = read_json_file(path);

  SelectionResult result;
  result.model = model_kind_from_string(j.at("model").get<std::string>());
  result.task = j.at("task").get<std::string>() == "survival" ? TaskKind::survival
                                                              : TaskKind::classification;
  result.endpoint = j.at("endpoint").get<std::string>();
  result.binarize_source = j.at("binarize_source").get<std::string>();
  result.binarize_threshold_days = j.at("binarize_threshold_days").get<double>();
  result.mode = j.at("mode").get<std::string>() == "top_configs" ? SelectionMode::top_configs
                                                                 : SelectionMode::best_config;
  result.risk_threshold = j.at("risk_threshold").get<double>();

  for (const auto& c : j.at("ranked")) {
    ConfigScore cs;
    cs.config_index = c.at("config_index").get<std::size_t>();
    cs.hyper = HyperPoint::from_json(c.at("hyper"));
    cs.fold_train_scores = c.at("fold_train_scores").get<std::vector<double>>();
    cs.fold_val_scores = c.at("fold_val_scores").get<std::vector<double>>();
    cs.mean_combined = c.at("mean_combined").get<double>();
    cs.disqualified = c.at("disqualified").get<bool>();
    cs.reason = c.at("reason").get<std::string>();
    result.ranked.push_back(std::move(cs));
  }

  for (const auto& c : j.at("chosen")) {
    FoldModel fm;
    fm.kind = model_kind_from_string(c.at("kind").get<std::string>());
    fm.task = result.task;
    fm.fold = c.at("fold").get<int>();
    fm.hyper = HyperPoint::from_json(c.at("hyper"));
    fm.prep = FoldPreprocess::from_json(c.at("preprocess"));
    fm.train_score = c.at("train_score").get<double>();
    fm.val_score = c.at("val_score").get<double>();
    fm.val_risks = c.at("val_risks").get<std::vector<double>>();
    const std::string params_path =
        (std::filesystem::path(dir) / c.at("params_file").get<std::string>()).string();
    if (!std::filesystem::exists(params_path))
      throw DataError("missing checkpoint file " + params_path);
    nlohmann::ordered_json pf = read_json_file(params_path);
    if (fm.kind == ModelKind::linear) {
      fm.linear_fit = fit_from_json(pf.at("linear"), fm.prep.selected);
    } else {
      fm.net_cfg = network_config_from_json(pf.at("network_config"));
      fm.net_params = pf.at("tensors");
    }
    result.chosen.push_back(std::move(fm));
  }
  return result;
}

std::vector<double> combo_ensemble(const std::vector<std::vector<double>>& predictions) {
  if (predictions.empty()) throw DataError("combo_ensemble: no prediction vectors");
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions)
    if (p.size() != n) throw DataError("combo_ensemble: prediction length mismatch");
  std::vector<double> mean(n, 0.0);
  for (const auto& p : predictions)
    for (std::size_t i = 0; i < n; ++i) mean[i] += p[i];
  for (double& v : mean) v /= static_cast<double>(predictions.size());
  return mean;
}

namespace {

nlohmann::ordered_json km_to_json(const KMCurve& curve) {
  nlohmann::ordered_json j;
  j["event_times"] = curve.event_times;
  j["survival_prob"] = curve.survival_prob;
  j["at_risk"] = curve.at_risk;
  j["censor_times"] = curve.censor_times;
  return j;
}

}  // namespace

nlohmann::ordered_json TestReport::to_json() const {
  nlohmann::ordered_json j;
  j["per_model_predictions"] = per_model;
  j["mean_prediction"] = mean_prediction;
  j["metrics"] = metrics.to_json();
  if (stratification.has_value()) {
    const auto& st = *stratification;
    nlohmann::ordered_json s;
    s["skipped"] = st.skipped;
    s["skip_reason"] = st.skip_reason;
    s["threshold"] = st.threshold;
    if (!st.skipped) {
      s["low_indices"] = st.low;
      s["high_indices"] = st.high;
      s["km_low"] = km_to_json(st.km_low);
      s["km_high"] = km_to_json(st.km_high);
      s["chi_square"] = st.logrank.chi_square;
      s["p_value"] = st.logrank.p_value;
      s["significant"] = st.logrank.p_value < 0.05;
    }
    j["stratification"] = std::move(s);
  } else {
    j["stratification"] = nullptr;
  }
  return j;
}

TestReport predict_test(const SelectionResult& selection, const Cohort& raw_test) {
  if (selection.chosen.empty()) throw DataError("predict_test: selection has no models");
  TaskSpec spec;
  spec.endpoint = selection.endpoint;
  spec.kind = selection.task;
  spec.binarize_source = selection.binarize_source;
  spec.threshold_days = selection.binarize_threshold_days;
  Cohort test = task_cohort(raw_test, spec);
  if (test.size() == 0) throw DataError("predict_test: empty test cohort after binarization");
  if (test.patients.front().outcomes.find(spec.endpoint) == test.patients.front().outcomes.end())
    throw DataError("predict_test: endpoint '" + spec.endpoint + "' missing from test cohort");

  TestReport report;
  for (const auto& fm : selection.chosen) report.per_model.push_back(fm.predict(test));
  report.mean_prediction = combo_ensemble(report.per_model);

  if (selection.task == TaskKind::classification) {
    report.metrics = classification_metrics(report.mean_prediction, test.binary_labels(spec.endpoint));
  } else {
    report.metrics.c_index = concordance_index(report.mean_prediction,
                                               test.survival_times(spec.endpoint),
                                               test.survival_events(spec.endpoint));
  }

  // KM stratification needs observed time-to-event: the task's own endpoint
  // for survival, the binarization source otherwise.
  std::string surv_endpoint;
  if (selection.task == TaskKind::survival)
    surv_endpoint = spec.endpoint;
  else if (!selection.binarize_source.empty())
    surv_endpoint = selection.binarize_source;

  if (!surv_endpoint.empty()) {
    double threshold =
        selection.task == TaskKind::classification ? 0.5 : selection.risk_threshold;
    report.stratification =
        stratify_predictions(report.mean_prediction, test, surv_endpoint, threshold);
  }
  return report;
}

StratificationReport stratify_predictions(const std::vector<double>& predictions,
                                          const Cohort& cohort, const std::string& surv_endpoint,
                                          double threshold) {
  StratificationReport st;
  st.threshold = threshold;
  RiskGroups groups = stratify_by_risk(predictions, threshold);
  st.low = groups.low;
  st.high = groups.high;
  if (groups.degenerate()) {
    st.skipped = true;
    st.skip_reason = "one risk group is empty";
    return st;
  }
  auto times = cohort.survival_times(surv_endpoint);
  auto events = cohort.survival_events(surv_endpoint);
  auto pick_t = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    for (std::size_t i : idx) out.push_back(times[i]);
    return out;
  };
  auto pick_e = [&](const std::vector<std::size_t>& idx) {
    std::vector<bool> out;
    for (std::size_t i : idx) out.push_back(events[i]);
    return out;
  };
  auto t_low = pick_t(st.low), t_high = pick_t(st.high);
  auto e_low = pick_e(st.low), e_high = pick_e(st.high);
  st.km_low = km_estimate(t_low, e_low);
  st.km_high = km_estimate(t_high, e_high);
  try {
    st.logrank = logrank_test(t_low, e_low, t_high, e_high);
  } catch (const DataError& e) {
    st.skipped = true;
    st.skip_reason = e.what();
  }
  return st;
}

}  // namespace popgraph
