#include "popgraph/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace popgraph {

const SurvivalOutcome& PatientRecord::survival(const std::string& endpoint) const {
  auto it = outcomes.find(endpoint);
  if (it == outcomes.end())
    throw DataError("patient " + id + ": no outcome named '" + endpoint + "'");
  const auto* s = std::get_if<SurvivalOutcome>(&it->second);
  if (!s) throw DataError("patient " + id + ": outcome '" + endpoint + "' is not survival");
  return *s;
}

const BinaryOutcome& PatientRecord::binary(const std::string& endpoint) const {
  auto it = outcomes.find(endpoint);
  if (it == outcomes.end())
    throw DataError("patient " + id + ": no outcome named '" + endpoint + "'");
  const auto* b = std::get_if<BinaryOutcome>(&it->second);
  if (!b) throw DataError("patient " + id + ": outcome '" + endpoint + "' is not binary");
  return *b;
}

Mat Cohort::feature_matrix() const {
  Mat x(patients.size(), feature_names.size());
  for (std::size_t i = 0; i < patients.size(); ++i) x.row(i) = patients[i].features.transpose();
  return x;
}

Cohort Cohort::subset(const std::vector<std::size_t>& indices) const {
  Cohort out;
  out.feature_names = feature_names;
  out.patients.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= patients.size()) throw DataError("subset: index out of range");
    out.patients.push_back(patients[idx]);
  }
  return out;
}

Cohort Cohort::select_features(const std::vector<std::string>& names) const {
  std::vector<Eigen::Index> cols;
  cols.reserve(names.size());
  for (const auto& name : names) {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw DataError("select_features: unknown feature '" + name + "'");
    cols.push_back(static_cast<Eigen::Index>(it - feature_names.begin()));
  }
  Cohort out;
  out.feature_names = names;
  out.patients = patients;
  for (auto& rec : out.patients) {
    Vec f(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) f[static_cast<Eigen::Index>(j)] = rec.features[cols[j]];
    rec.features = std::move(f);
  }
  return out;
}

void Cohort::validate() const {
  std::set<std::string> ids;
  for (const auto& rec : patients) {
    if (rec.id.empty()) throw DataError("validate: empty patient id");
    if (!ids.insert(rec.id).second) throw DataError("validate: duplicate patient id '" + rec.id + "'");
    if (static_cast<std::size_t>(rec.features.size()) != feature_names.size())
      throw DataError("validate: patient " + rec.id + " has " + std::to_string(rec.features.size()) +
                      " features, expected " + std::to_string(feature_names.size()));
    if (!rec.features.allFinite())
      throw DataError("validate: patient " + rec.id + " has non-finite feature values");
    for (const auto& [name, out] : rec.outcomes) {
      if (const auto* s = std::get_if<SurvivalOutcome>(&out)) {
        if (!std::isfinite(s->time_days) || s->time_days < 0.0)
          throw DataError("validate: patient " + rec.id + " endpoint '" + name + "' has invalid time");
      } else if (const auto* b = std::get_if<BinaryOutcome>(&out)) {
        if (b->label != 0 && b->label != 1)
          throw DataError("validate: patient " + rec.id + " endpoint '" + name + "' label not in {0,1}");
      }
    }
  }
}

std::vector<double> Cohort::survival_times(const std::string& endpoint) const {
  std::vector<double> t;
  t.reserve(patients.size());
  for (const auto& rec : patients) t.push_back(rec.survival(endpoint).time_days);
  return t;
}

std::vector<bool> Cohort::survival_events(const std::string& endpoint) const {
  std::vector<bool> e;
  e.reserve(patients.size());
  for (const auto& rec : patients) e.push_back(rec.survival(endpoint).event);
  return e;
}

std::vector<int> Cohort::binary_labels(const std::string& endpoint) const {
  std::vector<int> y;
  y.reserve(patients.size());
  for (const auto& rec : patients) y.push_back(rec.binary(endpoint).label);
  return y;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw DataError(path + ": empty file");
  return rows;
}

double parse_double(const std::string& cell, const std::string& path) {
  try {
    std::size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ": cannot parse numeric value '" + cell + "'");
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Cohort load_cohort(const std::string& features_path, const std::string& endpoints_path) {
  auto feat_rows = read_csv(features_path);
  const auto& header = feat_rows[0];
  if (header.empty() || header[0] != "patient_id")
    throw DataError(features_path + ": first column must be patient_id");

  Cohort cohort;
  cohort.feature_names.assign(header.begin() + 1, header.end());
  std::map<std::string, std::size_t> index_of;
  for (std::size_t r = 1; r < feat_rows.size(); ++r) {
    const auto& row = feat_rows[r];
    if (row.size() != header.size())
      throw DataError(features_path + ": row " + std::to_string(r + 1) + " has " +
                      std::to_string(row.size()) + " cells, expected " + std::to_string(header.size()));
    PatientRecord rec;
    rec.id = row[0];
    rec.features.resize(static_cast<Eigen::Index>(cohort.feature_names.size()));
    for (std::size_t j = 1; j < row.size(); ++j)
      rec.features[static_cast<Eigen::Index>(j - 1)] = parse_double(row[j], features_path);
    index_of[rec.id] = cohort.patients.size();
    cohort.patients.push_back(std::move(rec));
  }

  auto end_rows = read_csv(endpoints_path);
  const auto& ehdr = end_rows[0];
  if (ehdr.empty() || ehdr[0] != "patient_id")
    throw DataError(endpoints_path + ": first column must be patient_id");

  // Column layout: survival endpoints as <name>_time + <name>_event pairs,
  // binary endpoints as <name>_label.
  struct EndpointCol {
    std::string name;
    enum { kTime, kEvent, kLabel } kind;
  };
  std::vector<EndpointCol> cols;
  for (std::size_t j = 1; j < ehdr.size(); ++j) {
    const std::string& h = ehdr[j];
    if (ends_with(h, "_time"))
      cols.push_back({h.substr(0, h.size() - 5), EndpointCol::kTime});
    else if (ends_with(h, "_event"))
      cols.push_back({h.substr(0, h.size() - 6), EndpointCol::kEvent});
    else if (ends_with(h, "_label"))
      cols.push_back({h.substr(0, h.size() - 6), EndpointCol::kLabel});
    else
      throw DataError(endpoints_path + ": endpoint column '" + h +
                      "' must end in _time, _event or _label");
  }

  for (std::size_t r = 1; r < end_rows.size(); ++r) {
    const auto& row = end_rows[r];
    if (row.size() != ehdr.size())
      throw DataError(endpoints_path + ": row " + std::to_string(r + 1) + " has wrong cell count");
    auto it = index_of.find(row[0]);
    if (it == index_of.end())
      throw DataError(endpoints_path + ": patient '" + row[0] + "' not present in feature table");
    PatientRecord& rec = cohort.patients[it->second];
    std::map<std::string, std::pair<std::optional<double>, std::optional<bool>>> surv_parts;
    for (std::size_t j = 1; j < row.size(); ++j) {
      const auto& col = cols[j - 1];
      if (row[j].empty()) continue;
      if (col.kind == EndpointCol::kLabel) {
        double v = parse_double(row[j], endpoints_path);
        if (v != 0.0 && v != 1.0)
          throw DataError(endpoints_path + ": label for '" + col.name + "' must be 0 or 1");
        rec.outcomes[col.name] = BinaryOutcome{static_cast<int>(v)};
      } else if (col.kind == EndpointCol::kTime) {
        surv_parts[col.name].first = parse_double(row[j], endpoints_path);
      } else {
        double v = parse_double(row[j], endpoints_path);
        if (v != 0.0 && v != 1.0)
          throw DataError(endpoints_path + ": event flag for '" + col.name + "' must be 0 or 1");
        surv_parts[col.name].second = v != 0.0;
      }
    }
    for (const auto& [name, parts] : surv_parts) {
      if (!parts.first.has_value() || !parts.second.has_value())
        throw DataError(endpoints_path + ": endpoint '" + name + "' for patient '" + rec.id +
                        "' needs both time and event");
      rec.outcomes[name] = SurvivalOutcome{*parts.first, *parts.second};
    }
  }

  cohort.validate();
  return cohort;
}

void save_cohort(const Cohort& cohort, const std::string& features_path,
                 const std::string& endpoints_path) {
  std::ofstream feat(features_path);
  if (!feat) throw DataError("cannot write " + features_path);
  feat << "patient_id";
  for (const auto& name : cohort.feature_names) feat << ',' << name;
  feat << '\n';
  feat.precision(17);
  for (const auto& rec : cohort.patients) {
    feat << rec.id;
    for (Eigen::Index j = 0; j < rec.features.size(); ++j) feat << ',' << rec.features[j];
    feat << '\n';
  }

  // Endpoint columns are the union over patients, in name order.
  std::map<std::string, bool> is_survival;
  for (const auto& rec : cohort.patients)
    for (const auto& [name, out] : rec.outcomes)
      is_survival[name] = std::holds_alternative<SurvivalOutcome>(out);

  std::ofstream ends(endpoints_path);
  if (!ends) throw DataError("cannot write " + endpoints_path);
  ends << "patient_id";
  for (const auto& [name, surv] : is_survival) {
    if (surv)
      ends << ',' << name << "_time," << name << "_event";
    else
      ends << ',' << name << "_label";
  }
  ends << '\n';
  ends.precision(17);
  for (const auto& rec : cohort.patients) {
    ends << rec.id;
    for (const auto& [name, surv] : is_survival) {
      auto it = rec.outcomes.find(name);
      if (surv) {
        if (it == rec.outcomes.end()) {
          ends << ",,";
        } else {
          const auto& s = std::get<SurvivalOutcome>(it->second);
          ends << ',' << s.time_days << ',' << (s.event ? 1 : 0);
        }
      } else {
        if (it == rec.outcomes.end())
          ends << ',';
        else
          ends << ',' << std::get<BinaryOutcome>(it->second).label;
      }
    }
    ends << '\n';
  }
}

BinarizeResult binarize_survival(const Cohort& cohort, const std::string& endpoint,
                                 double threshold_days) {
  BinarizeResult result;
  result.cohort.feature_names = cohort.feature_names;
  const std::string bin_name = "bin_" + endpoint;
  for (const auto& rec : cohort.patients) {
    const auto& s = rec.survival(endpoint);
    int label;
    if (s.event && s.time_days <= threshold_days) {
      label = 1;
    } else if (s.time_days >= threshold_days) {
      // Observed (event or censoring) beyond the horizon: known event-free.
      label = 0;
    } else {
      result.excluded_ids.push_back(rec.id);
      continue;
    }
    PatientRecord out = rec;
    out.outcomes[bin_name] = BinaryOutcome{label};
    result.cohort.patients.push_back(std::move(out));
  }
  return result;
}

Cohort generate_synthetic_cohort(std::size_t n, std::size_t p, SyntheticTask task,
                                 const Vec& signal, double censor_rate, std::uint64_t seed) {
  if (static_cast<std::size_t>(signal.size()) != p)
    throw ConfigError("generate_synthetic_cohort: signal length must equal p");
  if (censor_rate < 0.0 || censor_rate >= 1.0)
    throw ConfigError("generate_synthetic_cohort: censor_rate must be in [0, 1)");

  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Cohort cohort;
  cohort.feature_names.reserve(p);
  for (std::size_t j = 0; j < p; ++j) cohort.feature_names.push_back("f" + std::to_string(j));

  Mat x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gauss(rng);
  Vec eta = x * signal;

  cohort.patients.reserve(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  if (task == SyntheticTask::classification) {
    for (std::size_t i = 0; i < n; ++i) {
      PatientRecord rec;
      rec.id = "S" + std::to_string(i);
      rec.features = x.row(static_cast<Eigen::Index>(i)).transpose();
      rec.outcomes["outcome"] = BinaryOutcome{unif(rng) < sigmoid(eta[static_cast<Eigen::Index>(i)]) ? 1 : 0};
      cohort.patients.push_back(std::move(rec));
    }
    return cohort;
  }

  // Exponential proportional hazards: event hazard exp(eta_i), independent
  // exponential censoring with a common rate tuned so the expected censored
  // fraction matches censor_rate: mean_i lc/(lc + exp(eta_i)) = censor_rate.
  Vec hazard = eta.array().exp();
  double lc = 0.0;
  if (censor_rate > 0.0) {
    auto frac = [&](double c) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < hazard.size(); ++i) s += c / (c + hazard[i]);
      return s / static_cast<double>(hazard.size());
    };
    double lo = 1e-12, hi = 1.0;
    while (frac(hi) < censor_rate) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (frac(mid) < censor_rate ? lo : hi) = mid;
    }
    lc = 0.5 * (lo + hi);
  }

  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord rec;
    rec.id = "S" + std::to_string(i);
    rec.features = x.row(static_cast<Eigen::Index>(i)).transpose();
    double u_event = unif(rng);
    double u_cens = unif(rng);
    // Days scale so thresholds like 730 are meaningful downstream.
    double t_event = -std::log(1.0 - u_event) / hazard[static_cast<Eigen::Index>(i)] * 365.0;
    double t_cens = lc > 0.0 ? -std::log(1.0 - u_cens) / lc * 365.0
                             : std::numeric_limits<double>::infinity();
    SurvivalOutcome s;
    s.event = t_event <= t_cens;
    s.time_days = std::min(t_event, t_cens);
    rec.outcomes["surv"] = s;
    cohort.patients.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace popgraph
