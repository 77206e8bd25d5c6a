#include "polyp/cohort.hpp"

#include <algorithm>
#include <cmath>

#include "polyp/error.hpp"

namespace polyp {

namespace {

void check_visit_order(const PatientHistory& history) {
  for (std::size_t i = 1; i < history.visits.size(); ++i) {
    if (!(history.visits[i - 1].date < history.visits[i].date)) {
      throw Error(ErrorCode::InvalidArgument,
                  "visits of patient '" + history.patient_id + "' are not strictly increasing");
    }
  }
}

const DatedVisit* first_polyp_visit(const std::vector<DatedVisit>& visits) {
  for (const auto& v : visits) {
    if (v.summary.polyp_count >= 1) return &v;
  }
  return nullptr;
}

template <typename E>
void put_level(CovariateRow& row, const char* name, const std::optional<E>& value) {
  if (value) row[name] = level_name(*value);
}

void put_real(CovariateRow& row, const char* name, const std::optional<double>& value) {
  if (value) row[name] = *value;
}

bool value_fits(const Variable& var, const CovariateValue& value) {
  if (var.is_factor()) {
    const auto* level = std::get_if<std::string>(&value);
    return level != nullptr && var.level_index(*level).has_value();
  }
  const auto* x = std::get_if<double>(&value);
  return x != nullptr && std::isfinite(*x);
}

}  // namespace

std::optional<SmokingStatus> collapse_smoking_status(std::string_view raw) {
  if (raw.empty()) return std::nullopt;
  return raw == "Never" ? SmokingStatus::Never : SmokingStatus::Used;
}

std::string to_string(Side side) {
  switch (side) {
    case Side::Left: return "Left";
    case Side::Right: return "Right";
    case Side::Other: return "Other";
  }
  return "";
}

std::vector<DatedVisit> retained_visits(const PatientHistory& history, const CohortConfig& config) {
  check_visit_order(history);
  std::vector<DatedVisit> kept;
  for (const auto& visit : history.visits) {
    if (!kept.empty() && days_between(kept.back().date, visit.date) < config.faulty_gap_days) {
      continue;
    }
    kept.push_back(visit);
  }
  return kept;
}

std::optional<ExclusionReason> check_eligibility(const PatientHistory& history,
                                                 const CohortConfig& config) {
  if (first_polyp_visit(history.visits) == nullptr) return ExclusionReason::NoPolypRecord;
  if (history.colitis_or_crohns) return ExclusionReason::ColitisOrCrohns;

  const auto kept = retained_visits(history, config);
  if (kept.size() < 2) return ExclusionReason::TooFewVisits;
  // The only polyp record may itself have been a faulty repeat visit.
  const DatedVisit* baseline = first_polyp_visit(kept);
  if (baseline == nullptr) return ExclusionReason::NoPolypRecord;
  if (days_between(baseline->date, kept.back().date) < config.min_separation_days) {
    return ExclusionReason::InsufficientSeparation;
  }
  return std::nullopt;
}

EligibilityResult filter_eligible(const std::vector<PatientHistory>& histories,
                                  const CohortConfig& config) {
  EligibilityResult result;
  for (const auto& h : histories) {
    if (auto reason = check_eligibility(h, config)) {
      result.excluded.push_back({h.patient_id, *reason});
    } else {
      result.eligible.push_back(h);
    }
  }
  return result;
}

CovariateRow baseline_covariates(const VisitSummary& s, const Demographics& d,
                                 const SidePartition& sides) {
  CovariateRow row;
  row["polyp_count"] = static_cast<double>(s.polyp_count);
  put_real(row, "mean_size_mm", s.mean_size_mm);
  put_real(row, "max_size_mm", s.max_size_mm);
  row["location"] = to_string(designate_side(s, sides));
  put_level(row, "gender", d.gender);
  put_real(row, "age", d.age_years);
  put_real(row, "bmi", d.bmi);
  put_real(row, "height_cm", d.height_cm);
  put_real(row, "weight_kg", d.weight_kg);
  put_level(row, "smoking", d.smoking_status);
  put_level(row, "smoking_frequency", d.smoking_frequency);
  put_level(row, "race", d.race);
  put_level(row, "ethnicity", d.ethnicity);
  put_level(row, "marital_status", d.marital_status);
  return row;
}

PatientCase pair_baseline_outcome(const PatientHistory& history, const CohortConfig& config) {
  if (auto reason = check_eligibility(history, config)) {
    throw Error(ErrorCode::IneligibleHistory,
                "patient '" + history.patient_id + "' is ineligible: " + to_string(*reason));
  }
  const auto kept = retained_visits(history, config);
  const DatedVisit& baseline = *first_polyp_visit(kept);

  const DatedVisit* outcome = &kept.back();
  bool event = false;
  for (const auto& v : kept) {
    if (days_between(baseline.date, v.date) >= config.min_separation_days &&
        v.summary.polyp_count >= 1) {
      outcome = &v;
      event = true;
      break;
    }
  }

  PatientCase c;
  c.patient_id = history.patient_id;
  c.time_days = days_between(baseline.date, outcome->date);
  c.event = event;

  c.covariates = baseline_covariates(baseline.summary, history.demographics, config.sides);
  return c;
}

Side designate_side(const VisitSummary& summary, const SidePartition& sides) {
  if (summary.polyp_count < 1) {
    throw Error(ErrorCode::InvalidArgument, "side designation needs at least one polyp");
  }
  int left = 0;
  int right = 0;
  const int located = summary.located_count();
  for (const auto& [site, n] : summary.location_counts) {
    if (sides.left.contains(site)) left += n;
    if (sides.right.contains(site)) right += n;
  }
  if (2 * left > located) return Side::Left;
  if (2 * right > located) return Side::Right;
  return Side::Other;
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<std::string> discretize(const std::vector<double>& values, Discretization scheme) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "cannot discretize an empty column");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite value in column");
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());

  std::vector<std::string> out;
  out.reserve(values.size());
  if (scheme == Discretization::MedianBinary) {
    const double median = sorted_quantile(sorted, 0.5);
    for (double v : values) out.emplace_back(v > median ? "High" : "Low");
  } else {
    const double q1 = sorted_quantile(sorted, 1.0 / 3.0);
    const double q2 = sorted_quantile(sorted, 2.0 / 3.0);
    for (double v : values) out.emplace_back(v <= q1 ? "T1" : v <= q2 ? "T2" : "T3");
  }
  return out;
}

std::vector<Variable> base_schema() {
  return {
      Variable::continuous("polyp_count"),
      Variable::continuous("mean_size_mm"),
      Variable::continuous("max_size_mm"),
      Variable::factor("location", {"Left", "Right", "Other"}),
      Variable::factor("gender", level_names<Gender>()),
      Variable::continuous("age"),
      Variable::continuous("bmi"),
      Variable::continuous("height_cm"),
      Variable::continuous("weight_kg"),
      Variable::factor("smoking", level_names<SmokingStatus>()),
      Variable::factor("smoking_frequency", level_names<SmokingFrequency>()),
      Variable::factor("race", level_names<Race>()),
      Variable::factor("ethnicity", level_names<Ethnicity>()),
      Variable::factor("marital_status", level_names<MaritalStatus>()),
  };
}

std::vector<std::string> default_discretized_variables() {
  return {"polyp_count", "mean_size_mm", "max_size_mm", "age", "bmi", "height_cm", "weight_kg"};
}

namespace {

Variable median_variable(const std::string& name) { return Variable::factor(name + "_median", {"Low", "High"}); }
Variable tertile_variable(const std::string& name) {
  return Variable::factor(name + "_tertile", {"T1", "T2", "T3"});
}

}  // namespace

std::vector<Variable> analysis_schema(const std::vector<Variable>& base,
                                      const std::vector<std::string>& discretized) {
  std::vector<Variable> out = base;
  for (const std::string& name : discretized) {
    out.push_back(median_variable(name));
    out.push_back(tertile_variable(name));
  }
  return out;
}

AssembledCohort assemble_dataset(const std::vector<PatientCase>& cases,
                                 const std::vector<Variable>& schema,
                                 const std::vector<std::string>& discretized) {
  AssembledCohort out;
  SurvivalDataset& ds = out.dataset;
  ds.schema = schema;
  ds.columns.resize(schema.size());

  for (const PatientCase& c : cases) {
    const bool complete = std::all_of(schema.begin(), schema.end(), [&](const Variable& var) {
      auto it = c.covariates.find(var.name);
      return it != c.covariates.end() && value_fits(var, it->second);
    });
    if (!complete) {
      out.dropped.push_back({c.patient_id, ExclusionReason::MissingData});
      continue;
    }
    ds.ids.push_back(c.patient_id);
    ds.time.push_back(static_cast<double>(c.time_days));
    ds.event.push_back(c.event);
    for (std::size_t v = 0; v < schema.size(); ++v) {
      const CovariateValue& value = c.covariates.at(schema[v].name);
      if (schema[v].is_factor()) {
        ds.columns[v].push_back(static_cast<double>(*schema[v].level_index(std::get<std::string>(value))));
      } else {
        ds.columns[v].push_back(std::get<double>(value));
      }
    }
  }
  ds.dropped_incomplete = out.dropped.size();

  if (ds.size() == 0) throw Error(ErrorCode::NoCompleteCases, "no complete cases remain");
  if (ds.num_events() == 0) throw Error(ErrorCode::NoEvents, "dataset contains no events");

  for (const std::string& name : discretized) {
    const std::size_t v = ds.variable_index(name);
    if (ds.schema[v].is_factor()) {
      throw Error(ErrorCode::InvalidArgument, "cannot discretize factor '" + name + "'");
    }
    const std::vector<double> values = ds.columns[v];

    Variable median = median_variable(name);
    std::vector<double> median_col;
    for (const auto& level : discretize(values, Discretization::MedianBinary)) {
      median_col.push_back(static_cast<double>(*median.level_index(level)));
    }
    ds.append_variable(std::move(median), std::move(median_col));

    Variable tertile = tertile_variable(name);
    std::vector<double> tertile_col;
    for (const auto& level : discretize(values, Discretization::Tertile)) {
      tertile_col.push_back(static_cast<double>(*tertile.level_index(level)));
    }
    ds.append_variable(std::move(tertile), std::move(tertile_col));
  }
  return out;
}

}  // namespace polyp
