#include "polyp/dataset.hpp"

#include <algorithm>

#include "polyp/error.hpp"

namespace polyp {

std::optional<std::size_t> Variable::level_index(const std::string& level) const {
  auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - levels.begin());
}

std::string to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::NoPolypRecord: return "NoPolypRecord";
    case ExclusionReason::ColitisOrCrohns: return "ColitisOrCrohns";
    case ExclusionReason::TooFewVisits: return "TooFewVisits";
    case ExclusionReason::InsufficientSeparation: return "InsufficientSeparation";
    case ExclusionReason::MissingData: return "MissingData";
  }
  return "";
}

std::optional<ExclusionReason> exclusion_reason_from_string(const std::string& s) {
  for (auto r : {ExclusionReason::NoPolypRecord, ExclusionReason::ColitisOrCrohns,
                 ExclusionReason::TooFewVisits, ExclusionReason::InsufficientSeparation,
                 ExclusionReason::MissingData}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::size_t SurvivalDataset::num_events() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), true));
}

std::size_t SurvivalDataset::variable_index(const std::string& name) const {
  for (std::size_t v = 0; v < schema.size(); ++v) {
    if (schema[v].name == name) return v;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown variable '" + name + "'");
}

CovariateRow SurvivalDataset::row(std::size_t i) const {
  CovariateRow r;
  for (std::size_t v = 0; v < schema.size(); ++v) {
    const double x = columns[v][i];
    if (schema[v].is_factor()) {
      r[schema[v].name] = schema[v].levels[static_cast<std::size_t>(x)];
    } else {
      r[schema[v].name] = x;
    }
  }
  return r;
}

SurvivalDataset SurvivalDataset::subset(const std::vector<std::size_t>& rows) const {
  SurvivalDataset out;
  out.schema = schema;
  out.columns.resize(columns.size());
  for (std::size_t i : rows) {
    out.ids.push_back(ids[i]);
    out.time.push_back(time[i]);
    out.event.push_back(event[i]);
    for (std::size_t v = 0; v < columns.size(); ++v) out.columns[v].push_back(columns[v][i]);
  }
  return out;
}

void SurvivalDataset::append_variable(Variable var, std::vector<double> values) {
  if (values.size() != size()) {
    throw Error(ErrorCode::InvalidArgument, "column '" + var.name + "' has wrong length");
  }
  schema.push_back(std::move(var));
  columns.push_back(std::move(values));
}

}  // namespace polyp
