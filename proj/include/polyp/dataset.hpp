#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace polyp {

enum class VariableKind { Continuous, Factor };

// A covariate column. Factors list their levels; levels[0] is the reference.
struct Variable {
  std::string name;
  VariableKind kind = VariableKind::Continuous;
  std::vector<std::string> levels;

  bool is_factor() const { return kind == VariableKind::Factor; }
  std::optional<std::size_t> level_index(const std::string& level) const;

  static Variable continuous(std::string name) { return {std::move(name), VariableKind::Continuous, {}}; }
  static Variable factor(std::string name, std::vector<std::string> levels) {
    return {std::move(name), VariableKind::Factor, std::move(levels)};
  }
};

using CovariateValue = std::variant<double, std::string>;
using CovariateRow = std::map<std::string, CovariateValue>;

enum class ExclusionReason {
  NoPolypRecord,
  ColitisOrCrohns,
  TooFewVisits,
  InsufficientSeparation,
  MissingData,
};

std::string to_string(ExclusionReason reason);
std::optional<ExclusionReason> exclusion_reason_from_string(const std::string& s);

// One baseline/outcome pair. Covariates hold baseline information only;
// a missing covariate is simply absent from the map.
struct PatientCase {
  std::string patient_id;
  int time_days = 0;
  bool event = false;
  CovariateRow covariates;
  std::optional<ExclusionReason> exclusion;
};

// Columnar survival data. Factor values are stored as level indices.
struct SurvivalDataset {
  std::vector<std::string> ids;
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<Variable> schema;
  std::vector<std::vector<double>> columns;  // columns[v][case]
  std::size_t dropped_incomplete = 0;

  std::size_t size() const { return time.size(); }
  std::size_t num_variables() const { return schema.size(); }
  std::size_t num_events() const;

  // Throws Error(InvalidArgument) for unknown names.
  std::size_t variable_index(const std::string& name) const;
  const Variable& variable(const std::string& name) const { return schema[variable_index(name)]; }
  const std::vector<double>& column(const std::string& name) const {
    return columns[variable_index(name)];
  }

  CovariateRow row(std::size_t i) const;
  SurvivalDataset subset(const std::vector<std::size_t>& rows) const;

  void append_variable(Variable var, std::vector<double> values);
};

}  // namespace polyp
