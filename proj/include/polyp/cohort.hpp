#pragma once

// Cohort construction: eligibility rules, baseline/outcome pairing and
// covariate derivation for the recurrence analysis.

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "polyp/dataset.hpp"
#include "polyp/date.hpp"
#include "polyp/report_parser.hpp"

namespace polyp {

enum class Gender { Female, Male };
enum class SmokingStatus { Never, Used };
enum class SmokingFrequency { None, Light, Heavy };
enum class Race { White, Black, Asian, Other };
enum class Ethnicity { NonHispanic, Hispanic };
enum class MaritalStatus { Married, Single, Divorced, Widowed };

// Level names in declaration order; the first is the reference level.
template <typename E> struct EnumLevels;
template <> struct EnumLevels<Gender> {
  static constexpr std::array<std::string_view, 2> names = {"Female", "Male"};
};
template <> struct EnumLevels<SmokingStatus> {
  static constexpr std::array<std::string_view, 2> names = {"Never", "Used"};
};
template <> struct EnumLevels<SmokingFrequency> {
  static constexpr std::array<std::string_view, 3> names = {"None", "Light", "Heavy"};
};
template <> struct EnumLevels<Race> {
  static constexpr std::array<std::string_view, 4> names = {"White", "Black", "Asian", "Other"};
};
template <> struct EnumLevels<Ethnicity> {
  static constexpr std::array<std::string_view, 2> names = {"NonHispanic", "Hispanic"};
};
template <> struct EnumLevels<MaritalStatus> {
  static constexpr std::array<std::string_view, 4> names = {"Married", "Single", "Divorced",
                                                            "Widowed"};
};

template <typename E>
std::string level_name(E value) {
  return std::string(EnumLevels<E>::names[static_cast<std::size_t>(value)]);
}

template <typename E>
std::optional<E> parse_level(std::string_view s) {
  const auto& names = EnumLevels<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

template <typename E>
std::vector<std::string> level_names() {
  return {EnumLevels<E>::names.begin(), EnumLevels<E>::names.end()};
}

// Any recorded tobacco status other than "Never" (current, former,
// occasional, ...) collapses to Used. Empty means missing.
std::optional<SmokingStatus> collapse_smoking_status(std::string_view raw);

struct Demographics {
  std::optional<Gender> gender;
  std::optional<double> age_years;
  std::optional<double> bmi;
  std::optional<double> height_cm;
  std::optional<double> weight_kg;
  std::optional<SmokingStatus> smoking_status;
  std::optional<SmokingFrequency> smoking_frequency;
  std::optional<Race> race;
  std::optional<Ethnicity> ethnicity;
  std::optional<MaritalStatus> marital_status;
};

struct DatedVisit {
  Date date;
  VisitSummary summary;
};

struct PatientHistory {
  std::string patient_id;
  Demographics demographics;
  std::vector<DatedVisit> visits;  // strictly increasing dates
  bool colitis_or_crohns = false;
};

enum class Side { Left, Right, Other };
std::string to_string(Side side);

struct SidePartition {
  std::set<ColonSite> left = {ColonSite::Descending, ColonSite::Sigmoid, ColonSite::Rectum,
                              ColonSite::Anus, ColonSite::Splenic};
  std::set<ColonSite> right = {ColonSite::IleumCecum, ColonSite::Ileocecal, ColonSite::Ascending,
                               ColonSite::Hepatic};
};

struct CohortConfig {
  int min_separation_days = 183;
  int faulty_gap_days = 14;
  SidePartition sides;
};

struct Exclusion {
  std::string patient_id;
  ExclusionReason reason;
};

struct EligibilityResult {
  std::vector<PatientHistory> eligible;
  std::vector<Exclusion> excluded;
};

// Visits surviving the faulty-visit rule: a visit fewer than
// `faulty_gap_days` after the previously retained visit is dropped.
std::vector<DatedVisit> retained_visits(const PatientHistory& history, const CohortConfig& config = {});

// First violated criterion, or nullopt when eligible.
std::optional<ExclusionReason> check_eligibility(const PatientHistory& history,
                                                 const CohortConfig& config = {});

EligibilityResult filter_eligible(const std::vector<PatientHistory>& histories,
                                  const CohortConfig& config = {});

// Covariates available at the baseline visit: polyp features, side
// designation and demographics. Missing demographics are left out.
CovariateRow baseline_covariates(const VisitSummary& baseline, const Demographics& demographics,
                                 const SidePartition& sides = {});

// Throws Error(IneligibleHistory) if the history fails the rules.
PatientCase pair_baseline_outcome(const PatientHistory& history, const CohortConfig& config = {});

// Throws Error(InvalidArgument) when polyp_count == 0.
Side designate_side(const VisitSummary& summary, const SidePartition& sides = {});

enum class Discretization { MedianBinary, Tertile };

// MedianBinary: "High" iff value > median, else "Low".
// Tertile: "T1" iff value <= q(1/3), "T2" iff value <= q(2/3), else "T3".
// Quantiles use linear interpolation between order statistics.
std::vector<std::string> discretize(const std::vector<double>& values, Discretization scheme);

// Linear-interpolation empirical quantile of a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double p);

// Raw per-case covariates produced by pair_baseline_outcome.
std::vector<Variable> base_schema();

// Continuous variables that also get median and tertile variants.
std::vector<std::string> default_discretized_variables();

// `base` followed by the "<name>_median" and "<name>_tertile" factors that
// assemble_dataset appends.
std::vector<Variable> analysis_schema(const std::vector<Variable>& base = base_schema(),
                                      const std::vector<std::string>& discretized =
                                          default_discretized_variables());

struct AssembledCohort {
  SurvivalDataset dataset;
  std::vector<Exclusion> dropped;  // reason MissingData
};

// Drops cases missing any schema variable, then appends "<name>_median" and
// "<name>_tertile" factor columns for each name in `discretized`.
// Throws Error(NoCompleteCases) or Error(NoEvents).
AssembledCohort assemble_dataset(const std::vector<PatientCase>& cases,
                                 const std::vector<Variable>& schema = base_schema(),
                                 const std::vector<std::string>& discretized =
                                     default_discretized_variables());

}  // namespace polyp
