#pragma once

// Synthetic patient histories with planted proportional hazards, plus the
// colonoscopy report text that renders each visit.
//
// Latent recurrence time is exponential with rate
//   baseline_hazard_per_day * exp(sum_k beta_k x_k)
// where x is the baseline covariate row coded like the Cox design matrix
// ("age", "smoking:Used", "location:Right", ...). Recurrence is only observed
// at the next surveillance visit, 1-3 years apart.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "polyp/cohort.hpp"
#include "polyp/report_parser.hpp"
#include "polyp/rng.hpp"

namespace polyp {

enum class ReportStyle { Plain, Ranged, NumberWords };
std::string to_string(ReportStyle style);

struct StyleWeights {
  double plain = 1.0 / 3.0;
  double ranged = 1.0 / 3.0;
  double number_words = 1.0 / 3.0;
};

struct SynthConfig {
  int n_patients = 1000;
  double baseline_hazard_per_day = 1.0 / 3000.0;
  std::map<std::string, double> planted_log_hazard_ratios;
  int censor_horizon_days = 2283;  // 6.25 years
  double missingness_rate = 0.0;
  std::uint64_t seed = 1;
  StyleWeights styles;
  double cm_probability = 0.3;
  int min_visit_gap_days = 365;
  int max_visit_gap_days = 1095;
};

// Throws Error(InvalidConfig).
void validate(const SynthConfig& config);

struct GroundTruth {
  std::string patient_id;
  double linear_predictor = 0.0;
  double recurrence_time_days = 0.0;
  VisitSummary baseline;
};

struct SynthCohort {
  std::vector<PatientHistory> histories;
  std::vector<ColonoscopyReport> reports;  // one per visit, in history order
  std::vector<GroundTruth> truth;
};

SynthCohort generate_cohort(const SynthConfig& config);

struct RenderOptions {
  double cm_probability = 0.3;
};

// Text that parse_report + aggregate_visit map back to `summary`.
// Sizes are rendered in whole millimetres; throws Error(UnrenderableSummary)
// when the summary's mean or max cannot be expressed that way.
std::string generate_report_text(const VisitSummary& summary, ReportStyle style, Rng& rng,
                                 const RenderOptions& options = {});

// Number words for 0..99 ("forty-two").
std::string number_to_words(int n);

}  // namespace polyp
