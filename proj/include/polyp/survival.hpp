#pragma once

// Kaplan-Meier estimation, the log-rank test, common-censor truncation and
// the log-rank variable screen used to pick Cox model inputs.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polyp/dataset.hpp"

namespace polyp {

struct KMPoint {
  double time = 0.0;
  double survival = 1.0;
  int n_at_risk = 0;
  int n_events = 0;
};

// points[0] is (0, 1.0, n, 0); every later point is a distinct event time.
struct KMCurve {
  std::vector<KMPoint> points;
  std::optional<double> median_time;

  double survival_at(double t) const;
};

// Throws Error(InvalidArgument) on length mismatch or non-positive times.
KMCurve km_estimate(std::span<const double> times, const std::vector<bool>& events);

struct SurvivalGroup {
  std::vector<double> times;
  std::vector<bool> events;
};

struct LogRankResult {
  double chi_square = 0.0;
  int degrees_of_freedom = 1;
  double p_value = 1.0;
};

// Throws Error(InvalidArgument) for fewer than two groups or an empty group,
// Error(NoEvents) when no group has an event.
LogRankResult log_rank(const std::vector<SurvivalGroup>& groups);

namespace detail {

// Contribution of one distinct event time to the two-group statistic, with
// `d` events among `n` at risk, of which `d1` events among `n1` in group 1.
// Shared with the forest's split scorer so both produce identical bits.
inline void logrank_accumulate(double d, double n, double d1, double n1, double& u, double& v) {
  const double share = n1 / n;
  u += d1 - d * share;
  if (n > 1.0) v += d * share * (1.0 - share) * (n - d) / (n - 1.0);
}

inline double logrank_statistic(double u, double v) { return v > 0.0 ? u * u / v : 0.0; }

}  // namespace detail

// Cases later than quantile * max(time) are censored at that cutoff.
SurvivalDataset apply_common_censor(const SurvivalDataset& dataset, double quantile = 0.95);

// Splits the dataset by the populated levels of a factor variable.
std::vector<std::pair<std::string, SurvivalGroup>> groups_by_factor(const SurvivalDataset& dataset,
                                                                    const std::string& variable);

struct ScreeningEntry {
  std::string variable;
  std::optional<LogRankResult> test;  // empty when the variable was untestable
  bool admitted = false;
  std::string note;
};

struct ScreeningReport {
  std::vector<ScreeningEntry> entries;  // schema order

  std::vector<std::string> admitted() const;
};

// Admits factors whose log-rank p-value is strictly below `threshold`.
ScreeningReport screen_variables(const SurvivalDataset& dataset,
                                 const std::vector<std::string>& candidate_factors,
                                 double threshold = 0.2);

}  // namespace polyp
