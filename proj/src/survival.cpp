#include "polyp/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "polyp/error.hpp"
#include "polyp/stats.hpp"

namespace polyp {

namespace {

struct Observation {
  double time;
  bool event;
  std::size_t group;
};

std::vector<Observation> pooled_sorted(const std::vector<SurvivalGroup>& groups) {
  std::vector<Observation> obs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (grp.times.size() != grp.events.size()) {
      throw Error(ErrorCode::InvalidArgument, "times and events differ in length");
    }
    for (std::size_t i = 0; i < grp.times.size(); ++i) {
      obs.push_back({grp.times[i], static_cast<bool>(grp.events[i]), g});
    }
  }
  std::stable_sort(obs.begin(), obs.end(),
                   [](const Observation& a, const Observation& b) { return a.time < b.time; });
  return obs;
}

}  // namespace

double KMCurve::survival_at(double t) const {
  double s = 1.0;
  for (const auto& p : points) {
    if (p.time > t) break;
    s = p.survival;
  }
  return s;
}

KMCurve km_estimate(std::span<const double> times, const std::vector<bool>& events) {
  if (times.size() != events.size()) {
    throw Error(ErrorCode::InvalidArgument, "times and events differ in length");
  }
  for (double t : times) {
    if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "survival times must be positive");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  KMCurve curve;
  int at_risk = static_cast<int>(times.size());
  curve.points.push_back({0.0, 1.0, at_risk, 0});
  double s = 1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = times[order[i]];
    int deaths = 0;
    int leaving = 0;
    for (; i < order.size() && times[order[i]] == t; ++i) {
      deaths += events[order[i]] ? 1 : 0;
      ++leaving;
    }
    if (deaths > 0) {
      s *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.points.push_back({t, s, at_risk, deaths});
      if (!curve.median_time && s <= 0.5) curve.median_time = t;
    }
    at_risk -= leaving;
  }
  return curve;
}

LogRankResult log_rank(const std::vector<SurvivalGroup>& groups) {
  if (groups.size() < 2) throw Error(ErrorCode::InvalidArgument, "log-rank needs at least two groups");
  for (const auto& g : groups) {
    if (g.times.empty()) throw Error(ErrorCode::InvalidArgument, "log-rank group is empty");
  }
  const std::size_t k = groups.size();
  const auto obs = pooled_sorted(groups);

  std::vector<double> at_risk(k);
  for (std::size_t g = 0; g < k; ++g) at_risk[g] = static_cast<double>(groups[g].times.size());
  double n = static_cast<double>(obs.size());

  // Two groups use the scalar kernel; more groups need the full covariance.
  double u2 = 0.0;
  double v2 = 0.0;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k - 1));
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k - 1));
  std::vector<double> deaths(k);
  std::vector<double> leaving(k);
  bool any_event = false;

  std::size_t i = 0;
  while (i < obs.size()) {
    const double t = obs[i].time;
    std::fill(deaths.begin(), deaths.end(), 0.0);
    std::fill(leaving.begin(), leaving.end(), 0.0);
    double d = 0.0;
    double out = 0.0;
    for (; i < obs.size() && obs[i].time == t; ++i) {
      if (obs[i].event) {
        deaths[obs[i].group] += 1.0;
        d += 1.0;
      }
      leaving[obs[i].group] += 1.0;
      out += 1.0;
    }
    if (d > 0.0) {
      any_event = true;
      if (k == 2) {
        detail::logrank_accumulate(d, n, deaths[0], at_risk[0], u2, v2);
      } else {
        const double scale = n > 1.0 ? d * (n - d) / (n - 1.0) : 0.0;
        for (std::size_t a = 0; a + 1 < k; ++a) {
          const double pa = at_risk[a] / n;
          u(static_cast<Eigen::Index>(a)) += deaths[a] - d * pa;
          for (std::size_t b = 0; b + 1 < k; ++b) {
            const double pb = at_risk[b] / n;
            v(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += scale * pa * ((a == b ? 1.0 : 0.0) - pb);
          }
        }
      }
    }
    for (std::size_t g = 0; g < k; ++g) at_risk[g] -= leaving[g];
    n -= out;
  }
  if (!any_event) throw Error(ErrorCode::NoEvents, "log-rank test with zero events");

  LogRankResult result;
  result.degrees_of_freedom = static_cast<int>(k - 1);
  if (k == 2) {
    result.chi_square = detail::logrank_statistic(u2, v2);
  } else {
    // Groups censored before the first event leave V singular; use the pseudo-inverse.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(v);
    result.chi_square = std::max(0.0, u.dot(cod.solve(u)));
  }
  result.p_value = stats::chi_square_sf(result.chi_square, result.degrees_of_freedom);
  return result;
}

SurvivalDataset apply_common_censor(const SurvivalDataset& dataset, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "censor quantile must lie in (0, 1]");
  }
  SurvivalDataset out = dataset;
  if (out.size() == 0) return out;
  const double cutoff = quantile * *std::max_element(out.time.begin(), out.time.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.time[i] > cutoff) {
      out.time[i] = cutoff;
      out.event[i] = false;
    }
  }
  return out;
}

std::vector<std::pair<std::string, SurvivalGroup>> groups_by_factor(const SurvivalDataset& dataset,
                                                                    const std::string& variable) {
  const std::size_t v = dataset.variable_index(variable);
  const Variable& var = dataset.schema[v];
  if (!var.is_factor()) {
    throw Error(ErrorCode::InvalidArgument, "'" + variable + "' is not a factor");
  }
  std::vector<SurvivalGroup> by_level(var.levels.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto& g = by_level[static_cast<std::size_t>(dataset.columns[v][i])];
    g.times.push_back(dataset.time[i]);
    g.events.push_back(dataset.event[i]);
  }
  std::vector<std::pair<std::string, SurvivalGroup>> out;
  for (std::size_t l = 0; l < by_level.size(); ++l) {
    if (!by_level[l].times.empty()) out.emplace_back(var.levels[l], std::move(by_level[l]));
  }
  return out;
}

std::vector<std::string> ScreeningReport::admitted() const {
  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (e.admitted) names.push_back(e.variable);
  }
  return names;
}

ScreeningReport screen_variables(const SurvivalDataset& dataset,
                                 const std::vector<std::string>& candidate_factors,
                                 double threshold) {
  for (const auto& name : candidate_factors) {
    if (!dataset.variable(name).is_factor()) {
      throw Error(ErrorCode::InvalidArgument, "screening candidate '" + name + "' is not a factor");
    }
  }
  ScreeningReport report;
  for (const Variable& var : dataset.schema) {
    if (std::find(candidate_factors.begin(), candidate_factors.end(), var.name) ==
        candidate_factors.end()) {
      continue;
    }
    ScreeningEntry entry;
    entry.variable = var.name;
    auto levels = groups_by_factor(dataset, var.name);
    if (levels.size() < 2) {
      entry.note = "skipped: fewer than two populated levels";
    } else {
      std::vector<SurvivalGroup> groups;
      for (auto& [level, g] : levels) groups.push_back(std::move(g));
      entry.test = log_rank(groups);
      entry.admitted = entry.test->p_value < threshold;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace polyp
