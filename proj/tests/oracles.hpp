#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Each one is written from the textbook definition
// without reusing library code.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "polyp/rng.hpp"
#include "polyp/survival.hpp"
#include "test_support.hpp"

namespace polyp::testing {

// Product-limit survival at t, straight from the definition.
inline double km_oracle(const std::vector<double>& times, const std::vector<bool>& events, double t) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (events[i] && times[i] <= t) event_times.insert(times[i]);
  }
  double s = 1.0;
  for (double u : event_times) {
    double n = 0;
    double d = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (times[i] >= u) n += 1;
      if (times[i] == u && events[i]) d += 1;
    }
    s *= 1.0 - d / n;
  }
  return s;
}

// Two-group Mantel-Haenszel statistic from explicit 2x2 tables.
inline double logrank_oracle(const SurvivalGroup& a, const SurvivalGroup& b) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < a.times.size(); ++i) if (a.events[i]) event_times.insert(a.times[i]);
  for (std::size_t i = 0; i < b.times.size(); ++i) if (b.events[i]) event_times.insert(b.times[i]);
  double o_minus_e = 0.0;
  double var = 0.0;
  for (double t : event_times) {
    double n1 = 0, n2 = 0, d1 = 0, d2 = 0;
    for (std::size_t i = 0; i < a.times.size(); ++i) {
      n1 += a.times[i] >= t;
      d1 += a.times[i] == t && a.events[i];
    }
    for (std::size_t i = 0; i < b.times.size(); ++i) {
      n2 += b.times[i] >= t;
      d2 += b.times[i] == t && b.events[i];
    }
    const double n = n1 + n2;
    const double d = d1 + d2;
    o_minus_e += d1 - d * n1 / n;
    if (n > 1) var += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1);
  }
  return o_minus_e * o_minus_e / var;
}

struct CoxFixture {
  std::vector<double> time;
  std::vector<bool> event;
  std::vector<double> x;
  double grid_beta = 0.0;  // filled by small_cox_fixtures()
};

// Log partial likelihood for one covariate, written out per event time.
// Efron spreads the tied events' risk over the tie; without ties it
// reduces to Breslow.
inline double oracle_ll(const CoxFixture& f, double beta, bool efron) {
  std::set<double> event_times;
  for (std::size_t i = 0; i < f.time.size(); ++i) if (f.event[i]) event_times.insert(f.time[i]);
  double ll = 0.0;
  for (double t : event_times) {
    double risk = 0.0;
    double tied = 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < f.time.size(); ++i) {
      const double w = std::exp(beta * f.x[i]);
      if (f.time[i] >= t) risk += w;
      if (f.time[i] == t && f.event[i]) {
        tied += w;
        d += 1.0;
        ll += beta * f.x[i];
      }
    }
    for (int k = 0; k < static_cast<int>(d); ++k) {
      ll -= std::log(efron ? risk - (k / d) * tied : risk);
    }
  }
  return ll;
}

inline double grid_argmax(const CoxFixture& f) {
  double best_beta = -10.0;
  double best = -INFINITY;
  for (int k = -100000; k <= 100000; ++k) {
    const double b = k * 1e-4;
    const double v = oracle_ll(f, b, true);
    if (v > best) {
      best = v;
      best_beta = b;
    }
  }
  return best_beta;
}

inline SurvivalDataset to_dataset(const CoxFixture& f) {
  return make_dataset(f.time, f.event, {Variable::continuous("x")}, {f.x});
}

inline const std::vector<CoxFixture>& small_cox_fixtures() {
  static const std::vector<CoxFixture> cached = [] {
  std::vector<CoxFixture> out = {
      {{1, 2, 3, 4}, {true, true, true, true}, {1, 0, 1, 0}},
      {{1, 2, 3, 4, 5}, {true, false, true, true, false}, {0.5, 1.5, -0.3, 0.2, 1.0}},
      {{2, 2, 3, 5, 5, 7}, {true, true, false, true, true, true}, {1, 0, 1, 0, 1, 1}},
      {{1, 1, 1, 4, 4, 6, 8}, {true, true, false, true, true, false, true}, {2, -1, 0, 1, 0.5, 3, -2}},
      {{3, 1, 4, 1, 5, 9, 2, 6}, {true, true, true, false, true, true, false, true}, {1, 0, 0, 1, 1, 0, 1, 0}},
      {{10, 20, 20, 30, 40, 40, 40, 50}, {true, true, true, false, true, true, false, true},
       {0.1, 0.4, -0.2, 0.9, 0.3, -0.5, 0.0, 0.7}},
  };
  // Random small fixtures; keep those whose maximiser is interior.
  Rng rng(99);
  std::uniform_int_distribution<int> size(3, 8);
  std::uniform_int_distribution<int> time(1, 6);
  std::bernoulli_distribution ev(0.75);
  std::normal_distribution<double> cov(0.0, 1.0);
  for (auto& f : out) f.grid_beta = grid_argmax(f);
  while (out.size() < 24) {
    CoxFixture f;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      f.time.push_back(time(rng));
      f.event.push_back(ev(rng));
      f.x.push_back(std::round(cov(rng) * 10) / 10);
    }
    if (std::none_of(f.event.begin(), f.event.end(), [](bool e) { return e; })) continue;
    f.grid_beta = grid_argmax(f);
    if (std::abs(f.grid_beta) < 5.0) out.push_back(f);
  }
  return out;
  }();
  return cached;
}

}  // namespace polyp::testing
