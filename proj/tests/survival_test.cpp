#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <set>

#include <boost/math/special_functions/gamma.hpp>

#include "polyp/error.hpp"
#include "polyp/rng.hpp"
#include "polyp/stats.hpp"
#include "polyp/survival.hpp"
#include "oracles.hpp"

using namespace polyp;
using namespace polyp::testing;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("km examples") {
  const auto a = km_estimate(std::vector<double>{1, 2, 3}, {true, true, true});
  REQUIRE(a.points.size() == 4);
  CHECK(a.points[0].survival == 1.0);
  CHECK(a.points[0].n_at_risk == 3);
  CHECK(close_rel(a.points[1].survival, 2.0 / 3.0, 1e-12));
  CHECK(close_rel(a.points[2].survival, 1.0 / 3.0, 1e-12));
  CHECK(a.points[3].survival == 0.0);
  CHECK(a.median_time == 2.0);

  const auto b = km_estimate(std::vector<double>{5, 8}, {false, false});
  CHECK(b.points.size() == 1);
  CHECK(b.survival_at(100.0) == 1.0);
  CHECK_FALSE(b.median_time.has_value());

  // The case censored at 3 is still at risk at 3, so the factor there is 1 - 1/3.
  const std::vector<double> ct = {2, 3, 3, 5};
  const std::vector<bool> ce = {true, false, true, true};
  const auto c = km_estimate(ct, ce);
  REQUIRE(c.points.size() == 4);
  CHECK(c.points[1].time == 2.0);
  CHECK(close_rel(c.points[1].survival, 0.75, 1e-12));
  CHECK(close_rel(c.points[2].survival, km_oracle(ct, ce, 3.0), 1e-12));
  CHECK(close_rel(c.points[2].survival, 0.5, 1e-12));
  CHECK(c.points[2].n_at_risk == 3);
  CHECK(c.points[2].n_events == 1);
  CHECK(c.points[3].survival == 0.0);
  CHECK(c.survival_at(4.0) == c.points[2].survival);
  CHECK(c.median_time == 3.0);
}

TEST_CASE("km input errors") {
  CHECK(code_of([] { km_estimate(std::vector<double>{1, 2}, {true}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { km_estimate(std::vector<double>{0, 2}, {true, true}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("km matches the product-limit oracle on random data") {
  Rng rng(7);
  std::uniform_int_distribution<int> time(1, 30);
  std::bernoulli_distribution ev(0.6);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> t(40);
    std::vector<bool> e(40);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = time(rng);
      e[i] = ev(rng);
    }
    const auto curve = km_estimate(t, e);
    for (double q = 0.5; q <= 31; q += 0.5) CHECK(close_rel(curve.survival_at(q), km_oracle(t, e, q), 1e-12));

    // Row order does not matter.
    std::vector<std::size_t> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> t2;
    std::vector<bool> e2;
    for (auto i : perm) {
      t2.push_back(t[i]);
      e2.push_back(e[i]);
    }
    const auto again = km_estimate(t2, e2);
    REQUIRE(again.points.size() == curve.points.size());
    for (std::size_t k = 0; k < curve.points.size(); ++k) CHECK(again.points[k].survival == curve.points[k].survival);
  }
}

TEST_CASE("km without censoring is one minus the empirical cdf") {
  std::vector<double> t = {4, 1, 7, 7, 2, 9, 4, 4};
  const auto curve = km_estimate(t, std::vector<bool>(t.size(), true));
  for (const auto& p : curve.points) {
    const double below = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double x) { return x <= p.time; }));
    if (p.time > 0) CHECK(p.survival == doctest::Approx(1.0 - below / t.size()).epsilon(1e-14));
  }
}

TEST_CASE("log-rank hand example against the 2x2 tabulation") {
  SurvivalGroup a{{1, 2, 3}, {true, true, true}};
  SurvivalGroup b{{10, 20, 30}, {true, true, true}};
  const auto r = log_rank({a, b});
  CHECK(std::abs(r.chi_square - logrank_oracle(a, b)) < 1e-9);
  CHECK(r.degrees_of_freedom == 1);
  CHECK(r.p_value < 0.05);
}

TEST_CASE("log-rank of identical groups is zero") {
  SurvivalGroup a{{3, 5, 5, 8}, {true, false, true, true}};
  const auto r = log_rank({a, a});
  CHECK(r.chi_square == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("log-rank random two-group data against the oracle") {
  Rng rng(8);
  std::uniform_int_distribution<int> time(1, 15);
  std::bernoulli_distribution ev(0.7);
  for (int rep = 0; rep < 100; ++rep) {
    SurvivalGroup a;
    SurvivalGroup b;
    for (int i = 0; i < 12; ++i) {
      a.times.push_back(time(rng));
      a.events.push_back(ev(rng));
      b.times.push_back(time(rng) + 2);
      b.events.push_back(ev(rng));
    }
    const auto r = log_rank({a, b});
    CHECK(std::abs(r.chi_square - logrank_oracle(a, b)) < 1e-9);
    CHECK(std::abs(r.p_value - boost::math::gamma_q(0.5, r.chi_square / 2)) < 1e-9);
  }
}

TEST_CASE("log-rank with three groups") {
  SurvivalGroup a{{1, 2, 3}, {true, true, true}};
  SurvivalGroup b{{4, 5, 6}, {true, false, true}};
  SurvivalGroup c{{7, 8, 9}, {true, true, false}};
  const auto r = log_rank({a, b, c});
  CHECK(r.degrees_of_freedom == 2);
  CHECK(r.chi_square > 0.0);
  CHECK(std::abs(r.p_value - boost::math::gamma_q(1.0, r.chi_square / 2)) < 1e-9);

  // Three copies of the same group carry no signal.
  CHECK(log_rank({a, a, a}).chi_square == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("log-rank errors") {
  SurvivalGroup a{{1, 2}, {true, false}};
  CHECK(code_of([&] { log_rank({a}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { log_rank({a, SurvivalGroup{}}); }) == ErrorCode::InvalidArgument);
  SurvivalGroup censored{{1, 2}, {false, false}};
  CHECK(code_of([&] { log_rank({censored, censored}); }) == ErrorCode::NoEvents);
}

TEST_CASE("random halves of one sample rarely look different") {
  Rng rng(21);
  std::exponential_distribution<double> time(0.01);
  std::bernoulli_distribution ev(0.8);
  int tiny = 0;
  for (int rep = 0; rep < 100; ++rep) {
    SurvivalGroup a;
    SurvivalGroup b;
    for (int i = 0; i < 100; ++i) {
      auto& g = i % 2 ? a : b;
      g.times.push_back(std::ceil(time(rng)));
      g.events.push_back(ev(rng));
    }
    if (log_rank({a, b}).p_value < 0.01) ++tiny;
  }
  CHECK(tiny <= 5);
}

TEST_CASE("chi-square tail agrees with the reference implementation") {
  for (double df : {1.0, 2.0, 3.0, 5.0, 10.0}) {
    for (double x : {0.0, 0.01, 0.5, 1.0, 3.84, 10.0, 50.0, 200.0}) {
      const double want = boost::math::gamma_q(df / 2, x / 2);
      CHECK(std::abs(stats::chi_square_sf(x, df) - want) <= 1e-12 + 1e-9 * want);
    }
  }
  CHECK(stats::normal_two_sided_p(0.0) == doctest::Approx(1.0));
  CHECK(stats::normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("common censor examples") {
  auto ds = make_dataset({2000, 1950, 1200, 500}, {false, true, true, false});
  const auto cut = apply_common_censor(ds, 0.95);
  CHECK(cut.time == std::vector<double>{1900, 1900, 1200, 500});
  CHECK(cut.event == std::vector<bool>{false, false, true, false});

  const auto same = apply_common_censor(ds, 1.0);
  CHECK(same.time == ds.time);
  CHECK(same.event == ds.event);

  CHECK(code_of([&] { apply_common_censor(ds, 0.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { apply_common_censor(ds, 1.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("common censor never lengthens or revives") {
  Rng rng(4);
  std::uniform_real_distribution<double> time(1, 3000);
  std::bernoulli_distribution ev(0.5);
  std::vector<double> t;
  std::vector<bool> e;
  for (int i = 0; i < 200; ++i) {
    t.push_back(time(rng));
    e.push_back(ev(rng));
  }
  const auto ds = make_dataset(t, e);
  for (double q : {0.5, 0.8, 0.95}) {
    const auto cut = apply_common_censor(ds, q);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(cut.time[i] <= t[i]);
      if (!e[i]) CHECK_FALSE(cut.event[i]);
    }
  }
}

TEST_CASE("screening admits separating factors only") {
  // "signal" splits early events from late; "noise" gives both levels the same times.
  std::vector<double> t;
  std::vector<bool> e;
  std::vector<double> signal;
  std::vector<double> noise;
  std::vector<double> flat;
  for (int i = 0; i < 40; ++i) {
    const bool early = i < 20;
    t.push_back(early ? 10 + i : 200 + i);
    e.push_back(true);
    signal.push_back(early ? 1 : 0);
    noise.push_back(i % 2);
    flat.push_back(0);
  }
  // Make the noise groups exact copies: pair (2k, 2k+1) share a time.
  for (int i = 0; i < 40; i += 2) t[static_cast<std::size_t>(i + 1)] = t[static_cast<std::size_t>(i)];
  auto ds = make_dataset(t, e,
                         {Variable::factor("signal", {"A", "B"}), Variable::factor("noise", {"A", "B"}),
                          Variable::factor("flat", {"A", "B"}), Variable::continuous("age")},
                         {signal, noise, flat, std::vector<double>(40, 50.0)});
  const auto report = screen_variables(ds, {"signal", "noise", "flat"}, 0.2);
  CHECK(report.admitted() == std::vector<std::string>{"signal"});
  REQUIRE(report.entries.size() == 3);
  CHECK(report.entries[1].test->chi_square == 0.0);
  CHECK_FALSE(report.entries[2].test.has_value());
  CHECK_FALSE(report.entries[2].note.empty());

  const auto all = screen_variables(ds, {"signal", "noise", "flat"}, 1.0 + 1e-12);
  CHECK(all.admitted() == std::vector<std::string>{"signal", "noise"});
}

TEST_CASE("groups_by_factor skips empty levels") {
  auto ds = make_dataset({1, 2, 3}, {true, true, false}, {Variable::factor("g", {"A", "B", "C"})}, {{0, 2, 2}});
  const auto groups = groups_by_factor(ds, "g");
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].first == "A");
  CHECK(groups[1].first == "C");
  CHECK(groups[1].second.times == std::vector<double>{2, 3});
}
