// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "polyp/cox.hpp"
#include "polyp/forest.hpp"
#include "polyp/io.hpp"
#include "polyp/pipeline.hpp"
#include "polyp/report_parser.hpp"
#include "polyp/survival.hpp"
#include "polyp/synth.hpp"

using namespace polyp;
using namespace polyp::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---- 1 ------------------------------------------------------------------------

Outcome km_examples() {
  struct Example {
    std::vector<double> t;
    std::vector<bool> e;
  };
  const std::vector<Example> examples = {
      {{1, 2, 3}, {true, true, true}},
      {{5, 8}, {false, false}},
      {{2, 3, 3, 5}, {true, false, true, true}},
  };
  double worst = 0.0;
  bool shape = true;
  for (const auto& ex : examples) {
    const auto curve = km_estimate(ex.t, ex.e);
    for (const auto& p : curve.points) {
      const double want = km_oracle(ex.t, ex.e, p.time);
      if (want != p.survival) worst = std::max(worst, std::abs(p.survival - want) / std::max(want, 1e-300));
    }
    for (double t : ex.t) {
      const double want = km_oracle(ex.t, ex.e, t);
      if (want != curve.survival_at(t)) worst = std::max(worst, std::abs(curve.survival_at(t) - want) / std::max(want, 1e-300));
    }
  }
  // Values written out by hand as well.
  const auto a = km_estimate(examples[0].t, examples[0].e);
  shape = shape && close_rel(a.survival_at(1), 2.0 / 3.0, 1e-12) && close_rel(a.survival_at(2), 1.0 / 3.0, 1e-12) &&
          a.survival_at(3) == 0.0;
  const auto b = km_estimate(examples[1].t, examples[1].e);
  shape = shape && b.points.size() == 1 && b.survival_at(8) == 1.0;
  const auto c = km_estimate(examples[2].t, examples[2].e);
  shape = shape && c.survival_at(2) == 0.75 && c.survival_at(3) == 0.5 && c.survival_at(5) == 0.0;

  // Runtime: best of many repetitions of all three estimates.
  double best = 1e9;
  for (int rep = 0; rep < 200; ++rep) {
    const auto t0 = Clock::now();
    for (const auto& ex : examples) {
      volatile double sink = km_estimate(ex.t, ex.e).points.back().survival;
      (void)sink;
    }
    best = std::min(best, seconds_since(t0));
  }
  return {shape && worst < 1e-12 && best < 1e-3,
          fmt("max rel error %.1e, S(3) with censoring = %.4g, runtime %.1f us", worst, c.survival_at(3), best * 1e6)};
}

// ---- 2 ------------------------------------------------------------------------

Outcome logrank_oracle_check() {
  SurvivalGroup a{{1, 2, 3}, {true, true, true}};
  SurvivalGroup b{{10, 20, 30}, {true, true, true}};
  const auto r = log_rank({a, b});
  const double want = logrank_oracle(a, b);
  const double same = log_rank({a, a}).chi_square;
  return {std::abs(r.chi_square - want) < 1e-9 && same == 0.0 && r.p_value < 0.05,
          fmt("chi2 %.12g vs tabulation %.12g, p %.4g, identical groups chi2 %g", r.chi_square, want, r.p_value, same)};
}

// ---- 3 ------------------------------------------------------------------------

Outcome cox_oracle() {
  double worst_beta = 0.0;
  double worst_grad = 0.0;
  bool ties_equal = true;
  int tie_free = 0;
  const auto& fixtures = small_cox_fixtures();
  for (const auto& f : fixtures) {
    const auto ds = to_dataset(f);
    const auto fit = fit_cox(ds, {"x"});
    worst_beta = std::max(worst_beta, std::abs(fit.coefficients(0) - f.grid_beta));
    const PartialLikelihood pl(build_design(ds, {"x"}).x, ds.time, ds.event);
    worst_grad = std::max(worst_grad, std::abs(pl.derivatives(fit.coefficients).gradient(0)));

    std::vector<double> event_times;
    for (std::size_t i = 0; i < f.time.size(); ++i) if (f.event[i]) event_times.push_back(f.time[i]);
    std::sort(event_times.begin(), event_times.end());
    if (std::adjacent_find(event_times.begin(), event_times.end()) != event_times.end()) continue;
    ++tie_free;
    CoxConfig breslow;
    breslow.ties = Ties::Breslow;
    ties_equal = ties_equal && fit_cox(ds, {"x"}, breslow).coefficients(0) == fit.coefficients(0);
    for (double beta : {-1.5, 0.0, 0.4, 2.0}) {
      Eigen::VectorXd v(1);
      v(0) = beta;
      ties_equal = ties_equal && partial_log_likelihood(v, ds, {"x"}, Ties::Efron) ==
                                     partial_log_likelihood(v, ds, {"x"}, Ties::Breslow);
    }
  }
  return {worst_beta < 2e-4 && worst_grad < 1e-6 && ties_equal && tie_free > 0,
          fmt("%zu fixtures: max |beta - grid| %.1e, max |score| %.1e, Efron==Breslow on %d tie-free: %s",
              fixtures.size(), worst_beta, worst_grad, tie_free, ties_equal ? "yes" : "no")};
}

// ---- 4 ------------------------------------------------------------------------

Outcome planted_recovery() {
  int inside = 0;
  double slowest = 0.0;
  double lo = 1e9;
  double hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ds = synthetic_dataset(planted_config(seed, 1000, "gender:Male", 2.0));
    const auto t0 = Clock::now();
    const auto fit = fit_cox(ds, {"gender"});
    slowest = std::max(slowest, seconds_since(t0));
    const double rr = fit.risk_ratios.at(static_cast<std::size_t>(fit.column_index("gender:Male"))).rr;
    lo = std::min(lo, rr);
    hi = std::max(hi, rr);
    if (rr >= 1.7 && rr <= 2.3) ++inside;
  }
  return {inside >= 18 && slowest < 10.0,
          fmt("rr in [1.7, 2.3] for %d/20 seeds (range %.3f..%.3f), slowest fit %.3f s", inside, lo, hi, slowest)};
}

// ---- 5 ------------------------------------------------------------------------

Outcome parser_round_trip() {
  // Visit summaries from the generator, rendered in rotating styles.
  SynthConfig config;
  config.n_patients = 6000;
  config.seed = 2024;
  const auto cohort = generate_cohort(config);
  Rng rng = stream_rng(2024, 5);
  int total = 0;
  int exact = 0;
  int per_style[3] = {0, 0, 0};
  for (const auto& h : cohort.histories) {
    for (const auto& v : h.visits) {
      if (total == 10000) break;
      const auto style = static_cast<ReportStyle>(total % 3);
      const auto text = generate_report_text(v.summary, style, rng);
      ++per_style[total % 3];
      ++total;
      if (summaries_match(aggregate_visit(parse_text(text)), v.summary)) ++exact;
    }
  }
  int fixture_ok = 0;
  const auto cases = load_fixture("parser_edge_cases.json");
  for (const auto& c : cases) {
    VisitSummary want;
    want.polyp_count = c.at("polyp_count").get<int>();
    if (!c.at("mean_size_mm").is_null()) want.mean_size_mm = c.at("mean_size_mm").get<double>();
    if (!c.at("max_size_mm").is_null()) want.max_size_mm = c.at("max_size_mm").get<double>();
    for (const auto& [key, n] : c.at("locations").items()) want.location_counts[*site_from_key(key)] = n.get<int>();
    if (summaries_match(aggregate_visit(parse_text(c.at("text").get<std::string>())), want)) ++fixture_ok;
  }
  return {total == 10000 && exact == total && fixture_ok == static_cast<int>(cases.size()) && cases.size() == 50,
          fmt("generated %d/%d exact (plain %d, ranged %d, words %d); edge fixture %d/%zu", exact, total,
              per_style[0], per_style[1], per_style[2], fixture_ok, cases.size())};
}

// ---- 6 ------------------------------------------------------------------------

Outcome cohort_fixture() {
  const auto cases = load_fixture("cohort_cases.json");
  const auto got = run_cohort_fixture(cases);
  int ok = 0;
  std::string wrong;
  for (const auto& c : cases) {
    const auto id = c.at("id").get<std::string>();
    auto it = got.find(id);
    bool match = it != got.end() && it->second.status == c.at("expect").get<std::string>();
    if (match && it->second.status == "Eligible") {
      match = it->second.time_days == c.at("time_days").get<int>() && it->second.event == c.at("event").get<bool>();
    }
    if (match) {
      ++ok;
    } else {
      wrong += " " + id;
    }
  }
  return {ok == static_cast<int>(cases.size()) && cases.size() == 30 && got.size() == cases.size(),
          fmt("%d/%zu cases match%s", ok, cases.size(), wrong.empty() ? "" : (", wrong:" + wrong).c_str())};
}

// ---- 7 ------------------------------------------------------------------------

Outcome null_forest() {
  int inside = 0;
  double lo = 1.0;
  double hi = 0.0;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ds = synthetic_dataset(planted_config(seed, 500, "", 1.0));
    ForestConfig config;
    config.n_trees = 1000;
    config.seed = seed;
    const auto t0 = Clock::now();
    const auto forest = grow_forest(ds, config);
    const double err = oob_concordance_error(forest, ds);
    slowest = std::max(slowest, seconds_since(t0));
    lo = std::min(lo, err);
    hi = std::max(hi, err);
    if (err >= 0.45 && err <= 0.55) ++inside;
  }
  return {inside == 10 && slowest < 60.0,
          fmt("OOB error in [0.45, 0.55] for %d/10 seeds (range %.3f..%.3f), slowest %.1f s", inside, lo, hi, slowest)};
}

// ---- 8 ------------------------------------------------------------------------

Outcome signal_forest() {
  int low_error = 0;
  int good_auc = 0;
  int oracle_auc = 0;
  int top_vimp = 0;
  double auc_sum = 0.0;
  double oracle_sum = 0.0;
  double err_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto config = planted_config(seed, 1000, "gender:Male", 2.0);
    const auto cohort = generate_cohort(config);
    std::map<std::string, double> true_risk;
    for (const auto& t : cohort.truth) true_risk[t.patient_id] = t.linear_predictor;
    std::vector<PatientCase> cases;
    for (const auto& h : filter_eligible(cohort.histories).eligible) cases.push_back(pair_baseline_outcome(h));
    const auto ds = assemble_dataset(cases, base_schema(), {}).dataset;

    ForestConfig fc;
    fc.n_trees = 1000;
    fc.seed = seed;
    const auto forest = grow_forest(ds, fc);
    const double err = oob_concordance_error(forest, ds);
    err_sum += err;
    if (err < 0.45) ++low_error;

    std::vector<double> event_times;
    for (std::size_t i = 0; i < ds.size(); ++i) if (ds.event[i]) event_times.push_back(ds.time[i]);
    std::sort(event_times.begin(), event_times.end());
    const double horizon = sorted_quantile(event_times, 0.5);
    const double auc = time_dependent_auc(oob_mortality(forest, ds), ds, horizon).auc;
    auc_sum += auc;
    if (auc > 0.60) ++good_auc;

    // The generator's own risk score bounds what any model can reach.
    std::vector<double> truth;
    for (const auto& id : ds.ids) truth.push_back(true_risk.at(id));
    const double best_possible = time_dependent_auc(truth, ds, horizon).auc;
    oracle_sum += best_possible;
    if (best_possible > 0.60) ++oracle_auc;

    Rng rng = stream_rng(seed, 0x56494d50);
    auto vimp = variable_importance(forest, ds, rng);
    std::stable_sort(vimp.begin(), vimp.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    if (vimp.front().first == "gender") ++top_vimp;
  }
  return {low_error >= 18 && good_auc >= 18 && top_vimp >= 15,
          fmt("OOB error < 0.45 in %d/20 (mean %.3f); AUC > 0.60 in %d/20 (mean %.3f); true-risk AUC > 0.60 in "
              "%d/20 (mean %.3f); planted variable ranked first by VIMP in %d/20",
              low_error, err_sum / 20, good_auc, auc_sum / 20, oracle_auc, oracle_sum / 20, top_vimp)};
}

// ---- 9 ------------------------------------------------------------------------

Outcome split_correctness() {
  const auto ds = synthetic_dataset(planted_config(9, 1000, "gender:Male", 2.0));
  ForestConfig config;
  config.n_trees = 60;
  config.seed = 9;
  const auto forest = grow_forest(ds, config);
  struct Ref {
    std::size_t tree;
    std::size_t node;
  };
  std::vector<Ref> splits;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    for (std::size_t n = 0; n < forest.trees[t].nodes.size(); ++n) {
      if (forest.trees[t].nodes[n].split) splits.push_back({t, n});
    }
  }
  Rng rng(123);
  std::shuffle(splits.begin(), splits.end(), rng);
  if (splits.size() > 1000) splits.resize(1000);
  std::sort(splits.begin(), splits.end(), [](const Ref& a, const Ref& b) { return a.tree < b.tree; });

  int equal = 0;
  std::size_t current = SIZE_MAX;
  std::vector<std::vector<std::size_t>> members;
  for (const auto& ref : splits) {
    const auto& tree = forest.trees[ref.tree];
    if (ref.tree != current) {
      members = in_bag_node_samples(tree, ds);
      current = ref.tree;
    }
    const auto& node = tree.nodes[ref.node];
    SurvivalGroup l;
    SurvivalGroup r;
    for (std::size_t i : members[static_cast<std::size_t>(node.left)]) {
      l.times.push_back(ds.time[i]);
      l.events.push_back(ds.event[i]);
    }
    for (std::size_t i : members[static_cast<std::size_t>(node.right)]) {
      r.times.push_back(ds.time[i]);
      r.events.push_back(ds.event[i]);
    }
    if (node.split->statistic == log_rank({l, r}).chi_square) ++equal;
  }
  return {splits.size() == 1000 && equal == 1000,
          fmt("%d/%zu sampled splits bit-identical to the log-rank test", equal, splits.size())};
}

// ---- 10 -----------------------------------------------------------------------

Outcome pipeline_determinism() {
  const auto root = fs::temp_directory_path() / "polyp_acceptance_determinism";
  fs::remove_all(root);
  nlohmann::json j = {{"synth", {{"n_patients", 1000}, {"planted_log_hazard_ratios", {{"gender:Male", std::log(2.0)}}},
                                 {"missingness_rate", 0.03}}},
                      {"forest", {{"n_trees", 200}}},
                      {"seed", 17}};
  std::vector<fs::path> dirs = {root / "a", root / "b"};
  for (const auto& d : dirs) {
    j["output_dir"] = d.string();
    if (run_pipeline(config_from_json(j)).exit_code != 0) return {false, "pipeline run failed"};
  }
  int files = 0;
  int identical = 0;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto rel = fs::relative(e.path(), dirs[0]);
    if (fs::exists(dirs[1] / rel) && io::read_file(e.path()) == io::read_file(dirs[1] / rel)) ++identical;
  }
  fs::remove_all(root);
  return {files > 10 && identical == files, fmt("%d/%d CSV files byte-identical across two runs", identical, files)};
}

// ---- 11 -----------------------------------------------------------------------

Outcome screening_fidelity() {
  std::vector<double> t;
  std::vector<bool> e;
  std::vector<double> separating;
  std::vector<double> identical;
  for (int i = 0; i < 60; ++i) {
    // Pairs share a time; the identical-groups factor splits every pair.
    const int pair = i / 2;
    const bool early = pair < 15;
    t.push_back(early ? 20 + pair : 400 + pair);
    e.push_back(pair % 5 != 4);
    separating.push_back(early ? 1 : 0);
    identical.push_back(i % 2);
  }
  const auto ds = make_dataset(t, e, {Variable::factor("separating", {"No", "Yes"}), Variable::factor("identical", {"A", "B"})},
                               {separating, identical});
  const auto report = screen_variables(ds, {"separating", "identical"}, 0.2);
  const auto admitted = report.admitted();
  return {admitted == std::vector<std::string>{"separating"},
          fmt("p(separating) = %.2e, p(identical) = %.3f, admitted %zu", report.entries[0].test->p_value,
              report.entries[1].test->p_value, admitted.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Kaplan-Meier oracle", km_examples},
      {"log-rank oracle", logrank_oracle_check},
      {"Cox oracle", cox_oracle},
      {"planted hazard recovery", planted_recovery},
      {"parser round trip", parser_round_trip},
      {"cohort rules", cohort_fixture},
      {"forest null behaviour", null_forest},
      {"forest signal behaviour", signal_forest},
      {"split correctness", split_correctness},
      {"pipeline determinism", pipeline_determinism},
      {"screening fidelity", screening_fidelity},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& ex) {
      out = {false, std::string("threw: ") + ex.what()};
    }
    if (!out.pass) ++failed;
    std::printf("criterion %2zu: %s  %s: %s [%.1f s]\n", k + 1, out.pass ? "PASS" : "FAIL", criteria[k].first.c_str(),
                out.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
