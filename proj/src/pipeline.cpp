#include "polyp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <initializer_list>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "polyp/cox.hpp"
#include "polyp/error.hpp"
#include "polyp/io.hpp"
#include "polyp/survival.hpp"

namespace polyp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr std::uint64_t kImportanceStream = 0x56494d50;  // "VIMP"

// ---- config reading ---------------------------------------------------------

Error config_error(const std::string& what) { return Error(ErrorCode::InvalidConfig, what); }

void expect_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw config_error("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  const std::string name = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw config_error(name + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw config_error(name + " must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned() && it->get<std::int64_t>() < 0) throw config_error(name + " must be non-negative");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw config_error(name + " must be a number");
  } else {
    if (!it->is_string()) throw config_error(name + " must be a string");
  }
  out = it->get<T>();
}

SynthConfig synth_from_json(const json& j, std::uint64_t default_seed) {
  expect_object(j, "synth",
                {"n_patients", "baseline_hazard_per_day", "planted_log_hazard_ratios", "censor_horizon_days",
                 "missingness_rate", "seed", "report_style", "cm_probability", "min_visit_gap_days",
                 "max_visit_gap_days"});
  SynthConfig s;
  s.seed = default_seed;
  read(j, "n_patients", s.n_patients, "synth");
  read(j, "baseline_hazard_per_day", s.baseline_hazard_per_day, "synth");
  read(j, "censor_horizon_days", s.censor_horizon_days, "synth");
  read(j, "missingness_rate", s.missingness_rate, "synth");
  read(j, "seed", s.seed, "synth");
  read(j, "cm_probability", s.cm_probability, "synth");
  read(j, "min_visit_gap_days", s.min_visit_gap_days, "synth");
  read(j, "max_visit_gap_days", s.max_visit_gap_days, "synth");
  if (auto it = j.find("planted_log_hazard_ratios"); it != j.end()) {
    if (!it->is_object()) throw config_error("synth.planted_log_hazard_ratios must be an object");
    for (const auto& [key, value] : it->items()) {
      if (!value.is_number()) throw config_error("planted effect '" + key + "' must be a number");
      s.planted_log_hazard_ratios[key] = value.get<double>();
    }
  }
  if (auto it = j.find("report_style"); it != j.end()) {
    expect_object(*it, "synth.report_style", {"plain", "ranged", "number_words"});
    read(*it, "plain", s.styles.plain, "synth.report_style");
    read(*it, "ranged", s.styles.ranged, "synth.report_style");
    read(*it, "number_words", s.styles.number_words, "synth.report_style");
  }
  validate(s);
  return s;
}

// ---- dataset helpers --------------------------------------------------------

SurvivalDataset select_variables(const SurvivalDataset& ds, const std::vector<std::string>& names) {
  SurvivalDataset out;
  out.ids = ds.ids;
  out.time = ds.time;
  out.event = ds.event;
  out.dropped_incomplete = ds.dropped_incomplete;
  for (const auto& name : names) {
    const std::size_t v = ds.variable_index(name);
    out.schema.push_back(ds.schema[v]);
    out.columns.push_back(ds.columns[v]);
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Admitted factors in screening order, skipping tertile variants and any
// variable whose columns are linear combinations of those already kept.
std::vector<std::string> select_cox_variables(const SurvivalDataset& ds, const ScreeningReport& screening,
                                              std::vector<std::string>& notes) {
  std::vector<std::string> kept;
  Eigen::Index rank = 0;
  for (const std::string& name : screening.admitted()) {
    if (ends_with(name, "_tertile")) continue;
    std::vector<std::string> trial = kept;
    trial.push_back(name);
    const DesignMatrix design = build_design(ds, trial);
    Eigen::MatrixXd x = design.x.rowwise() - design.x.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-9);
    if (qr.rank() == x.cols() && x.cols() > rank) {
      kept = std::move(trial);
      rank = x.cols();
    } else {
      notes.push_back(name + " is collinear with earlier variables and was left out");
    }
  }
  return kept;
}

// ---- svg --------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string svg_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label, bool steps) {
  constexpr double w = 640, h = 420, left = 60, right = 160, top = 40, bottom = 50;
  double x_max = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) x_max = std::max(x_max, p.first);
  }
  if (x_max <= 0.0) x_max = 1.0;
  auto px = [&](double x) { return left + (w - left - right) * x / x_max; };
  auto py = [&](double y) { return top + (h - top - bottom) * (1.0 - y); };
  static constexpr std::array<const char*, 6> colours = {"#1f77b4", "#d62728", "#2ca02c",
                                                         "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<text x=\"" << left << "\" y=\"24\" font-size=\"16\">" << title << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
      << h - top - bottom << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << left << "\" y=\"" << h - 12 << "\" font-size=\"12\">" << x_label << " (0 to "
      << io::format_double(x_max) << ")</text>\n";
  out << "<text x=\"12\" y=\"" << top + 12 << "\" font-size=\"12\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = colours[k % colours.size()];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i) {
      const auto [x, y] = series[k].points[i];
      if (steps && i > 0) out << px(x) << ',' << py(series[k].points[i - 1].second) << ' ';
      out << px(x) << ',' << py(y) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 16 * (k + 1) << "\" font-size=\"12\" fill=\""
        << colour << "\">" << series[k].name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// ---- manifest ---------------------------------------------------------------

struct StageRecord {
  bool completed = false;
  std::vector<std::string> files;
};

struct Manifest {
  std::string config_hash;
  std::map<std::string, StageRecord> stages;
};

std::optional<Manifest> load_manifest(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    const json j = io::read_json(path);
    Manifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [name, rec] : j.at("stages").items()) {
      m.stages[name] = {rec.at("completed").get<bool>(), rec.at("files").get<std::vector<std::string>>()};
    }
    return m;
  } catch (const std::exception&) {
    return std::nullopt;  // an unreadable manifest only disables resuming
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- stages -----------------------------------------------------------------

class Runner {
 public:
  Runner(const PipelineConfig& config, const RunOptions& options) : config_(config), options_(options) {}

  std::vector<std::string> run(Stage stage) {
    written_.clear();
    switch (stage) {
      case Stage::Parse: parse(); break;
      case Stage::Cohort: cohort(); break;
      case Stage::Screen: screen(); break;
      case Stage::Cox: cox(); break;
      case Stage::Forest: forest(); break;
    }
    return written_;
  }

 private:
  fs::path out(const std::string& rel) const { return config_.output_dir / rel; }

  void put_csv(const std::string& rel, const io::CsvTable& table) {
    io::write_file(out(rel), io::to_csv(table));
    written_.push_back(rel);
  }
  void put_json(const std::string& rel, const ordered_json& j) {
    io::write_json(out(rel), j);
    written_.push_back(rel);
  }
  void put_text(const std::string& rel, const std::string& text) {
    io::write_file(out(rel), text);
    written_.push_back(rel);
  }

  fs::path require(const std::string& rel, Stage producer) const {
    const fs::path p = out(rel);
    if (!fs::exists(p)) {
      throw Error(ErrorCode::Io, "missing " + rel + "; run the " + to_string(producer) + " stage first");
    }
    return p;
  }

  SurvivalDataset load_dataset() const {
    const auto schema = analysis_schema();
    return io::dataset_from_table(io::read_csv(require("dataset.csv", Stage::Cohort), io::dataset_header(schema)),
                                  schema);
  }

  void parse() {
    std::vector<ColonoscopyReport> reports;
    if (config_.synth) {
      const SynthCohort cohort = generate_cohort(*config_.synth);
      put_text("inputs/reports.jsonl", io::reports_to_jsonl(cohort.reports));
      put_csv("inputs/demographics.csv", io::demographics_table(cohort.histories));
      put_csv("inputs/ground_truth.csv", io::ground_truth_table(cohort.truth));
      reports = cohort.reports;
    } else {
      reports = io::parse_reports_jsonl(io::read_file(config_.input->reports));
    }

    std::vector<io::ExtractedVisit> visits(reports.size());
    const std::size_t n_threads =
        std::clamp<std::size_t>(static_cast<std::size_t>(config_.threads), 1, std::max<std::size_t>(1, reports.size()));
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        visits[i] = {reports[i].patient_id, reports[i].visit_date, aggregate_visit(parse_report(reports[i]))};
      }
    };
    std::vector<std::thread> pool;
    const std::size_t chunk = (reports.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 1; t < n_threads; ++t) {
      pool.emplace_back(work, std::min(reports.size(), t * chunk), std::min(reports.size(), (t + 1) * chunk));
    }
    work(0, std::min(reports.size(), chunk));
    for (auto& th : pool) th.join();
    put_csv("extraction.csv", io::extraction_table(visits));
  }

  void cohort() {
    const auto visits =
        io::extraction_from_table(io::read_csv(require("extraction.csv", Stage::Parse), io::extraction_header()));
    const fs::path demographics_path =
        config_.synth ? require("inputs/demographics.csv", Stage::Parse) : config_.input->demographics;
    const auto records = io::demographics_from_table(io::read_csv(demographics_path, io::demographics_header()));
    const auto histories = io::join_histories(visits, records);

    const EligibilityResult eligibility = filter_eligible(histories, config_.cohort);
    std::vector<PatientCase> cases;
    for (const auto& h : eligibility.eligible) cases.push_back(pair_baseline_outcome(h, config_.cohort));
    AssembledCohort assembled = assemble_dataset(cases);

    std::vector<Exclusion> excluded = eligibility.excluded;
    excluded.insert(excluded.end(), assembled.dropped.begin(), assembled.dropped.end());
    put_csv("dataset.csv", io::dataset_table(assembled.dataset));
    put_csv("exclusions.csv", io::exclusion_table(excluded));
  }

  void screen() {
    const SurvivalDataset ds = apply_common_censor(load_dataset(), config_.censor_quantile);
    std::vector<std::string> factors;
    for (const auto& v : ds.schema) {
      if (v.is_factor()) factors.push_back(v.name);
    }
    const ScreeningReport report = screen_variables(ds, factors, config_.screening_threshold);
    put_json("screening.json", io::screening_json(report));

    for (const auto& entry : report.entries) {
      if (!entry.test) continue;
      io::CsvTable table{io::km_header(), {}};
      std::vector<Series> series;
      for (const auto& [level, group] : groups_by_factor(ds, entry.variable)) {
        const KMCurve curve = km_estimate(group.times, group.events);
        io::append_km_rows(table, curve, level);
        Series s{level, {}};
        for (const auto& p : curve.points) s.points.emplace_back(p.time, p.survival);
        series.push_back(std::move(s));
      }
      put_csv("km/" + entry.variable + ".csv", table);
      if (options_.render_svg) {
        put_text("km/" + entry.variable + ".svg",
                 svg_plot(series, "Kaplan-Meier: " + entry.variable, "days", "survival", true));
      }
    }
  }

  void cox() {
    const SurvivalDataset ds = load_dataset();
    const ScreeningReport screening = io::screening_from_json(io::read_json(require("screening.json", Stage::Screen)));
    std::vector<std::string> notes;
    const auto variables = select_cox_variables(ds, screening, notes);

    ordered_json summary;
    if (variables.empty()) {
      put_csv("cox_forest_plot.csv", {{"covariate", "rr", "ci_low", "ci_high", "p"}, {}});
      summary["variables"] = ordered_json::array();
      summary["note"] = "no variable passed screening";
    } else {
      const CoxFit fit = fit_cox(ds, variables);
      put_csv("cox_forest_plot.csv", io::cox_forest_plot_table(fit));
      summary["variables"] = variables;
      const ordered_json fit_json = io::cox_fit_json(fit);
      for (const auto& [key, value] : fit_json.items()) summary[key] = value;
    }
    summary["notes"] = notes;
    put_json("cox_fit.json", summary);
  }

  std::vector<std::string> forest_variable_names() const {
    if (!config_.forest_variables.empty()) return config_.forest_variables;
    std::vector<std::string> names;
    for (const auto& v : base_schema()) names.push_back(v.name);
    return names;
  }

  void forest() {
    const SurvivalDataset ds = select_variables(load_dataset(), forest_variable_names());
    ForestConfig fc = config_.forest;
    fc.seed = config_.seed;
    fc.n_threads = config_.threads;
    const Forest forest = grow_forest(ds, fc);
    const std::vector<double> mortality = oob_mortality(forest, ds);
    const double oob_error = 1.0 - harrell_concordance(ds.time, ds.event, mortality);

    Rng rng = stream_rng(config_.seed, kImportanceStream);
    auto vimp = variable_importance(forest, ds, rng);
    std::stable_sort(vimp.begin(), vimp.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    const RocResult roc = time_dependent_auc(mortality, ds, config_.auc_horizon_days);

    ordered_json fit;
    fit["n_cases"] = ds.size();
    fit["n_events"] = ds.num_events();
    fit["variables"] = forest_variable_names();
    fit["n_trees"] = fc.n_trees;
    fit["mtry"] = fc.resolved_mtry(ds.num_variables());
    fit["min_node_size"] = fc.min_node_size;
    fit["min_node_events"] = fc.min_node_events;
    fit["n_split_candidates"] = fc.n_split_candidates;
    fit["seed"] = fc.seed;
    fit["oob_concordance_error"] = oob_error;
    fit["model_file"] = "forest_model.json";
    put_json("forest_fit.json", fit);
    put_text("forest_model.json", forest_to_json(forest).dump() + "\n");
    put_csv("roc.csv", io::roc_table(roc));
    ordered_json auc;
    auc["horizon_days"] = config_.auc_horizon_days;
    auc["auc"] = roc.auc;
    auc["positives"] = roc.positives;
    auc["negatives"] = roc.negatives;
    auc["score"] = "oob_mortality";
    put_json("auc.json", auc);
    put_csv("vimp.csv", io::vimp_table(vimp));
    if (options_.render_svg) {
      Series s{"AUC " + io::format_double(std::round(roc.auc * 1000.0) / 1000.0), {}};
      for (const auto& p : roc.points) s.points.emplace_back(p.fpr, p.tpr);
      put_text("roc.svg", svg_plot({s}, "ROC at " + io::format_double(config_.auc_horizon_days) + " days",
                                   "false positive rate", "true positive rate", false));
    }
  }

  const PipelineConfig& config_;
  const RunOptions& options_;
  std::vector<std::string> written_;
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Parse: return "parse";
    case Stage::Cohort: return "cohort";
    case Stage::Screen: return "screen";
    case Stage::Cox: return "cox";
    case Stage::Forest: return "forest";
  }
  return "";
}

std::optional<Stage> stage_from_string(const std::string& name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  expect_object(j, "config",
                {"input", "synth", "stages", "cohort", "screening_threshold", "censor_quantile", "forest",
                 "auc_horizon_days", "output_dir", "seed", "threads"});
  PipelineConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  read(j, "screening_threshold", c.screening_threshold, "config");
  read(j, "censor_quantile", c.censor_quantile, "config");
  read(j, "auc_horizon_days", c.auc_horizon_days, "config");
  std::string out_dir = c.output_dir.string();
  read(j, "output_dir", out_dir, "config");
  c.output_dir = out_dir;

  if (j.contains("input") == j.contains("synth")) {
    throw config_error("config needs exactly one of 'input' or 'synth'");
  }
  if (auto it = j.find("input"); it != j.end()) {
    expect_object(*it, "input", {"reports", "demographics"});
    std::string reports, demographics;
    read(*it, "reports", reports, "input");
    read(*it, "demographics", demographics, "input");
    if (reports.empty() || demographics.empty()) {
      throw config_error("input needs both 'reports' and 'demographics'");
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    c.input = InputPaths{resolve(reports), resolve(demographics)};
  }
  if (auto it = j.find("synth"); it != j.end()) c.synth = synth_from_json(*it, c.seed);

  if (auto it = j.find("stages"); it != j.end()) {
    expect_object(*it, "stages", {"parse", "cohort", "screen", "cox", "forest"});
    for (Stage s : kAllStages) read(*it, to_string(s).c_str(), c.stages[static_cast<std::size_t>(s)], "stages");
  }
  if (auto it = j.find("cohort"); it != j.end()) {
    expect_object(*it, "cohort", {"min_separation_days", "faulty_gap_days"});
    read(*it, "min_separation_days", c.cohort.min_separation_days, "cohort");
    read(*it, "faulty_gap_days", c.cohort.faulty_gap_days, "cohort");
  }
  if (auto it = j.find("forest"); it != j.end()) {
    expect_object(*it, "forest",
                  {"n_trees", "mtry", "min_node_events", "min_node_size", "n_split_candidates", "variables"});
    read(*it, "n_trees", c.forest.n_trees, "forest");
    read(*it, "mtry", c.forest.mtry, "forest");
    read(*it, "min_node_events", c.forest.min_node_events, "forest");
    read(*it, "min_node_size", c.forest.min_node_size, "forest");
    read(*it, "n_split_candidates", c.forest.n_split_candidates, "forest");
    if (auto v = it->find("variables"); v != it->end()) {
      if (!v->is_array() || std::any_of(v->begin(), v->end(), [](const json& e) { return !e.is_string(); })) {
        throw config_error("forest.variables must be a list of names");
      }
      c.forest_variables = v->get<std::vector<std::string>>();
    }
  }

  if (!(c.screening_threshold > 0.0 && c.screening_threshold <= 1.0)) {
    throw config_error("screening_threshold must lie in (0, 1]");
  }
  if (!(c.censor_quantile > 0.0 && c.censor_quantile <= 1.0)) throw config_error("censor_quantile must lie in (0, 1]");
  if (!(c.auc_horizon_days > 0.0)) throw config_error("auc_horizon_days must be positive");
  if (c.threads < 1) throw config_error("threads must be at least 1");
  if (c.cohort.min_separation_days < 0 || c.cohort.faulty_gap_days < 0) {
    throw config_error("cohort day thresholds must be non-negative");
  }
  if (c.forest.n_trees < 1 || c.forest.mtry < 0 || c.forest.min_node_size < 1 || c.forest.min_node_events < 1 ||
      c.forest.n_split_candidates < 1) {
    throw config_error("forest settings out of range");
  }
  const auto schema = analysis_schema();
  for (const auto& name : c.forest_variables) {
    if (std::none_of(schema.begin(), schema.end(), [&](const Variable& v) { return v.name == name; })) {
      throw config_error("unknown forest variable '" + name + "'");
    }
  }
  return c;
}

ordered_json config_to_json(const PipelineConfig& c) {
  ordered_json j;
  if (c.input) {
    j["input"] = {{"reports", c.input->reports.string()}, {"demographics", c.input->demographics.string()}};
  }
  if (c.synth) {
    const SynthConfig& s = *c.synth;
    ordered_json sj;
    sj["n_patients"] = s.n_patients;
    sj["baseline_hazard_per_day"] = s.baseline_hazard_per_day;
    sj["planted_log_hazard_ratios"] = s.planted_log_hazard_ratios;
    sj["censor_horizon_days"] = s.censor_horizon_days;
    sj["missingness_rate"] = s.missingness_rate;
    sj["seed"] = s.seed;
    sj["report_style"] = {{"plain", s.styles.plain}, {"ranged", s.styles.ranged}, {"number_words", s.styles.number_words}};
    sj["cm_probability"] = s.cm_probability;
    sj["min_visit_gap_days"] = s.min_visit_gap_days;
    sj["max_visit_gap_days"] = s.max_visit_gap_days;
    j["synth"] = std::move(sj);
  }
  ordered_json stages;
  for (Stage s : kAllStages) stages[to_string(s)] = c.enabled(s);
  j["stages"] = std::move(stages);
  j["cohort"] = {{"min_separation_days", c.cohort.min_separation_days},
                 {"faulty_gap_days", c.cohort.faulty_gap_days}};
  j["screening_threshold"] = c.screening_threshold;
  j["censor_quantile"] = c.censor_quantile;
  ordered_json f;
  f["n_trees"] = c.forest.n_trees;
  f["mtry"] = c.forest.mtry;
  f["min_node_events"] = c.forest.min_node_events;
  f["min_node_size"] = c.forest.min_node_size;
  f["n_split_candidates"] = c.forest.n_split_candidates;
  f["variables"] = c.forest_variables;
  j["forest"] = std::move(f);
  j["auc_horizon_days"] = c.auc_horizon_days;
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

std::string config_hash(const PipelineConfig& config) {
  ordered_json j = config_to_json(config);
  j.erase("output_dir");
  j.erase("threads");
  j.erase("stages");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

RunResult run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  RunResult result;
  const fs::path manifest_path = config.output_dir / "manifest.json";
  const fs::path error_path = config.output_dir / "error.json";
  const std::string hash = config_hash(config);

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  fs::remove(error_path, ec);

  Manifest manifest;
  manifest.config_hash = hash;
  if (auto previous = load_manifest(manifest_path); previous && previous->config_hash == hash) {
    manifest.stages = previous->stages;
  }

  auto write_manifest = [&] {
    ordered_json j;
    j["tool"] = "polyp-pipeline";
    j["version"] = kToolVersion;
    j["config_hash"] = hash;
    j["seed"] = config.seed;
    j["versions"] = {{"polyp", kToolVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    j["config"] = config_to_json(config);
    ordered_json stages = ordered_json::object();
    for (Stage s : kAllStages) {
      auto it = manifest.stages.find(to_string(s));
      if (it == manifest.stages.end()) continue;
      stages[to_string(s)] = {{"completed", it->second.completed}, {"files", it->second.files}};
    }
    j["stages"] = std::move(stages);
    j["written_at"] = utc_timestamp();
    io::write_json(manifest_path, j);
  };

  bool upstream_reran = false;
  for (Stage stage : kAllStages) {
    const std::string name = to_string(stage);
    const bool selected = options.only_stage ? *options.only_stage == stage : config.enabled(stage);
    if (!selected) continue;

    if (!options.only_stage && options.resume && !upstream_reran) {
      auto it = manifest.stages.find(name);
      const bool done = it != manifest.stages.end() && it->second.completed &&
                        std::all_of(it->second.files.begin(), it->second.files.end(),
                                    [&](const std::string& f) { return fs::exists(config.output_dir / f); });
      if (done) {
        result.skipped.push_back(stage);
        continue;
      }
    }

    try {
      // Later stages depend on this one; their old outputs are stale now.
      for (Stage later : kAllStages) {
        if (later > stage) manifest.stages.erase(to_string(later));
      }
      manifest.stages.erase(name);
      Runner runner(config, options);
      const auto files = runner.run(stage);
      manifest.stages[name] = {true, files};
      result.ran.push_back(stage);
      upstream_reran = true;
      write_manifest();
    } catch (const std::exception& e) {
      const auto* err = dynamic_cast<const Error*>(&e);
      result.exit_code = 1;
      result.failed_stage = name;
      result.message = e.what();
      ordered_json j;
      j["stage"] = name;
      j["code"] = err ? to_string(err->code()) : "Internal";
      j["message"] = e.what();
      try {
        io::write_json(error_path, j);
        write_manifest();
      } catch (const std::exception&) {
      }
      return result;
    }
  }
  if (result.ran.empty()) write_manifest();
  return result;
}

}  // namespace polyp
