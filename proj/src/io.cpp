#include "polyp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "polyp/error.hpp"

namespace polyp::io {

namespace {

Error parse_error(const std::string& what) { return Error(ErrorCode::Parse, what); }

std::string optional_double(const std::optional<double>& x) { return x ? format_double(*x) : ""; }

std::optional<double> parse_optional_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

template <typename E>
std::string optional_level(const std::optional<E>& v) {
  return v ? level_name(*v) : "";
}

template <typename E>
std::optional<E> parse_optional_level(const std::string& s, const char* column) {
  if (s.empty()) return std::nullopt;
  if (auto v = parse_level<E>(s)) return v;
  throw parse_error(std::string("unknown ") + column + " '" + s + "'");
}

bool parse_flag(const std::string& s) {
  if (s.empty() || s == "0" || s == "false") return false;
  if (s == "1" || s == "true") return true;
  throw parse_error("expected a 0/1 flag, got '" + s + "'");
}

void check_width(const CsvTable& table) {
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size()) {
      throw parse_error("CSV row " + std::to_string(r + 2) + " has " +
                        std::to_string(table.rows[r].size()) + " fields, expected " +
                        std::to_string(table.header.size()));
    }
  }
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double x = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw parse_error("not a number: '" + std::string(text) + "'");
  }
  return x;
}

int parse_int(std::string_view text) {
  int x = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw parse_error("not an integer: '" + std::string(text) + "'");
  }
  return x;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&](const CsvRow& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      const std::string& f = row[i];
      if (f.find_first_of(",\"\n\r") == std::string::npos) {
        out += f;
        continue;
      }
      out += '"';
      for (char c : f) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    }
    out += '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

CsvTable parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw parse_error("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw parse_error("CSV has no header row");
  CsvTable table;
  table.header = std::move(rows.front());
  table.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  check_width(table);
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

CsvTable read_csv(const std::filesystem::path& path, const CsvRow& expected_header) {
  CsvTable table;
  try {
    table = parse_csv(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Parse) throw;
    throw parse_error(path.string() + ": " + e.what());
  }
  if (table.header != expected_header) {
    throw parse_error(path.string() + ": unexpected CSV header");
  }
  return table;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
}

// ---- reports ----------------------------------------------------------------

std::vector<ColonoscopyReport> parse_reports_jsonl(std::string_view text) {
  std::vector<ColonoscopyReport> reports;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      reports.push_back({j.at("patient_id").get<std::string>(),
                         Date::parse(j.at("visit_date").get<std::string>()),
                         j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw parse_error("reports line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw parse_error("reports line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return reports;
}

std::string reports_to_jsonl(const std::vector<ColonoscopyReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["patient_id"] = r.patient_id;
    j["visit_date"] = r.visit_date.to_string();
    j["text"] = r.text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---- extraction -------------------------------------------------------------

CsvRow extraction_header() {
  CsvRow h = {"patient_id", "visit_date", "polyp_count", "mean_size_mm", "max_size_mm"};
  for (ColonSite s : kAllSites) h.emplace_back(site_key(s));
  return h;
}

CsvTable extraction_table(const std::vector<ExtractedVisit>& visits) {
  CsvTable t{extraction_header(), {}};
  for (const auto& v : visits) {
    CsvRow row = {v.patient_id, v.visit_date.to_string(), std::to_string(v.summary.polyp_count),
                  optional_double(v.summary.mean_size_mm), optional_double(v.summary.max_size_mm)};
    for (ColonSite s : kAllSites) {
      auto it = v.summary.location_counts.find(s);
      row.push_back(std::to_string(it == v.summary.location_counts.end() ? 0 : it->second));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<ExtractedVisit> extraction_from_table(const CsvTable& table) {
  if (table.header != extraction_header()) throw parse_error("unexpected extraction CSV header");
  std::vector<ExtractedVisit> visits;
  for (const auto& row : table.rows) {
    ExtractedVisit v{row[0], Date::parse(row[1]), {}};
    v.summary.polyp_count = parse_int(row[2]);
    v.summary.mean_size_mm = parse_optional_double(row[3]);
    v.summary.max_size_mm = parse_optional_double(row[4]);
    for (std::size_t k = 0; k < kAllSites.size(); ++k) {
      const int n = parse_int(row[5 + k]);
      if (n < 0) throw parse_error("negative site count");
      if (n > 0) v.summary.location_counts[kAllSites[k]] = n;
    }
    visits.push_back(std::move(v));
  }
  return visits;
}

// ---- demographics -----------------------------------------------------------

CsvRow demographics_header() {
  return {"patient_id", "gender",    "age",       "bmi",       "height_cm",
          "weight_kg",  "smoking_status", "smoking_frequency", "race", "ethnicity",
          "marital_status", "colitis_or_crohns"};
}

CsvTable demographics_table(const std::vector<PatientHistory>& histories) {
  CsvTable t{demographics_header(), {}};
  for (const auto& h : histories) {
    const Demographics& d = h.demographics;
    t.rows.push_back({h.patient_id, optional_level(d.gender), optional_double(d.age_years),
                      optional_double(d.bmi), optional_double(d.height_cm), optional_double(d.weight_kg),
                      optional_level(d.smoking_status), optional_level(d.smoking_frequency),
                      optional_level(d.race), optional_level(d.ethnicity), optional_level(d.marital_status),
                      h.colitis_or_crohns ? "1" : "0"});
  }
  return t;
}

std::map<std::string, PatientRecord> demographics_from_table(const CsvTable& table) {
  if (table.header != demographics_header()) throw parse_error("unexpected demographics CSV header");
  std::map<std::string, PatientRecord> out;
  for (const auto& row : table.rows) {
    PatientRecord r;
    Demographics& d = r.demographics;
    d.gender = parse_optional_level<Gender>(row[1], "gender");
    d.age_years = parse_optional_double(row[2]);
    d.bmi = parse_optional_double(row[3]);
    d.height_cm = parse_optional_double(row[4]);
    d.weight_kg = parse_optional_double(row[5]);
    d.smoking_status = collapse_smoking_status(row[6]);
    d.smoking_frequency = parse_optional_level<SmokingFrequency>(row[7], "smoking_frequency");
    d.race = parse_optional_level<Race>(row[8], "race");
    d.ethnicity = parse_optional_level<Ethnicity>(row[9], "ethnicity");
    d.marital_status = parse_optional_level<MaritalStatus>(row[10], "marital_status");
    r.colitis_or_crohns = parse_flag(row[11]);
    if (!out.emplace(row[0], r).second) throw parse_error("duplicate demographics row for '" + row[0] + "'");
  }
  return out;
}

std::vector<PatientHistory> join_histories(const std::vector<ExtractedVisit>& visits,
                                           const std::map<std::string, PatientRecord>& records) {
  std::map<std::string, PatientHistory> by_id;
  for (const auto& v : visits) {
    PatientHistory& h = by_id[v.patient_id];
    h.patient_id = v.patient_id;
    h.visits.push_back({v.visit_date, v.summary});
  }
  std::vector<PatientHistory> out;
  for (auto& [id, h] : by_id) {
    std::stable_sort(h.visits.begin(), h.visits.end(),
                     [](const DatedVisit& a, const DatedVisit& b) { return a.date < b.date; });
    // Two reports on one day describe one visit; keep the first.
    h.visits.erase(std::unique(h.visits.begin(), h.visits.end(),
                               [](const DatedVisit& a, const DatedVisit& b) { return a.date == b.date; }),
                   h.visits.end());
    if (auto it = records.find(id); it != records.end()) {
      h.demographics = it->second.demographics;
      h.colitis_or_crohns = it->second.colitis_or_crohns;
    }
    out.push_back(std::move(h));
  }
  return out;
}

// ---- analysis dataset -------------------------------------------------------

CsvRow dataset_header(const std::vector<Variable>& schema) {
  CsvRow h = {"patient_id", "time_days", "event"};
  for (const auto& v : schema) h.push_back(v.name);
  return h;
}

CsvTable dataset_table(const SurvivalDataset& ds) {
  CsvTable t{dataset_header(ds.schema), {}};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CsvRow row = {ds.ids[i], format_double(ds.time[i]), ds.event[i] ? "1" : "0"};
    for (std::size_t v = 0; v < ds.num_variables(); ++v) {
      const double x = ds.columns[v][i];
      row.push_back(ds.schema[v].is_factor() ? ds.schema[v].levels[static_cast<std::size_t>(x)]
                                             : format_double(x));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

SurvivalDataset dataset_from_table(const CsvTable& table, const std::vector<Variable>& schema) {
  if (table.header != dataset_header(schema)) throw parse_error("unexpected dataset CSV header");
  SurvivalDataset ds;
  ds.schema = schema;
  ds.columns.resize(schema.size());
  for (const auto& row : table.rows) {
    ds.ids.push_back(row[0]);
    ds.time.push_back(parse_double(row[1]));
    ds.event.push_back(parse_flag(row[2]));
    for (std::size_t v = 0; v < schema.size(); ++v) {
      const std::string& f = row[3 + v];
      if (schema[v].is_factor()) {
        auto idx = schema[v].level_index(f);
        if (!idx) throw parse_error("unknown level '" + f + "' for " + schema[v].name);
        ds.columns[v].push_back(static_cast<double>(*idx));
      } else {
        ds.columns[v].push_back(parse_double(f));
      }
    }
  }
  return ds;
}

CsvTable exclusion_table(const std::vector<Exclusion>& exclusions) {
  CsvTable t{{"patient_id", "reason"}, {}};
  for (const auto& e : exclusions) t.rows.push_back({e.patient_id, to_string(e.reason)});
  return t;
}

// ---- model outputs ----------------------------------------------------------

CsvRow km_header() { return {"time", "survival", "n_risk", "n_event", "group"}; }

void append_km_rows(CsvTable& table, const KMCurve& curve, const std::string& group) {
  for (const auto& p : curve.points) {
    table.rows.push_back({format_double(p.time), format_double(p.survival), std::to_string(p.n_at_risk),
                          std::to_string(p.n_events), group});
  }
}

nlohmann::ordered_json screening_json(const ScreeningReport& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json j;
    j["variable"] = e.variable;
    if (e.test) {
      j["chi_square"] = e.test->chi_square;
      j["df"] = e.test->degrees_of_freedom;
      j["p"] = e.test->p_value;
    } else {
      j["chi_square"] = nullptr;
      j["df"] = nullptr;
      j["p"] = nullptr;
    }
    j["admitted"] = e.admitted;
    if (!e.note.empty()) j["note"] = e.note;
    arr.push_back(std::move(j));
  }
  return arr;
}

ScreeningReport screening_from_json(const nlohmann::json& j) {
  ScreeningReport report;
  try {
    for (const auto& e : j) {
      ScreeningEntry entry;
      entry.variable = e.at("variable").get<std::string>();
      if (!e.at("chi_square").is_null()) {
        entry.test = LogRankResult{e.at("chi_square").get<double>(), e.at("df").get<int>(),
                                   e.at("p").get<double>()};
      }
      entry.admitted = e.at("admitted").get<bool>();
      entry.note = e.value("note", "");
      report.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw parse_error(std::string("screening JSON: ") + ex.what());
  }
  return report;
}

CsvTable cox_forest_plot_table(const CoxFit& fit) {
  CsvTable t{{"covariate", "rr", "ci_low", "ci_high", "p"}, {}};
  for (const auto& r : fit.risk_ratios) {
    t.rows.push_back({r.covariate, format_double(r.rr), format_double(r.ci_low), format_double(r.ci_high),
                      format_double(r.p_value)});
  }
  return t;
}

nlohmann::ordered_json cox_fit_json(const CoxFit& fit) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cols = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    nlohmann::ordered_json c;
    c["name"] = fit.columns[static_cast<std::size_t>(k)].name;
    c["coefficient"] = fit.coefficients(k);
    c["std_error"] = fit.standard_error(k);
    c["z"] = fit.z_statistic(k);
    cols.push_back(std::move(c));
  }
  j["columns"] = std::move(cols);
  nlohmann::ordered_json cov = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(fit.covariance.cols()));
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row[static_cast<std::size_t>(c)] = fit.covariance(r, c);
    cov.push_back(row);
  }
  j["covariance"] = std::move(cov);
  j["log_likelihood_null"] = fit.log_likelihood_null;
  j["log_likelihood_fit"] = fit.log_likelihood_fit;
  j["global_test"] = {{"chi_square", fit.global_chi_square}, {"df", fit.global_df}, {"p", fit.global_p_value}};
  j["iterations"] = fit.iterations_used;
  j["converged"] = fit.converged;
  j["monotone_likelihood"] = fit.monotone_likelihood;
  j["log_likelihood_trace"] = fit.log_likelihood_trace;
  return j;
}

CsvTable roc_table(const RocResult& roc) {
  CsvTable t{{"fpr", "tpr", "threshold"}, {}};
  for (const auto& p : roc.points) {
    t.rows.push_back({format_double(p.fpr), format_double(p.tpr), format_double(p.threshold)});
  }
  return t;
}

CsvTable vimp_table(const std::vector<std::pair<std::string, double>>& vimp) {
  CsvTable t{{"variable", "vimp", "log10_abs_vimp"}, {}};
  for (const auto& [name, v] : vimp) {
    t.rows.push_back({name, format_double(v), v == 0.0 ? "" : format_double(std::log10(std::abs(v)))});
  }
  return t;
}

CsvTable ground_truth_table(const std::vector<GroundTruth>& truth) {
  CsvTable t{{"patient_id", "linear_predictor", "recurrence_time_days", "polyp_count", "mean_size_mm",
              "max_size_mm"},
             {}};
  for (const auto& g : truth) {
    t.rows.push_back({g.patient_id, format_double(g.linear_predictor), format_double(g.recurrence_time_days),
                      std::to_string(g.baseline.polyp_count), optional_double(g.baseline.mean_size_mm),
                      optional_double(g.baseline.max_size_mm)});
  }
  return t;
}

}  // namespace polyp::io
