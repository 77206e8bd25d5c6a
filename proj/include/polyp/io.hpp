#pragma once

// File formats read and written by the pipeline. Every CSV starts with a
// fixed header row; readers reject files whose header differs.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyp/cohort.hpp"
#include "polyp/cox.hpp"
#include "polyp/forest.hpp"
#include "polyp/report_parser.hpp"
#include "polyp/survival.hpp"
#include "polyp/synth.hpp"

namespace polyp::io {

// Shortest text that parses back to the same double.
std::string format_double(double x);
// Throws Error(Parse).
double parse_double(std::string_view text);
int parse_int(std::string_view text);

using CsvRow = std::vector<std::string>;

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;
};

// RFC 4180 quoting; rows end in "\n".
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

std::string read_file(const std::filesystem::path& path);  // throws Error(Io)
void write_file(const std::filesystem::path& path, std::string_view contents);
CsvTable read_csv(const std::filesystem::path& path, const CsvRow& expected_header);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// ---- reports ----------------------------------------------------------------

std::vector<ColonoscopyReport> parse_reports_jsonl(std::string_view text);
std::string reports_to_jsonl(const std::vector<ColonoscopyReport>& reports);

// ---- extraction -------------------------------------------------------------

struct ExtractedVisit {
  std::string patient_id;
  Date visit_date;
  VisitSummary summary;
};

CsvRow extraction_header();
CsvTable extraction_table(const std::vector<ExtractedVisit>& visits);
std::vector<ExtractedVisit> extraction_from_table(const CsvTable& table);

// ---- demographics -----------------------------------------------------------

struct PatientRecord {
  Demographics demographics;
  bool colitis_or_crohns = false;
};

CsvRow demographics_header();
CsvTable demographics_table(const std::vector<PatientHistory>& histories);
std::map<std::string, PatientRecord> demographics_from_table(const CsvTable& table);

// Groups visits by patient (date order) and attaches demographics. Patients
// without a demographics row keep every field missing.
std::vector<PatientHistory> join_histories(const std::vector<ExtractedVisit>& visits,
                                           const std::map<std::string, PatientRecord>& records);

// ---- analysis dataset -------------------------------------------------------

CsvRow dataset_header(const std::vector<Variable>& schema);
CsvTable dataset_table(const SurvivalDataset& dataset);
SurvivalDataset dataset_from_table(const CsvTable& table, const std::vector<Variable>& schema);

CsvTable exclusion_table(const std::vector<Exclusion>& exclusions);

// ---- model outputs ----------------------------------------------------------

CsvRow km_header();
void append_km_rows(CsvTable& table, const KMCurve& curve, const std::string& group);

nlohmann::ordered_json screening_json(const ScreeningReport& report);
ScreeningReport screening_from_json(const nlohmann::json& j);

CsvTable cox_forest_plot_table(const CoxFit& fit);
nlohmann::ordered_json cox_fit_json(const CoxFit& fit);

CsvTable roc_table(const RocResult& roc);
CsvTable vimp_table(const std::vector<std::pair<std::string, double>>& vimp);

CsvTable ground_truth_table(const std::vector<GroundTruth>& truth);

}  // namespace polyp::io
