#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "polyp/error.hpp"
#include "polyp/io.hpp"
#include "polyp/pipeline.hpp"
#include "test_support.hpp"

using namespace polyp;
namespace fs = std::filesystem;
using nlohmann::json;

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

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("polyp_pipeline_test_" + name);
  fs::remove_all(dir);
  return dir;
}

json small_config(const fs::path& out) {
  return json{{"synth", {{"n_patients", 300}, {"planted_log_hazard_ratios", {{"gender:Male", 1.0}}},
                         {"missingness_rate", 0.05}}},
              {"forest", {{"n_trees", 40}}},
              {"auc_horizon_days", 900},
              {"seed", 3},
              {"output_dir", out.string()}};
}

std::vector<fs::path> csv_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool has_stage(const std::vector<Stage>& v, Stage s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST_CASE("strict config reading") {
  const auto base = small_config("out");
  CHECK_NOTHROW(config_from_json(base));

  auto unknown = base;
  unknown["forest"]["ntrees"] = 5;
  CHECK(code_of([&] { config_from_json(unknown); }) == ErrorCode::InvalidConfig);

  auto top = base;
  top["colour"] = "blue";
  CHECK(code_of([&] { config_from_json(top); }) == ErrorCode::InvalidConfig);

  auto type = base;
  type["seed"] = "three";
  CHECK(code_of([&] { config_from_json(type); }) == ErrorCode::InvalidConfig);

  auto both = base;
  both["input"] = {{"reports", "r.jsonl"}, {"demographics", "d.csv"}};
  CHECK(code_of([&] { config_from_json(both); }) == ErrorCode::InvalidConfig);

  auto neither = base;
  neither.erase("synth");
  CHECK(code_of([&] { config_from_json(neither); }) == ErrorCode::InvalidConfig);

  auto threshold = base;
  threshold["screening_threshold"] = 0.0;
  CHECK(code_of([&] { config_from_json(threshold); }) == ErrorCode::InvalidConfig);

  auto variable = base;
  variable["forest"]["variables"] = {"age", "shoe_size"};
  CHECK(code_of([&] { config_from_json(variable); }) == ErrorCode::InvalidConfig);

  auto planted = base;
  planted["synth"]["planted_log_hazard_ratios"] = {{"shoe_size", 1.0}};
  CHECK(code_of([&] { config_from_json(planted); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("relative input paths resolve against the config directory") {
  json j = {{"input", {{"reports", "r.jsonl"}, {"demographics", "/abs/d.csv"}}}};
  const auto c = config_from_json(j, "/data/run");
  REQUIRE(c.input.has_value());
  CHECK(c.input->reports == fs::path("/data/run/r.jsonl"));
  CHECK(c.input->demographics == fs::path("/abs/d.csv"));
  CHECK_FALSE(c.synth.has_value());
}

TEST_CASE("config hash tracks semantic fields only") {
  const auto base = config_from_json(small_config("out"));
  const auto h = config_hash(base);
  CHECK(config_hash(config_from_json(json::parse(config_to_json(base).dump()))) == h);

  auto same = base;
  same.output_dir = "elsewhere";
  same.threads = 4;
  same.stages[0] = false;
  CHECK(config_hash(same) == h);

  auto changed = [&](auto mutate) {
    auto c = base;
    mutate(c);
    return config_hash(c) != h;
  };
  CHECK(changed([](PipelineConfig& c) { c.seed = 4; }));
  CHECK(changed([](PipelineConfig& c) { c.forest.n_trees = 41; }));
  CHECK(changed([](PipelineConfig& c) { c.synth->n_patients = 301; }));
  CHECK(changed([](PipelineConfig& c) { c.synth->planted_log_hazard_ratios["age"] = 0.01; }));
  CHECK(changed([](PipelineConfig& c) { c.screening_threshold = 0.1; }));
  CHECK(changed([](PipelineConfig& c) { c.censor_quantile = 0.9; }));
  CHECK(changed([](PipelineConfig& c) { c.cohort.faulty_gap_days = 10; }));
  CHECK(changed([](PipelineConfig& c) { c.auc_horizon_days = 901; }));
  CHECK(changed([](PipelineConfig& c) { c.forest_variables = {"age"}; }));
}

TEST_CASE("parse-only run writes only the extraction") {
  const auto out = scratch_dir("parse_only");
  auto j = small_config(out);
  j["stages"] = {{"parse", true}, {"cohort", false}, {"screen", false}, {"cox", false}, {"forest", false}};
  const auto r = run_pipeline(config_from_json(j));
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "extraction.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK_FALSE(fs::exists(out / "dataset.csv"));
  CHECK_FALSE(fs::exists(out / "screening.json"));
  CHECK_FALSE(fs::exists(out / "forest_fit.json"));
  io::read_csv(out / "extraction.csv", io::extraction_header());
  fs::remove_all(out);
}

TEST_CASE("full run writes every artifact with its documented header") {
  const auto out = scratch_dir("full");
  const auto config = config_from_json(small_config(out));
  const auto r = run_pipeline(config, RunOptions{std::nullopt, true, true});
  REQUIRE(r.exit_code == 0);
  CHECK(r.ran.size() == 5);

  io::read_csv(out / "extraction.csv", io::extraction_header());
  io::read_csv(out / "dataset.csv", io::dataset_header(analysis_schema()));
  io::read_csv(out / "exclusions.csv", {"patient_id", "reason"});
  io::read_csv(out / "km" / "gender.csv", io::km_header());
  CHECK(fs::exists(out / "km" / "gender.svg"));
  io::read_csv(out / "cox_forest_plot.csv", {"covariate", "rr", "ci_low", "ci_high", "p"});
  io::read_csv(out / "roc.csv", {"fpr", "tpr", "threshold"});
  io::read_csv(out / "vimp.csv", {"variable", "vimp", "log10_abs_vimp"});
  CHECK(fs::exists(out / "roc.svg"));

  const auto screening = io::screening_from_json(io::read_json(out / "screening.json"));
  CHECK_FALSE(screening.entries.empty());
  const auto fit = io::read_json(out / "cox_fit.json");
  CHECK(fit.contains("columns"));
  const auto forest_fit = io::read_json(out / "forest_fit.json");
  CHECK(forest_fit.at("n_trees") == 40);
  CHECK(forest_fit.at("oob_concordance_error").get<double>() < 0.5);
  const auto model = forest_from_json(io::read_json(out / "forest_model.json"));
  CHECK(model.trees.size() == 40);
  const auto auc = io::read_json(out / "auc.json");
  CHECK(auc.at("horizon_days") == 900);

  const auto manifest = io::read_json(out / "manifest.json");
  CHECK(manifest.at("config_hash") == config_hash(config));
  CHECK(manifest.at("seed") == 3);
  CHECK(manifest.at("stages").at("forest").at("completed") == true);

  SUBCASE("resume skips finished stages") {
    const auto again = run_pipeline(config);
    CHECK(again.exit_code == 0);
    CHECK(again.ran.empty());
    CHECK(again.skipped.size() == 5);
  }
  SUBCASE("a single stage can be rerun") {
    const auto only = run_pipeline(config, RunOptions{Stage::Forest, true, false});
    CHECK(only.exit_code == 0);
    CHECK(only.ran == std::vector<Stage>{Stage::Forest});
  }
  SUBCASE("a changed config reruns from the start") {
    auto changed = config;
    changed.forest.n_trees = 30;
    const auto rerun = run_pipeline(changed);
    CHECK(rerun.exit_code == 0);
    CHECK(has_stage(rerun.ran, Stage::Parse));
    CHECK(has_stage(rerun.ran, Stage::Forest));
  }
  fs::remove_all(out);
}

TEST_CASE("identical configs give byte-identical csv files") {
  const auto a = scratch_dir("det_a");
  const auto b = scratch_dir("det_b");
  auto ca = config_from_json(small_config(a));
  auto cb = config_from_json(small_config(b));
  cb.threads = 3;
  REQUIRE(run_pipeline(ca).exit_code == 0);
  REQUIRE(run_pipeline(cb).exit_code == 0);
  const auto files = csv_files(a);
  CHECK(files == csv_files(b));
  CHECK(files.size() > 10);
  for (const auto& f : files) {
    CAPTURE(f.string());
    CHECK(io::read_file(a / f) == io::read_file(b / f));
  }
  CHECK(io::read_file(a / "forest_model.json") == io::read_file(b / "forest_model.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("file inputs reproduce the synthetic run") {
  const auto synth_out = scratch_dir("from_synth");
  const auto file_out = scratch_dir("from_files");
  auto j = small_config(synth_out);
  j["stages"] = {{"parse", true}, {"cohort", true}, {"screen", false}, {"cox", false}, {"forest", false}};
  REQUIRE(run_pipeline(config_from_json(j)).exit_code == 0);

  json f = {{"input", {{"reports", (synth_out / "inputs" / "reports.jsonl").string()},
                       {"demographics", (synth_out / "inputs" / "demographics.csv").string()}}},
            {"stages", j["stages"]},
            {"seed", 3},
            {"output_dir", file_out.string()}};
  REQUIRE(run_pipeline(config_from_json(f)).exit_code == 0);
  CHECK(io::read_file(synth_out / "extraction.csv") == io::read_file(file_out / "extraction.csv"));
  CHECK(io::read_file(synth_out / "dataset.csv") == io::read_file(file_out / "dataset.csv"));
  fs::remove_all(synth_out);
  fs::remove_all(file_out);
}

TEST_CASE("a failing stage leaves an error file") {
  const auto out = scratch_dir("error");
  json j = {{"input", {{"reports", "/nonexistent/reports.jsonl"}, {"demographics", "/nonexistent/d.csv"}}},
            {"output_dir", out.string()}};
  const auto r = run_pipeline(config_from_json(j));
  CHECK(r.exit_code != 0);
  CHECK(r.failed_stage == "parse");
  const auto err = io::read_json(out / "error.json");
  CHECK(err.at("stage") == "parse");
  CHECK(err.at("code") == "Io");
  CHECK_FALSE(err.at("message").get<std::string>().empty());
  fs::remove_all(out);
}
