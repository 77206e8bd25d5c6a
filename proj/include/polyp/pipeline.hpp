#pragma once

// End-to-end orchestration: parse -> cohort -> screen -> cox -> forest.
// Each stage reads the previous stage's files from the output directory,
// so any stage can be rerun on its own once its inputs exist.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyp/cohort.hpp"
#include "polyp/forest.hpp"
#include "polyp/synth.hpp"

namespace polyp {

enum class Stage { Parse, Cohort, Screen, Cox, Forest };
inline constexpr std::array<Stage, 5> kAllStages = {Stage::Parse, Stage::Cohort, Stage::Screen, Stage::Cox,
                                                    Stage::Forest};
std::string to_string(Stage stage);
std::optional<Stage> stage_from_string(const std::string& name);

struct InputPaths {
  std::filesystem::path reports;       // JSON lines
  std::filesystem::path demographics;  // CSV
};

struct PipelineConfig {
  std::optional<InputPaths> input;
  std::optional<SynthConfig> synth;
  std::array<bool, 5> stages = {true, true, true, true, true};  // indexed by Stage
  CohortConfig cohort;
  double screening_threshold = 0.2;
  double censor_quantile = 0.95;
  ForestConfig forest;
  // Empty selects every raw (non-discretized) covariate.
  std::vector<std::string> forest_variables;
  double auc_horizon_days = 1500.0;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;

  bool enabled(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
};

// Strict reader: unknown keys and wrong types are Error(InvalidConfig).
// Relative input paths resolve against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
// Fully resolved config with every default written out.
nlohmann::ordered_json config_to_json(const PipelineConfig& config);

// Hex digest over the fields that affect results (not output_dir or threads).
std::string config_hash(const PipelineConfig& config);

struct RunOptions {
  std::optional<Stage> only_stage;  // run exactly this stage
  bool resume = true;               // skip stages the manifest records as done
  bool render_svg = false;
};

struct RunResult {
  int exit_code = 0;
  std::vector<Stage> ran;
  std::vector<Stage> skipped;
  std::optional<std::string> failed_stage;
  std::string message;
};

// Never throws for stage failures: they are reported in the result and in
// <out>/error.json.
RunResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace polyp
