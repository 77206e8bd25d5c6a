// Command-line front end for the recurrence pipeline.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "polyp/error.hpp"
#include "polyp/io.hpp"
#include "polyp/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Colorectal polyp recurrence pipeline: report parsing, cohort construction, "
               "log-rank screening, Cox regression and random survival forest."};

  std::string config_path;
  std::string out_dir;
  int threads = 0;
  std::string stage_name;
  std::uint64_t seed = 0;
  bool render_svg = false;
  bool no_resume = false;

  app.add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for parsing and forest growth")
                          ->check(CLI::PositiveNumber);
  auto* stage_opt = app.add_option("--stage", stage_name, "Run only this stage")
                        ->check(CLI::IsMember({"parse", "cohort", "screen", "cox", "forest"}));
  auto* seed_opt = app.add_option("--seed", seed, "Seed for synthesis and forest growth");
  app.add_flag("--render-svg", render_svg, "Also write SVG plots of KM and ROC curves");
  app.add_flag("--no-resume", no_resume, "Rerun stages even if the manifest marks them complete");
  CLI11_PARSE(app, argc, argv);

  polyp::PipelineConfig config;
  try {
    const std::filesystem::path path(config_path);
    config = polyp::config_from_json(polyp::io::read_json(path), path.parent_path());
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (*out_opt) config.output_dir = out_dir;
  if (*threads_opt) config.threads = threads;
  if (*seed_opt) {
    config.seed = seed;
    if (config.synth) config.synth->seed = seed;
  }

  polyp::RunOptions options;
  if (*stage_opt) options.only_stage = polyp::stage_from_string(stage_name);
  options.resume = !no_resume;
  options.render_svg = render_svg;

  const polyp::RunResult result = polyp::run_pipeline(config, options);
  for (auto s : result.skipped) std::cout << "skipped " << polyp::to_string(s) << " (already complete)\n";
  for (auto s : result.ran) std::cout << "ran " << polyp::to_string(s) << "\n";
  if (result.exit_code != 0) {
    std::cerr << "stage " << result.failed_stage.value_or("?") << " failed: " << result.message << "\n"
              << "details in " << (config.output_dir / "error.json").string() << "\n";
  }
  return result.exit_code;
}
