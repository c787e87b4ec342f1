// m2v: manual -> action records -> enriched script -> simulated run -> frames.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>

#include "m2v/error.hpp"
#include "m2v/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using m2v::pipeline::PipelineConfig;

constexpr int kExitExtract = 2;
constexpr int kExitCompile = 3;
constexpr int kExitRun = 4;

struct StageFailure {
  int exit_code;
  std::string message;
};

template <typename Fn>
auto stage(int exit_code, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw StageFailure{exit_code, std::string(name) + " failed: " + e.what()};
  }
}

void require(const fs::path& path, const char* flag) {
  if (path.empty()) throw CLI::ValidationError(flag, "is required for this command");
}

std::vector<m2v::extract::ActionRecord> do_extract(const PipelineConfig& c) {
  require(c.manual, "--manual");
  return stage(kExitExtract, "extract", [&] {
    auto records = m2v::pipeline::extract_stage(c);
    std::printf("extracted %zu action(s) -> %s\n", records.size(), (c.out / m2v::pipeline::kActionsFile).c_str());
    return records;
  });
}

m2v::script::ActionScript do_compile(const std::vector<m2v::extract::ActionRecord>& records, const fs::path& dir,
                                     const PipelineConfig& c, bool print) {
  return stage(kExitCompile, "compile", [&] {
    auto script = m2v::pipeline::compile_stage(records, dir, c);
    if (print) std::cout << m2v::script::serialize_script(script);
    std::printf("compiled %zu step(s) -> %s\n", script.test_cases.empty() ? 0 : script.test_cases[0].steps.size(),
                (c.out / m2v::pipeline::kScriptFile).c_str());
    return script;
  });
}

int do_run(const m2v::script::ActionScript& script, const fs::path& dir, const PipelineConfig& c) {
  require(c.scenario, "--scenario");
  const auto report = stage(kExitRun, "run", [&] { return m2v::pipeline::run_stage(script, dir, c); });
  for (const auto& s : report.steps) {
    std::printf("  step %zu %-18s %-14s ticks=%lld frames=%zu\n", s.index, s.keyword.c_str(),
                std::string(m2v::emu::to_string(s.status)).c_str(), static_cast<long long>(s.ticks), s.frames);
  }
  std::printf("final screen '%s', %lld ticks, %zu frames, goal %s -> %s\n", report.final_screen.c_str(),
              static_cast<long long>(report.total_ticks), report.frames, report.goal_reached ? "reached" : "not reached",
              c.out.c_str());
  if (const auto failed = report.first_failure()) {
    const auto& s = report.steps[*failed];
    std::fprintf(stderr, "m2v: run failed at step %zu (%s): %s %s\n", s.index, s.keyword.c_str(),
                 std::string(m2v::emu::to_string(s.status)).c_str(), s.detail.c_str());
    return kExitRun;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turn a software manual into a simulated instructional video."};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML-style key = value file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  PipelineConfig c;
  std::string style = "auto", policy = "abort_on_failure";
  std::vector<std::string> overrides;
  bool print = false, verbose = false, quiet = false;

  app.add_option("--manual", c.manual, "Manual (.md or .html)")->check(CLI::ExistingFile);
  app.add_option("--scenario", c.scenario, "Scenario JSON for the simulated GUI")->check(CLI::ExistingFile);
  app.add_option("--kb", c.kb, "Knowledge-base directory or kb.json")->check(CLI::ExistingPath);
  app.add_option("--out", c.out, "Output directory")->required();
  app.add_option("--actions", c.actions, "Action records for compile (default <out>/actions.json)");
  app.add_option("--script", c.script, "Script for run (default <out>/script.m2v.robot)");
  app.add_option("--lexicon", c.lexicon, "Keyword lexicon JSON")->check(CLI::ExistingFile);
  app.add_option("--style", style, "Instruction style: auto, emphasis or explicit_type")->capture_default_str();
  app.add_option("--fps", c.fps, "Frames per simulated second")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--policy", policy, "abort_on_failure or continue")->capture_default_str();
  app.add_option("--override", overrides, "Parameter value name=value (repeatable)");
  app.add_option("--environment", c.environment, "Environment name written to the script")->capture_default_str();
  app.add_option("--wait,--wait_seconds", c.wait_seconds, "Standard wait after a step, seconds")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--wait-for-timeout,--wait_for_timeout", c.wait_for_timeout, "Completion wait timeout, seconds")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--threshold", c.threshold, "Template match threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--scale-min,--scale_min", c.scales.min, "Smallest template scale")->capture_default_str();
  app.add_option("--scale-max,--scale_max", c.scales.max, "Largest template scale")->capture_default_str();
  app.add_option("--scale-step,--scale_step", c.scales.step, "Scale sweep step")->capture_default_str();
  app.add_option("--canny-low,--canny_low", c.vision.canny_low, "Canny low threshold")->capture_default_str();
  app.add_option("--canny-high,--canny_high", c.vision.canny_high, "Canny high threshold")->capture_default_str();
  app.add_option("--nms-iou,--nms_iou", c.vision.nms_iou, "NMS IoU threshold")->capture_default_str();
  app.add_option("--cer-max,--cer_max", c.vision.cer_max, "Largest accepted character error rate")->capture_default_str();
  app.add_flag("--print", print, "Echo the compiled script");
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  auto* extract_cmd = app.add_subcommand("extract", "Manual -> actions.json");
  auto* compile_cmd = app.add_subcommand("compile", "actions.json -> script.m2v.robot");
  auto* run_cmd = app.add_subcommand("run", "script + scenario -> frames, manifest.json, report.json");
  auto* convert_cmd = app.add_subcommand("convert", "extract, compile and run in one go");
  for (auto* sub : {extract_cmd, compile_cmd, run_cmd, convert_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::warn);

  try {
    try {
      c.style = m2v::extract::parse_style(style);
      c.policy = m2v::emu::parse_policy(policy);
      c.overrides = m2v::pipeline::parse_overrides(overrides);
      c.scales.values();
    } catch (const m2v::Error& e) {
      std::fprintf(stderr, "m2v: %s\n", e.what());
      return 1;
    }

    if (*extract_cmd) {
      do_extract(c);
      return 0;
    }
    if (*compile_cmd) {
      const fs::path actions = c.actions.empty() ? c.out / m2v::pipeline::kActionsFile : c.actions;
      const auto records = stage(kExitCompile, "compile", [&] { return m2v::extract::read_actions(actions); });
      do_compile(records, actions.parent_path(), c, print);
      return 0;
    }
    if (*run_cmd) {
      const fs::path script_path = c.script.empty() ? c.out / m2v::pipeline::kScriptFile : c.script;
      const auto script = stage(kExitRun, "run", [&] { return m2v::script::read_script(script_path); });
      return do_run(script, script_path.parent_path(), c);
    }
    require(c.scenario, "--scenario");
    const auto records = do_extract(c);
    const auto script = do_compile(records, c.out, c, print);
    return do_run(script, c.out, c);
  } catch (const StageFailure& f) {
    std::fprintf(stderr, "m2v: %s\n", f.message.c_str());
    return f.exit_code;
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "m2v: %s\n", e.what());
    return 1;
  }
}
