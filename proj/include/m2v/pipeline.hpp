#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m2v/emulator.hpp"
#include "m2v/extract.hpp"
#include "m2v/script.hpp"
#include "m2v/vision.hpp"

namespace m2v::pipeline {

inline constexpr const char* kActionsFile = "actions.json";
inline constexpr const char* kScriptFile = "script.m2v.robot";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kElementsDir = "elements";

struct PipelineConfig {
  std::filesystem::path manual;
  std::filesystem::path scenario;
  std::filesystem::path kb;
  std::filesystem::path out;
  /// Inputs of the compile and run stages when run on their own.
  std::filesystem::path actions;
  std::filesystem::path script;
  std::filesystem::path lexicon;
  extract::Style style = extract::Style::Auto;
  int fps = 10;
  vision::VisionConfig vision;
  emu::ScaleRange scales;
  double threshold = 0.85;
  emu::Policy policy = emu::Policy::AbortOnFailure;
  std::map<std::string, std::string> overrides;
  std::string environment = "default";
  double wait_seconds = 2.0;
  double wait_for_timeout = 30.0;
};

/// Parses "name=value" override arguments. Throws InvalidArgument.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args);

/// Manual -> action records. Hybrid manuals get element crops written to
/// `<out>/elements/` and referenced relative to `out`. Writes actions.json.
std::vector<extract::ActionRecord> extract_stage(const PipelineConfig& config);

/// Action records -> enriched script. Image arguments resolve against
/// `records_dir`; images outside `out` are copied into `<out>/elements/` so
/// the script only holds paths relative to its own directory. Writes the
/// script file.
script::ActionScript compile_stage(const std::vector<extract::ActionRecord>& records,
                                   const std::filesystem::path& records_dir, const PipelineConfig& config);

/// Executes a script against the scenario, writing frames, manifest.json and
/// report.json into `out`. Image arguments resolve against `script_dir`.
emu::RunReport run_stage(const script::ActionScript& script, const std::filesystem::path& script_dir,
                         const PipelineConfig& config);

/// extract, compile and run into one output directory.
emu::RunReport convert(const PipelineConfig& config);

}  // namespace m2v::pipeline
