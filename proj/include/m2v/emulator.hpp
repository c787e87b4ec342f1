#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "m2v/font.hpp"
#include "m2v/raster.hpp"
#include "m2v/recorder.hpp"
#include "m2v/script.hpp"
#include "m2v/sim.hpp"
#include "m2v/vision.hpp"

namespace m2v::emu {

struct MatchResult {
  double similarity = 0.0;
  int x = 0;
  int y = 0;
  double scale = 1.0;
  bool found = false;
  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

struct ScaleRange {
  double min = 0.25;
  double max = 2.0;
  double step = 0.125;

  /// min, min+step, ... up to max (inclusive within rounding).
  std::vector<double> values() const;
};

enum class Policy { AbortOnFailure, Continue };
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view s);

struct EmulatorConfig {
  double threshold = 0.85;
  ScaleRange scales;
  vision::VisionConfig vision;
  int fps = 10;
  /// How long a conditional step polls for its target before it is skipped.
  double condition_window = 2.0;
  Policy policy = Policy::AbortOnFailure;
  /// Relative image arguments resolve against this directory.
  std::filesystem::path base_dir;
};

/// Zero-mean normalized cross-correlation of `templ` over every placement in
/// `screenshot` (grayscale). Similarity is clamped to [0, 1]; ties within
/// 1e-9 go to the smallest (y, x). Throws TemplateTooLarge.
MatchResult template_match(const Raster& screenshot, const Raster& templ, double threshold = 0.85);

/// Resizes the template across `scales` and keeps the best match. Templates
/// that outgrow the screenshot are skipped. Returns nullopt below threshold.
std::optional<MatchResult> invariant_scale_match(const Raster& templ, const Raster& screenshot,
                                                 const ScaleRange& scales, double threshold = 0.85);

/// Locates `image` on the rendered screen: a match at scale 1.0 is used
/// directly, anything else goes through the scale sweep.
std::optional<MatchResult> locate_image(const Raster& screenshot, const Raster& image, const EmulatorConfig& config);

/// Center of the detected box whose OCR text has the lowest CER against
/// `text`, if that CER is within the vision cer_max.
std::optional<MatchResult> locate_text(const Raster& screenshot, std::string_view text, const GlyphAtlas& atlas,
                                       const vision::VisionConfig& config);
std::optional<MatchResult> locate_text(const sim::SimState& state, std::string_view text, const GlyphAtlas& atlas,
                                       const vision::VisionConfig& config);

enum class Status { Success, TargetNotFound, Timeout, DispatchNoop };
std::string_view to_string(Status s);

struct StepOutcome {
  std::size_t index = 0;
  std::string keyword;
  Status status = Status::Success;
  std::optional<MatchResult> match;
  std::int64_t ticks = 0;
  std::size_t frames = 0;
  std::string detail;
};

/// Image-targeted pointer step: render, locate, dispatch at the match center.
StepOutcome robot_emulator(const script::ScriptStep& step, const Raster& image, sim::SimState& state,
                           const EmulatorConfig& config);

struct RunReport {
  std::vector<StepOutcome> steps;
  std::string final_screen;
  std::int64_t total_ticks = 0;
  std::size_t frames = 0;
  bool goal_reached = false;
  std::string digest;
  std::optional<std::size_t> aborted_at;

  /// No step ended in TargetNotFound or Timeout.
  bool ok() const;
  /// First step that ended in TargetNotFound or Timeout.
  std::optional<std::size_t> first_failure() const;
  nlohmann::json to_json() const;
};

/// Drives one scene through a script, capturing frames into a recorder.
class Emulator {
 public:
  Emulator(const sim::Scene& scene, EmulatorConfig config, video::Recorder& recorder);

  sim::SimState& state() noexcept { return state_; }
  const sim::SimState& state() const noexcept { return state_; }

  /// Script variables substituted into `${name}` arguments.
  void set_variables(std::map<std::string, std::string> vars) { vars_ = std::move(vars); }

  StepOutcome execute_step(const script::ScriptStep& step, std::size_t index);
  RunReport run(const script::ActionScript& script);

 private:
  struct Frame {
    Raster raster;
    std::string hash;
  };

  const Frame& screenshot();
  std::optional<MatchResult> find_image(const std::string& path);
  std::optional<MatchResult> find_text(const std::string& text);
  std::optional<MatchResult> find(const script::WaitTarget& target);
  void capture(std::optional<video::Annotation> annotation);
  /// Advances one tick and captures it.
  void tick();
  /// Polls `target` once per tick for at most `max_ticks`.
  std::optional<MatchResult> poll(const script::WaitTarget& target, std::int64_t max_ticks, std::int64_t& waited);
  std::string resolve(const std::string& text) const;
  std::int64_t seconds_to_ticks(double seconds) const;

  EmulatorConfig config_;
  video::Recorder* recorder_;
  sim::SimState state_;
  std::map<std::string, std::string> vars_;
  std::size_t frames_ = 0;
  std::optional<Frame> frame_;
  std::string frame_key_;
  std::map<std::string, Raster> images_;
  std::map<std::string, std::optional<MatchResult>> match_cache_;
  std::map<std::string, std::vector<std::pair<vision::BoundingBox, std::string>>> ocr_cache_;
};

RunReport run_script(const script::ActionScript& script, const sim::Scene& scene, video::Recorder& recorder,
                     const EmulatorConfig& config);

}  // namespace m2v::emu
