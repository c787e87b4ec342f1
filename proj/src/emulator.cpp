#include "m2v/emulator.hpp"

#include <fftw3.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "m2v/digest.hpp"
#include "m2v/error.hpp"

namespace m2v::emu {

using nlohmann::json;
using script::ScriptStep;
using script::WaitTarget;

namespace {

constexpr double kTieEpsilon = 1e-9;

// The FFTW planner is not thread-safe; execution with distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftBuffers {
  int w, h;
  double* real = nullptr;
  fftw_complex* a = nullptr;
  fftw_complex* b = nullptr;
  fftw_plan forward_a = nullptr, forward_b = nullptr, inverse = nullptr;

  FftBuffers(int width, int height) : w(width), h(height) {
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const std::size_t nc = static_cast<std::size_t>(h) * (w / 2 + 1);
    std::lock_guard lock(planner_mutex());
    real = fftw_alloc_real(n);
    a = fftw_alloc_complex(nc);
    b = fftw_alloc_complex(nc);
    // FFTW_ESTIMATE keeps plans (and thus rounding) identical run to run.
    forward_a = fftw_plan_dft_r2c_2d(h, w, real, a, FFTW_ESTIMATE);
    forward_b = fftw_plan_dft_r2c_2d(h, w, real, b, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_2d(h, w, a, real, FFTW_ESTIMATE);
  }
  ~FftBuffers() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_a);
    fftw_destroy_plan(forward_b);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(a);
    fftw_free(b);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
};

// Inclusive-exclusive summed-area table with a zero first row and column.
std::vector<double> integral(const GrayImage& g, bool squared) {
  const std::size_t stride = static_cast<std::size_t>(g.width) + 1;
  std::vector<double> s(stride * (static_cast<std::size_t>(g.height) + 1), 0.0);
  for (int y = 0; y < g.height; ++y) {
    double row = 0.0;
    for (int x = 0; x < g.width; ++x) {
      const double v = g.at(x, y);
      row += squared ? v * v : v;
      s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
    }
  }
  return s;
}

double window_sum(const std::vector<double>& s, int width, int x, int y, int w, int h) {
  const std::size_t stride = static_cast<std::size_t>(width) + 1;
  return s[(y + h) * stride + x + w] - s[y * stride + x + w] - s[(y + h) * stride + x] + s[y * stride + x];
}

sim::Event pointer_event(std::string_view keyword, int x, int y) {
  if (keyword.rfind("right_click", 0) == 0) return sim::Event::right_click(x, y);
  if (keyword.rfind("double_click", 0) == 0) return sim::Event::double_click(x, y);
  return sim::Event::click(x, y);
}

bool is_pointer_keyword(std::string_view keyword) {
  return keyword == "click_image" || keyword == "click_text" || keyword == "right_click_image" ||
         keyword == "right_click_text" || keyword == "double_click_image" || keyword == "double_click_text";
}

std::string describe_step(const ScriptStep& step, const std::vector<std::string>& args) {
  std::string out = step.keyword;
  for (const auto& a : args) out += " " + a;
  return out;
}

std::vector<std::pair<vision::BoundingBox, std::string>> read_boxes(const Raster& screenshot, const GlyphAtlas& atlas,
                                                                    const vision::VisionConfig& config) {
  std::vector<std::pair<vision::BoundingBox, std::string>> out;
  const vision::GlyphOcr engine(atlas);
  for (const auto& box : vision::propose_boxes(screenshot, config)) {
    out.emplace_back(box, engine.recognize(vision::crop(screenshot, box)));
  }
  return out;
}

std::optional<MatchResult> pick_text(const std::vector<std::pair<vision::BoundingBox, std::string>>& boxes,
                                     std::string_view text, double cer_max) {
  const vision::BoundingBox* best = nullptr;
  double best_cer = 0.0;
  for (const auto& [box, recognized] : boxes) {
    const double c = vision::cer(recognized, text);
    if (c > cer_max) continue;
    if (!best || c < best_cer || (c == best_cer && std::pair(box.y, box.x) < std::pair(best->y, best->x))) {
      best = &box;
      best_cer = c;
    }
  }
  if (!best) return std::nullopt;
  return MatchResult{1.0 - best_cer, best->center_x(), best->center_y(), 1.0, true};
}

}  // namespace

std::vector<double> ScaleRange::values() const {
  if (!(min > 0.0) || !(step > 0.0) || min > max) {
    throw Error(ErrorCode::InvalidArgument, "scale range needs 0 < min <= max and step > 0");
  }
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(min + static_cast<double>(i) * step);
  return out;
}

std::string_view to_string(Policy p) { return p == Policy::Continue ? "continue" : "abort_on_failure"; }

Policy parse_policy(std::string_view s) {
  if (s == "abort_on_failure" || s == "abort") return Policy::AbortOnFailure;
  if (s == "continue") return Policy::Continue;
  throw Error(ErrorCode::InvalidArgument, "unknown policy '" + std::string(s) + "'");
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Success: return "Success";
    case Status::TargetNotFound: return "TargetNotFound";
    case Status::Timeout: return "Timeout";
    case Status::DispatchNoop: return "DispatchNoop";
  }
  return "Success";
}

namespace {

// ZNCC of many templates against one screenshot; the screenshot spectrum and
// its summed-area tables are computed once.
class Correlator {
 public:
  explicit Correlator(GrayImage screen)
      : screen_(std::move(screen)), fft_(screen_.width, screen_.height),
        s1_(integral(screen_, false)), s2_(integral(screen_, true)) {
    std::copy(screen_.values.begin(), screen_.values.end(), fft_.real);
    fftw_execute(fft_.forward_a);
    const std::size_t nc = complex_size();
    spectrum_.resize(2 * nc);
    for (std::size_t i = 0; i < nc; ++i) {
      spectrum_[2 * i] = fft_.a[i][0];
      spectrum_[2 * i + 1] = fft_.a[i][1];
    }
  }

  int width() const noexcept { return screen_.width; }
  int height() const noexcept { return screen_.height; }

  MatchResult match(const GrayImage& t, double threshold) {
    const int W = screen_.width, H = screen_.height, w = t.width, h = t.height;
    if (w > W || h > H) {
      throw Error(ErrorCode::TemplateTooLarge, std::to_string(w) + "x" + std::to_string(h) + " template in " +
                                                   std::to_string(W) + "x" + std::to_string(H) + " screenshot");
    }
    const double n = static_cast<double>(w) * h;
    double mean_t = 0.0;
    for (double v : t.values) mean_t += v;
    mean_t /= n;
    double t_norm = 0.0;
    for (double v : t.values) t_norm += (v - mean_t) * (v - mean_t);
    MatchResult result{0.0, w / 2, h / 2, 1.0, false};
    if (t_norm <= 1e-6 * n) return result;  // flat template: correlation undefined

    std::fill(fft_.real, fft_.real + static_cast<std::size_t>(W) * H, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) fft_.real[static_cast<std::size_t>(y) * W + x] = t.at(x, y) - mean_t;
    fftw_execute(fft_.forward_b);
    for (std::size_t i = 0, nc = complex_size(); i < nc; ++i) {
      // S * conj(T) is the cross-correlation of the screenshot with the template.
      const double sr = spectrum_[2 * i], si = spectrum_[2 * i + 1];
      fft_.a[i][0] = sr * fft_.b[i][0] + si * fft_.b[i][1];
      fft_.a[i][1] = si * fft_.b[i][0] - sr * fft_.b[i][1];
    }
    fftw_execute(fft_.inverse);
    const double norm = 1.0 / (static_cast<double>(W) * H);

    bool any = false;
    for (int y = 0; y + h <= H; ++y) {
      for (int x = 0; x + w <= W; ++x) {
        const double sum = window_sum(s1_, W, x, y, w, h);
        const double var = window_sum(s2_, W, x, y, w, h) - sum * sum / n;
        double r = 0.0;
        if (var > 1e-6 * n) {
          r = std::clamp(fft_.real[static_cast<std::size_t>(y) * W + x] * norm / std::sqrt(t_norm * var), 0.0, 1.0);
        }
        if (!any || r > result.similarity + kTieEpsilon) {
          result.similarity = r;
          result.x = x + w / 2;
          result.y = y + h / 2;
          any = true;
        }
      }
    }
    result.found = result.similarity >= threshold;
    return result;
  }

 private:
  std::size_t complex_size() const { return static_cast<std::size_t>(screen_.height) * (screen_.width / 2 + 1); }

  GrayImage screen_;
  FftBuffers fft_;
  std::vector<double> s1_, s2_;
  std::vector<double> spectrum_;
};

// Templates shrunk below this side length match noise rather than widgets.
constexpr int kMinTemplateSide = 8;
// The local refinement probes this many sub-steps either side of a coarse scale.
constexpr int kRefineSubsteps = 8;
constexpr std::size_t kRefineCandidates = 3;

class ScaleSweep {
 public:
  ScaleSweep(const Raster& templ, const Raster& screenshot, double threshold)
      : templ_(templ), screen_(to_gray(screenshot)), threshold_(threshold),
        min_side_(std::min({kMinTemplateSide, templ.width(), templ.height()})) {}

  std::optional<MatchResult> at(double s) {
    const int w = static_cast<int>(std::lround(templ_.width() * s));
    const int h = static_cast<int>(std::lround(templ_.height() * s));
    if (w < min_side_ || h < min_side_ || w > screen_.width() || h > screen_.height()) return std::nullopt;
    const bool native = w == templ_.width() && h == templ_.height();
    // Shrinking averages pixel areas; point-sampled bilinear aliases thin strokes.
    const Raster resized = native ? templ_ : w < templ_.width() ? resize_area(templ_, w, h) : resize_bilinear(templ_, w, h);
    MatchResult m = screen_.match(to_gray(resized), threshold_);
    m.scale = s;
    return m;
  }

 private:
  const Raster& templ_;
  Correlator screen_;
  double threshold_;
  int min_side_;
};

}  // namespace

MatchResult template_match(const Raster& screenshot, const Raster& templ, double threshold) {
  if (templ.width() > screenshot.width() || templ.height() > screenshot.height()) {
    throw Error(ErrorCode::TemplateTooLarge, std::to_string(templ.width()) + "x" + std::to_string(templ.height()) +
                                                 " template in " + std::to_string(screenshot.width()) + "x" +
                                                 std::to_string(screenshot.height()) + " screenshot");
  }
  Correlator c(to_gray(screenshot));
  return c.match(to_gray(templ), threshold);
}

std::optional<MatchResult> invariant_scale_match(const Raster& templ, const Raster& screenshot,
                                                 const ScaleRange& scales, double threshold) {
  const std::vector<double> coarse = scales.values();
  ScaleSweep sweep(templ, screenshot, threshold);
  std::optional<MatchResult> best;
  std::vector<MatchResult> tried;
  for (double s : coarse) {
    const auto m = sweep.at(s);
    if (!m) continue;
    tried.push_back(*m);
    if (!best || m->similarity > best->similarity + kTieEpsilon) best = m;
  }
  // The grid rarely hits the true ratio; probe finer scales around the
  // strongest coarse candidates, staying inside the configured range.
  std::stable_sort(tried.begin(), tried.end(),
                   [](const MatchResult& a, const MatchResult& b) { return a.similarity > b.similarity; });
  const double fine = scales.step / kRefineSubsteps;
  for (std::size_t k = 0; k < std::min(kRefineCandidates, tried.size()); ++k) {
    for (int i = -(kRefineSubsteps - 1); i <= kRefineSubsteps - 1; ++i) {
      const double s = tried[k].scale + i * fine;
      if (i == 0 || s < scales.min - 1e-12 || s > scales.max + 1e-12) continue;
      const auto m = sweep.at(s);
      if (m && m->similarity > best->similarity + kTieEpsilon) best = m;
    }
  }
  if (!best || best->similarity < threshold) return std::nullopt;
  best->found = true;
  return best;
}

std::optional<MatchResult> locate_image(const Raster& screenshot, const Raster& image, const EmulatorConfig& config) {
  if (image.width() <= screenshot.width() && image.height() <= screenshot.height()) {
    const MatchResult direct = template_match(screenshot, image, config.threshold);
    if (direct.found) return direct;
  }
  return invariant_scale_match(image, screenshot, config.scales, config.threshold);
}

std::optional<MatchResult> locate_text(const Raster& screenshot, std::string_view text, const GlyphAtlas& atlas,
                                       const vision::VisionConfig& config) {
  if (text.empty()) throw Error(ErrorCode::EmptyTarget, "locate_text needs a non-empty text");
  return pick_text(read_boxes(screenshot, atlas, config), text, config.cer_max);
}

std::optional<MatchResult> locate_text(const sim::SimState& state, std::string_view text, const GlyphAtlas& atlas,
                                       const vision::VisionConfig& config) {
  return locate_text(sim::render(state), text, atlas, config);
}

StepOutcome robot_emulator(const ScriptStep& step, const Raster& image, sim::SimState& state,
                           const EmulatorConfig& config) {
  StepOutcome out;
  out.keyword = step.keyword;
  const Raster screenshot = sim::render(state);
  out.match = locate_image(screenshot, image, config);
  if (!out.match) {
    out.status = Status::TargetNotFound;
    return out;
  }
  state.dispatch(pointer_event(step.keyword, out.match->x, out.match->y));
  out.status = state.event_log().back().handled ? Status::Success : Status::DispatchNoop;
  return out;
}

// ---------------------------------------------------------------------------

bool RunReport::ok() const { return !first_failure(); }

std::optional<std::size_t> RunReport::first_failure() const {
  for (const auto& s : steps)
    if (s.status == Status::TargetNotFound || s.status == Status::Timeout) return s.index;
  return std::nullopt;
}

json RunReport::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps) {
    json j = {{"index", s.index}, {"keyword", s.keyword}, {"status", to_string(s.status)},
              {"ticks", s.ticks}, {"frames", s.frames}};
    if (s.match) {
      j["similarity"] = s.match->similarity;
      j["coordinate"] = {s.match->x, s.match->y};
      j["scale"] = s.match->scale;
    } else {
      j["similarity"] = nullptr;
      j["coordinate"] = nullptr;
      j["scale"] = nullptr;
    }
    if (!s.detail.empty()) j["detail"] = s.detail;
    steps_json.push_back(std::move(j));
  }
  return {{"steps", std::move(steps_json)},
          {"final_screen", final_screen},
          {"total_ticks", total_ticks},
          {"frames", frames},
          {"goal_reached", goal_reached},
          {"digest", digest},
          {"aborted_at", aborted_at ? json(*aborted_at) : json(nullptr)}};
}

Emulator::Emulator(const sim::Scene& scene, EmulatorConfig config, video::Recorder& recorder)
    : config_(std::move(config)), recorder_(&recorder), state_(scene) {
  if (config_.fps < 1) throw Error(ErrorCode::InvalidArgument, "fps must be at least 1");
  if (recorder.fps() != config_.fps) throw Error(ErrorCode::InvalidArgument, "recorder and emulator fps differ");
}

const Emulator::Frame& Emulator::screenshot() {
  const std::string key = state_.digest();
  if (!frame_ || frame_key_ != key) {
    Raster r = sim::render(state_);
    std::string hash = sha256_hex(r.bytes());
    frame_ = Frame{std::move(r), std::move(hash)};
    frame_key_ = key;
  }
  return *frame_;
}

std::optional<MatchResult> Emulator::find_image(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative() && !config_.base_dir.empty()) p = config_.base_dir / p;
  auto it = images_.find(p.string());
  if (it == images_.end()) it = images_.emplace(p.string(), load_image(p)).first;
  const Frame& frame = screenshot();
  const std::string key = frame.hash + "\n" + p.string();
  auto cached = match_cache_.find(key);
  if (cached == match_cache_.end()) {
    cached = match_cache_.emplace(key, locate_image(frame.raster, it->second, config_)).first;
  }
  return cached->second;
}

std::optional<MatchResult> Emulator::find_text(const std::string& text) {
  const Frame& frame = screenshot();
  auto it = ocr_cache_.find(frame.hash);
  if (it == ocr_cache_.end()) {
    it = ocr_cache_.emplace(frame.hash, read_boxes(frame.raster, GlyphAtlas::builtin(), config_.vision)).first;
  }
  return pick_text(it->second, text, config_.vision.cer_max);
}

std::optional<MatchResult> Emulator::find(const WaitTarget& target) {
  const std::string value = resolve(target.value);
  return target.kind == WaitTarget::Kind::Image ? find_image(value) : find_text(value);
}

void Emulator::capture(std::optional<video::Annotation> annotation) {
  if (!recorder_->recording()) return;
  recorder_->capture(screenshot().raster, state_.clock(), annotation);
  ++frames_;
}

void Emulator::tick() {
  state_.advance_clock(1);
  capture(std::nullopt);
}

std::optional<MatchResult> Emulator::poll(const WaitTarget& target, std::int64_t max_ticks, std::int64_t& waited) {
  waited = 0;
  for (;;) {
    if (auto m = find(target)) return m;
    if (waited >= max_ticks) return std::nullopt;
    tick();
    ++waited;
  }
}

std::string Emulator::resolve(const std::string& text) const {
  return script::substitute(text, [&](const std::string& name) -> std::optional<std::string> {
    const auto it = vars_.find(name);
    if (it == vars_.end()) return std::nullopt;
    return it->second;
  });
}

std::int64_t Emulator::seconds_to_ticks(double seconds) const {
  return static_cast<std::int64_t>(std::llround(seconds * config_.fps));
}

StepOutcome Emulator::execute_step(const ScriptStep& step, std::size_t index) {
  StepOutcome out;
  out.index = index;
  out.keyword = step.keyword;
  const std::int64_t start_clock = state_.clock();
  const std::size_t start_frames = frames_;
  auto finish = [&]() {
    out.ticks = state_.clock() - start_clock;
    out.frames = frames_ - start_frames;
    if (out.status != Status::Success) {
      spdlog::info("step {} {}: {} {}", index, step.keyword, to_string(out.status), out.detail);
    }
    return out;
  };
  std::vector<std::string> args;
  for (const auto& a : step.args) args.push_back(resolve(a));
  const std::string label = describe_step(step, args);
  const std::string& kw = step.keyword;
  auto annotate = [&](std::string what) { return video::Annotation{index, std::move(what)}; };

  if (step.condition && script::is_locating_keyword(kw) && !args.empty()) {
    const WaitTarget target{script::is_image_keyword(kw) ? WaitTarget::Kind::Image : WaitTarget::Kind::Text, step.args[0]};
    std::int64_t waited = 0;
    if (!poll(target, seconds_to_ticks(config_.condition_window), waited)) {
      out.status = Status::DispatchNoop;
      out.detail = "condition not met: " + *step.condition;
      return finish();
    }
  }

  bool handled = true;
  if (kw == "start_recording") {
    recorder_->start(state_.clock());
    capture(annotate("start_recording (" + recorder_->start_hotkey() + ")"));
  } else if (kw == "stop_recording") {
    capture(annotate("stop_recording (" + recorder_->stop_hotkey() + ")"));
    recorder_->stop(state_.clock());
  } else if (is_pointer_keyword(kw)) {
    out.match = script::is_image_keyword(kw) ? find_image(args.at(0)) : find_text(args.at(0));
    if (!out.match) {
      out.status = Status::TargetNotFound;
      out.detail = "'" + args.at(0) + "' is not on screen '" + state_.current_screen() + "'";
      return finish();
    }
    state_.dispatch(pointer_event(kw, out.match->x, out.match->y));
    handled = state_.event_log().back().handled;
    capture(annotate(label + " at (" + std::to_string(out.match->x) + "," + std::to_string(out.match->y) + ")"));
  } else if (kw == "type_text") {
    for (char c : args.at(0)) {
      state_.dispatch(sim::Event::key_char(c));
      handled = handled && state_.event_log().back().handled;
      capture(annotate(std::string("key '") + c + "'"));
    }
    if (args.size() > 1) {
      state_.dispatch(sim::Event::key_named("Enter"));
      handled = handled && state_.event_log().back().handled;
      capture(annotate("key Enter"));
    }
  } else if (kw == "press_key") {
    const std::string& key = args.at(0);
    state_.dispatch(key.size() == 1 ? sim::Event::key_char(key[0]) : sim::Event::key_named(key));
    handled = state_.event_log().back().handled;
    capture(annotate("key " + key));
  } else if (kw == "wait") {
    char* end = nullptr;
    const double seconds = std::strtod(args.at(0).c_str(), &end);
    if (end == args[0].c_str() || *end != '\0' || seconds < 0) {
      throw Error(ErrorCode::InvalidArgument, "wait needs a non-negative number of seconds, got '" + args[0] + "'");
    }
    for (std::int64_t i = 0, n = seconds_to_ticks(seconds); i < n; ++i) tick();
  } else if (kw == "wait_for_image" || kw == "wait_for_text") {
    const WaitTarget target{kw == "wait_for_image" ? WaitTarget::Kind::Image : WaitTarget::Kind::Text, step.args.at(0)};
    std::int64_t waited = 0;
    out.match = poll(target, seconds_to_ticks(step.timeout), waited);
    if (!out.match) {
      out.status = Status::Timeout;
      out.detail = "'" + args[0] + "' did not appear within " + std::to_string(waited) + " ticks";
      return finish();
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown keyword '" + kw + "'");
  }
  if (!handled) {
    out.status = Status::DispatchNoop;
    out.detail = "event had no effect";
  }

  if (step.wait_for) {
    std::int64_t waited = 0;
    if (!poll(*step.wait_for, seconds_to_ticks(step.timeout), waited)) {
      out.status = Status::Timeout;
      out.detail = "'" + resolve(step.wait_for->value) + "' did not appear within " + std::to_string(waited) + " ticks";
    }
  } else if (step.wait_after) {
    for (std::int64_t i = 0, n = seconds_to_ticks(*step.wait_after); i < n; ++i) tick();
  }
  return finish();
}

RunReport Emulator::run(const script::ActionScript& script) {
  std::map<std::string, std::string> vars(script.variables.begin(), script.variables.end());
  for (auto& [k, v] : vars_) vars[k] = v;
  vars_ = std::move(vars);
  recorder_->set_hotkeys(script.setting("start_hotkey").value_or("F2"), script.setting("stop_hotkey").value_or("F1"));

  std::vector<const ScriptStep*> steps;
  for (const auto& tc : script.test_cases)
    for (const auto& s : tc.steps) steps.push_back(&s);
  const bool explicit_start = std::any_of(steps.begin(), steps.end(), [](const ScriptStep* s) {
    return s->keyword == "start_recording";
  });

  RunReport report;
  if (!explicit_start && !recorder_->recording()) {
    recorder_->start(state_.clock());
    capture(video::Annotation{std::nullopt, "start_recording (implicit)"});
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    report.steps.push_back(execute_step(*steps[i], i));
    const Status st = report.steps.back().status;
    if ((st == Status::TargetNotFound || st == Status::Timeout) && config_.policy == Policy::AbortOnFailure) {
      report.aborted_at = i;
      break;
    }
  }
  if (recorder_->recording()) {
    capture(video::Annotation{std::nullopt, "stop_recording (implicit)"});
    recorder_->stop(state_.clock());
  }
  report.final_screen = state_.current_screen();
  report.total_ticks = state_.clock();
  report.frames = frames_;
  report.goal_reached = state_.goal_reached();
  report.digest = state_.digest();
  return report;
}

RunReport run_script(const script::ActionScript& script, const sim::Scene& scene, video::Recorder& recorder,
                     const EmulatorConfig& config) {
  Emulator emulator(scene, config, recorder);
  return emulator.run(script);
}

}  // namespace m2v::emu
