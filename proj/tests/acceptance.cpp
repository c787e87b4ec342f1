// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "m2v/digest.hpp"
#include "m2v/emulator.hpp"
#include "m2v/error.hpp"
#include "m2v/extract.hpp"
#include "m2v/manual.hpp"
#include "m2v/recorder.hpp"
#include "m2v/script.hpp"
#include "m2v/sim.hpp"
#include "m2v/vision.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace m2v;
using nlohmann::json;

namespace {

const fs::path kData = fs::path(M2V_SOURCE_DIR) / "data";
const fs::path kWork = fs::path(M2V_WORK_DIR);
const char* const kFixtures[] = {"installer", "editor", "settings", "envvars", "textonly", "hybrid"};

int failures = 0;

void report(int n, bool pass, const std::string& what) {
  std::printf("criterion %d %s: %s\n", n, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// Runs the CLI and returns its exit status.
int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + M2V_CLI + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string convert_args(const std::string& fixture, const fs::path& out, int fps = 10) {
  const fs::path dir = kData / "fixtures" / fixture;
  return "convert -q --manual \"" + (dir / "manual.md").string() + "\" --scenario \"" +
         (dir / "scenario.json").string() + "\" --kb \"" + (kData / "kb").string() + "\" --out \"" + out.string() +
         "\" --fps " + std::to_string(fps);
}

// Hash of every frame plus the manifest, keyed by relative path.
std::map<std::string, std::string> video_hashes(const fs::path& out) {
  std::map<std::string, std::string> h;
  for (const auto& e : fs::directory_iterator(out / "frames")) h["frames/" + e.path().filename().string()] = sha256_file(e.path());
  h["manifest.json"] = sha256_file(out / "manifest.json");
  return h;
}

manual::Inlines inlines_of(const std::string& text) {
  const auto blocks = manual::parse_markdown(text);
  if (blocks.size() != 1) return {};
  if (const auto* s = std::get_if<manual::Step>(&blocks[0])) return s->inlines;
  if (const auto* p = std::get_if<manual::Paragraph>(&blocks[0])) return p->inlines;
  return {};
}

// ---------------------------------------------------------------------------

void end_to_end() {
  int ok = 0;
  double slowest = 0.0;
  std::string failed;
  for (const char* fx : kFixtures) {
    const fs::path out = kWork / fx;
    fs::remove_all(out);
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = cli(convert_args(fx, out));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    slowest = std::max(slowest, secs);
    bool good = rc == 0 && secs < 10.0 && fs::exists(out / "report.json");
    if (good) {
      const json rep = read_json(out / "report.json");
      const sim::Scene scene = sim::load_scenario(kData / "fixtures" / fx / "scenario.json");
      good = rep.at("goal_reached").get<bool>() && scene.goal && rep.at("final_screen") == scene.goal->screen;
    }
    if (good) ++ok;
    else failed += std::string(" ") + fx + "(exit " + std::to_string(rc) + ")";
  }
  report(1, ok == 6,
         fmt("%d/6 fixtures convert with exit 0 and reach the goal state; slowest %.2f s (limit 10 s)%s", ok, slowest,
             failed.c_str()));
}

void extraction() {
  const json corpus = read_json(kData / "gold" / "extraction_corpus.json");
  int total = 0, exact = 0, emphasis = 0, explicit_type = 0;
  bool has_button_form = false, has_emphasis_form = false;
  for (const auto& item : corpus.at("instructions")) {
    const auto style = extract::parse_style(item.at("style").get<std::string>());
    const std::string text = item.at("text").get<std::string>();
    (style == extract::Style::Emphasis ? emphasis : explicit_type)++;
    has_button_form |= text.rfind("Click the Button Next", 0) == 0;
    has_emphasis_form |= text.rfind("Click the **Next**", 0) == 0;
    const auto got = extract::extract_sentence_actions(inlines_of(text), extract::Lexicon::builtin(), style);
    ++total;
    if (got == extract::records_from_json(item.at("records"))) ++exact;
    else std::printf("  mismatch: %s\n", text.c_str());
  }

  const fs::path env = kData / "fixtures" / "envvars";
  const auto doc = manual::load_manual(env / "manual.md");
  const auto records = extract::extract_actions(doc, extract::Lexicon::builtin());
  const bool env_ok = records == extract::read_actions(env / "gold_actions.json");

  report(2, total >= 30 && exact == total && emphasis > 0 && explicit_type > 0 && has_button_form &&
                has_emphasis_form && env_ok,
         fmt("%d/%d gold instructions exact (%d emphasis, %d explicit-type; both Next forms %s); "
             "env-var manual %zu records %s gold",
             exact, total, emphasis, explicit_type, has_button_form && has_emphasis_form ? "present" : "MISSING",
             records.size(), env_ok ? "match" : "differ from"));
}

std::vector<Raster> fixture_templates() {
  std::vector<Raster> out;
  for (const auto& e : read_json(kData / "elements" / "elements.json").at("elements")) {
    out.push_back(read_ppm(kData / "elements" / e.at("crop").get<std::string>()));
  }
  for (const char* icon : {"network.ppm", "crop.ppm", "gear.ppm"}) out.push_back(read_ppm(kData / "kb" / "icons" / icon));
  return out;
}

void invariant_scale() {
  const auto templates = fixture_templates();
  const emu::ScaleRange range;
  std::mt19937 rng(2024);
  int trials = 0, hits = 0;
  for (double s : {0.5, 0.75, 1.25, 1.5, 2.0}) {
    for (int i = 0; i < 40; ++i) {
      const Raster& t = templates[static_cast<std::size_t>(i) % templates.size()];
      const int sw = static_cast<int>(std::lround(t.width() * s)), sh = static_cast<int>(std::lround(t.height() * s));
      const Raster scaled = s < 1.0 ? resize_area(t, sw, sh) : resize_bilinear(t, sw, sh);
      const auto gray = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(200, 250)(rng));
      Raster canvas(480, 320, {gray, gray, gray});
      const int x = std::uniform_int_distribution<int>(0, canvas.width() - sw)(rng);
      const int y = std::uniform_int_distribution<int>(0, canvas.height() - sh)(rng);
      // Clutter that never overlaps the embedded copy.
      for (int k = 0; k < 4; ++k) {
        const int cw = std::uniform_int_distribution<int>(10, 60)(rng), ch = std::uniform_int_distribution<int>(6, 30)(rng);
        const int cx = std::uniform_int_distribution<int>(0, canvas.width() - cw)(rng);
        const int cy = std::uniform_int_distribution<int>(0, canvas.height() - ch)(rng);
        if (cx < x + sw && x < cx + cw && cy < y + sh && y < cy + ch) continue;
        const auto c = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(40, 180)(rng));
        canvas.fill_rect(cx, cy, cw, ch, {c, static_cast<std::uint8_t>(255 - c), 128});
      }
      canvas.blit(scaled, x, y);
      const auto m = emu::invariant_scale_match(t, canvas, range);
      ++trials;
      if (m && std::abs(m->x - (x + sw / 2)) <= 2 && std::abs(m->y - (y + sh / 2)) <= 2) ++hits;
    }
  }

  // At scale 1.0 the sweep must reproduce plain template matching exactly.
  int unit_same = 0;
  std::size_t unit_total = 0;
  const json elements = read_json(kData / "elements" / "elements.json").at("elements");
  for (const auto& e : elements) {
    const Raster screen = read_ppm(kData / "elements" / e.at("screenshot").get<std::string>());
    const Raster t = read_ppm(kData / "elements" / e.at("crop").get<std::string>());
    const auto plain = emu::template_match(screen, t, 0.0);
    const auto swept = emu::invariant_scale_match(t, screen, emu::ScaleRange{1.0, 1.0, 0.125}, 0.0);
    ++unit_total;
    if (swept && swept->x == plain.x && swept->y == plain.y && swept->similarity == plain.similarity &&
        swept->scale == 1.0) {
      ++unit_same;
    }
  }
  report(3, hits * 100 >= trials * 95 && unit_same == static_cast<int>(unit_total),
         fmt("%d/%d embedded scaled templates recovered within 2 px (%.1f%%, need 95%%); "
             "scale 1.0 equals template_match on %d/%zu",
             hits, trials, 100.0 * hits / trials, unit_same, unit_total));
}

void nms_and_cer() {
  std::mt19937 rng(77);
  int nms_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(0, 12)(rng);
    const double thr = std::uniform_int_distribution<int>(1, 9)(rng) / 10.0;
    std::vector<vision::BoundingBox> boxes;
    for (int i = 0; i < n; ++i) {
      boxes.push_back({std::uniform_int_distribution<int>(0, 24)(rng), std::uniform_int_distribution<int>(0, 24)(rng),
                       std::uniform_int_distribution<int>(1, 14)(rng), std::uniform_int_distribution<int>(1, 14)(rng),
                       std::uniform_int_distribution<int>(0, 5)(rng) / 5.0});
    }
    if (vision::nms(boxes, thr) == oracle::nms_oracle(boxes, thr)) ++nms_ok;
  }

  int lev_ok = 0;
  std::uniform_int_distribution<int> len(0, 8), ch(0, 3);
  auto word = [&] {
    std::string s(static_cast<std::size_t>(len(rng)), 'a');
    for (char& c : s) c = static_cast<char>('a' + ch(rng));
    return s;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::string a = word(), b = word();
    const std::size_t d = oracle::edit_oracle(a, b);
    bool same = vision::levenshtein(a, b) == d;
    if (!b.empty()) same = same && vision::cer(a, b) == static_cast<double>(d) / static_cast<double>(b.size());
    if (same) ++lev_ok;
  }
  const double setting = vision::cer("Setting", "Settings");
  report(4, nms_ok == 1000 && lev_ok == 1000 && setting == 0.125,
         fmt("NMS %d/1000 and Levenshtein/CER %d/1000 equal the brute-force oracles; CER(Setting, Settings) = %g",
             nms_ok, lev_ok, setting));
}

// Frames between a step's event and the next event, minus the action frame,
// for every single-event step with a standard wait. Returns {checked, exact}.
std::pair<int, int> standard_wait_frames(const fs::path& out, int fps) {
  const auto script = script::read_script(out / "script.m2v.robot");
  const auto manifest = video::Manifest::from_json(read_json(out / "manifest.json"));
  std::map<std::size_t, const video::ManifestEvent*> first;
  for (const auto& e : manifest.events)
    if (e.step && !first.count(*e.step)) first[*e.step] = &e;
  int checked = 0, exact = 0;
  std::size_t index = 0;
  for (const auto& tc : script.test_cases) {
    for (const auto& step : tc.steps) {
      const std::size_t i = index++;
      const bool single = script::is_locating_keyword(step.keyword) || step.keyword == "press_key";
      if (!single || step.wait_for || step.wait_after != 2.0) continue;
      if (!first.count(i) || !first.count(i + 1)) continue;
      ++checked;
      const auto* a = first[i];
      const auto* b = first[i + 1];
      if (b->frame - a->frame - 1 == static_cast<std::size_t>(2 * fps) && b->tick - a->tick == 2 * fps) ++exact;
    }
  }
  return {checked, exact};
}

void wait_semantics() {
  int checked = 0, exact = 0;
  for (const char* fx : kFixtures) {
    const auto [c, e] = standard_wait_frames(kWork / fx, 10);
    checked += c;
    exact += e;
  }
  const fs::path slow = kWork / "installer_fps5";
  fs::remove_all(slow);
  const int rc5 = cli(convert_args("installer", slow, 5));
  const auto [c5, e5] = rc5 == 0 ? standard_wait_frames(slow, 5) : std::pair<int, int>{0, 0};

  // The installer's Install click schedules Finish after a delay; its step
  // waits for Finish and the next click must land exactly on that tick.
  const sim::Scene scene = sim::load_scenario(kData / "fixtures" / "installer" / "scenario.json");
  std::int64_t delay = 0;
  for (const auto& t : scene.transitions)
    if (t.element == "install")
      for (const auto& eff : t.effects)
        if (eff.kind == sim::Effect::Kind::Delay) delay += eff.ticks;
  const auto manifest = video::Manifest::from_json(read_json(kWork / "installer" / "manifest.json"));
  std::int64_t install_tick = -1, finish_tick = -1;
  for (const auto& e : manifest.events) {
    if (e.description.rfind("click_text Install ", 0) == 0) install_tick = e.tick;
    if (e.description.rfind("click_text Finish ", 0) == 0) finish_tick = e.tick;
  }
  const bool wait_for_ok = delay > 0 && install_tick >= 0 && finish_tick - install_tick == delay;

  report(5, checked > 0 && exact == checked && c5 > 0 && e5 == c5 && wait_for_ok,
         fmt("%d/%d standard waits add exactly 20 frames at fps 10, %d/%d add 10 at fps 5; "
             "wait_for resolved after %lld ticks (scenario delay %lld)",
             exact, checked, e5, c5, static_cast<long long>(finish_tick - install_tick),
             static_cast<long long>(delay)));
}

void determinism() {
  int same = 0;
  std::size_t files = 0;
  for (const char* fx : kFixtures) {
    const fs::path again = kWork / (std::string(fx) + "_again");
    fs::remove_all(again);
    if (cli(convert_args(fx, again)) != 0) continue;
    const auto a = video_hashes(kWork / fx), b = video_hashes(again);
    files += a.size();
    if (a == b) ++same;
  }
  report(6, same == 6, fmt("%d/6 fixtures give byte-identical frames and manifests across two runs (%zu files hashed)",
                           same, files));
}

void ocr_pathway() {
  const json elements = read_json(kData / "elements" / "elements.json").at("elements");
  const vision::GlyphOcr engine(GlyphAtlas::builtin(), vision::kManualTextScales);
  const vision::VisionConfig config;
  int native_exact = 0, resampled_ok = 0, total = 0;
  for (const auto& e : elements) {
    ++total;
    const std::string name = e.at("name").get<std::string>();
    const Raster crop = read_ppm(kData / "elements" / e.at("crop").get<std::string>());
    if (vision::cer(engine.recognize(crop), name) == 0.0) ++native_exact;

    const Raster screen = read_ppm(kData / "elements" / e.at("screenshot").get<std::string>());
    const Raster small = resize_bilinear(screen, static_cast<int>(std::lround(screen.width() * 0.75)),
                                         static_cast<int>(std::lround(screen.height() * 0.75)));
    const auto rect = e.at("rect").get<std::vector<int>>();
    try {
      const auto boxes = vision::propose_boxes(small, config);
      const auto pick = vision::select_target_box(small, boxes, name, engine, config.cer_max);
      const double cx = pick.box.x + pick.box.w / 2.0, cy = pick.box.y + pick.box.h / 2.0;
      if (cx >= rect[0] * 0.75 && cx <= (rect[0] + rect[2]) * 0.75 && cy >= rect[1] * 0.75 &&
          cy <= (rect[1] + rect[3]) * 0.75) {
        ++resampled_ok;
      } else {
        std::printf("  '%s' at 75%%: picked box %d,%d %dx%d reading '%s'\n", name.c_str(), pick.box.x, pick.box.y,
                    pick.box.w, pick.box.h, pick.text.c_str());
      }
    } catch (const Error& err) {
      std::printf("  '%s' at 75%%: %s\n", name.c_str(), err.what());
    }
  }
  report(7, total == 12 && native_exact == total && resampled_ok == total,
         fmt("native OCR exact on %d/%d element fixtures; 75%%-resampled target selection correct on %d/%d",
             native_exact, total, resampled_ok, total));
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  end_to_end();
  extraction();
  invariant_scale();
  nms_and_cer();
  wait_semantics();
  determinism();
  ocr_pathway();
  return failures;
}
