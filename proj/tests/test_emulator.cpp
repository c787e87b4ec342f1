#include <doctest.h>

#include <cmath>
#include <random>

#include "m2v/emulator.hpp"
#include "m2v/error.hpp"
#include "m2v/vision.hpp"

using namespace m2v;
using namespace m2v::emu;
using nlohmann::json;

namespace {

json dialog_json() {
  return json::parse(R"({
    "screen_size": [320, 240],
    "initial": "main",
    "screens": [
      {"id": "main", "elements": [
        {"id": "title", "kind": "label", "label": "Setup", "rect": [10, 10, 100, 16]},
        {"id": "save", "kind": "button", "label": "Save", "rect": [20, 60, 70, 24]},
        {"id": "save_as", "kind": "button", "label": "Save As", "rect": [110, 60, 90, 24]},
        {"id": "name", "kind": "textbox", "label": "Name", "rect": [20, 110, 160, 22]},
        {"id": "next", "kind": "button", "label": "Next", "rect": [230, 200, 70, 24]},
        {"id": "done", "kind": "label", "label": "Complete", "rect": [200, 20, 100, 16],
         "state": {"visible": false}}
      ]},
      {"id": "other", "elements": [
        {"id": "back", "kind": "button", "label": "Back", "rect": [20, 200, 70, 24]}
      ]}
    ],
    "transitions": [
      {"on": ["main", "next", "click"], "effects": [{"delay": 10},
        {"set_state": {"element": "done", "field": "visible", "value": true}}]},
      {"on": ["main", "save", "click"], "effects": [{"goto": "other"}]},
      {"on": ["main", "name", "text_committed"], "effects": [
        {"set_state": {"element": "title", "field": "text", "value": "ok"}}]}
    ]
  })");
}

const sim::Scene& dialog() {
  static const sim::Scene scene = sim::parse_scenario(dialog_json(), ".");
  return scene;
}

Raster screen() { return sim::render(sim::SimState(dialog())); }

Raster textured(int w, int h, std::mt19937& rng) {
  std::uniform_int_distribution<int> v(20, 200);
  Raster r(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto g = static_cast<std::uint8_t>(v(rng));
      r.set(x, y, {g, g, g});
    }
  return r;
}

// Direct ZNCC over every placement; returns (best similarity, x, y) of the top-left.
std::tuple<double, int, int> brute_zncc(const Raster& s, const Raster& t) {
  const GrayImage gs = to_gray(s), gt = to_gray(t);
  const int w = gt.width, h = gt.height;
  double mt = 0;
  for (double v : gt.values) mt += v;
  mt /= w * h;
  std::tuple<double, int, int> best{-2.0, 0, 0};
  for (int y = 0; y + h <= gs.height; ++y)
    for (int x = 0; x + w <= gs.width; ++x) {
      double ms = 0;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) ms += gs.at(x + i, y + j);
      ms /= w * h;
      double num = 0, ds = 0, dt = 0;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
          const double a = gs.at(x + i, y + j) - ms, b = gt.at(i, j) - mt;
          num += a * b;
          ds += a * a;
          dt += b * b;
        }
      const double r = std::max(0.0, num / std::sqrt(ds * dt));
      if (r > std::get<0>(best) + 1e-9) best = {r, x, y};
    }
  return best;
}

script::ScriptStep step(std::string kw, std::vector<std::string> args) {
  script::ScriptStep s;
  s.keyword = std::move(kw);
  s.args = std::move(args);
  return s;
}

}  // namespace

TEST_CASE("template_match finds a screenshot in itself and crops exactly") {
  const Raster s = screen();
  const MatchResult self = template_match(s, s);
  CHECK(self.found);
  CHECK(self.similarity == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(self.x == s.width() / 2);
  CHECK(self.y == s.height() / 2);
  for (const auto& el : dialog().screens[0].elements) {
    if (el.id == "done") continue;
    const vision::BoundingBox box{el.x, el.y, el.w, el.h, 0.0};
    const MatchResult m = template_match(s, vision::crop(s, box));
    CHECK(m.found);
    CHECK(m.x == el.x + el.w / 2);
    CHECK(m.y == el.y + el.h / 2);
  }
}

TEST_CASE("template_match rejects flat and oversized templates") {
  const Raster s = screen();
  const MatchResult flat = template_match(s, Raster(10, 10, {128, 128, 128}));
  CHECK_FALSE(flat.found);
  CHECK(flat.similarity == 0.0);
  try {
    template_match(Raster(10, 10), Raster(11, 5));
    FAIL("expected TemplateTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TemplateTooLarge);
  }
}

TEST_CASE("template_match agrees with a direct ZNCC oracle") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> sw(10, 24), tw(2, 7);
  for (int trial = 0; trial < 60; ++trial) {
    const Raster s = textured(sw(rng), sw(rng), rng);
    const Raster t = trial % 2 ? textured(tw(rng), tw(rng), rng)
                               : s.sub_image(trial % 5, trial % 3, 5, 4);
    const auto [sim, bx, by] = brute_zncc(s, t);
    const MatchResult m = template_match(s, t);
    CHECK(m.similarity == doctest::Approx(sim).epsilon(1e-6));
    if (sim > 0.5) {  // well-separated optimum: same placement
      CHECK(m.x == bx + t.width() / 2);
      CHECK(m.y == by + t.height() / 2);
    }
  }
}

TEST_CASE("template_match similarity ignores a uniform brightness shift") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> shift(-15, 40);
  for (int trial = 0; trial < 40; ++trial) {
    const Raster s = textured(30, 20, rng);
    const Raster t = trial % 2 ? s.sub_image(4, 5, 8, 6) : textured(6, 6, rng);
    const int d = shift(rng);
    auto shifted = [d](Raster r) {
      for (auto& b : r.bytes()) b = static_cast<std::uint8_t>(b + d);
      return r;
    };
    const MatchResult a = template_match(s, t);
    const MatchResult b = template_match(shifted(s), shifted(t));
    CHECK(a.similarity == doctest::Approx(b.similarity).epsilon(1e-6));
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
  }
}

TEST_CASE("invariant_scale_match") {
  const Raster s = screen();
  const Raster next = s.sub_image(230, 200, 70, 24);

  SUBCASE("a single 1.0 scale equals template_match") {
    const auto m = invariant_scale_match(next, s, {1.0, 1.0, 0.125});
    REQUIRE(m);
    const MatchResult plain = template_match(s, next);
    CHECK(m->x == plain.x);
    CHECK(m->y == plain.y);
    CHECK(m->similarity == plain.similarity);
  }
  SUBCASE("upscaled element is recovered") {
    const auto m = invariant_scale_match(resize_bilinear(next, 105, 36), s, {});
    REQUIRE(m);
    CHECK(std::abs(m->x - 265) <= 2);
    CHECK(std::abs(m->y - 212) <= 2);
  }
  SUBCASE("absent element gives none") {
    std::mt19937 rng(9);
    CHECK_FALSE(invariant_scale_match(textured(40, 20, rng), s, {}));
  }
  SUBCASE("bad ranges are rejected") {
    CHECK_THROWS_AS(invariant_scale_match(next, s, {0.0, 1.0, 0.1}), Error);
    CHECK_THROWS_AS(invariant_scale_match(next, s, {1.0, 0.5, 0.1}), Error);
  }
}

TEST_CASE("scale values form a linear sweep") {
  const auto v = ScaleRange{}.values();
  REQUIRE(v.size() == 15);
  CHECK(v.front() == 0.25);
  CHECK(v.back() == doctest::Approx(2.0));
  CHECK(std::find(v.begin(), v.end(), 1.0) != v.end());
}

TEST_CASE("embedded scaled templates are recovered") {
  const Raster base = screen();
  const Raster next = base.sub_image(230, 200, 70, 24);
  std::mt19937 rng(21);
  int hits = 0, trials = 0;
  for (double s : {0.5, 0.75, 1.25, 1.5, 2.0}) {
    const Raster scaled = resize_bilinear(next, static_cast<int>(std::lround(70 * s)), static_cast<int>(std::lround(24 * s)));
    std::uniform_int_distribution<int> px(0, 320 - scaled.width()), py(0, 50);
    for (int i = 0; i < 8; ++i) {
      Raster canvas(320, 240, {240, 240, 240});
      const int x = px(rng), y = py(rng) + 150 - scaled.height() / 2;
      canvas.blit(scaled, x, y);
      const auto m = invariant_scale_match(next, canvas, {});
      ++trials;
      if (m && std::abs(m->x - (x + scaled.width() / 2)) <= 2 && std::abs(m->y - (y + scaled.height() / 2)) <= 2) ++hits;
    }
  }
  CHECK(hits * 100 >= trials * 95);
}

TEST_CASE("locate_text") {
  const sim::SimState st(dialog());
  const auto& atlas = GlyphAtlas::builtin();
  const vision::VisionConfig cfg;
  const auto next = locate_text(st, "Next", atlas, cfg);
  REQUIRE(next);
  CHECK(std::abs(next->x - 265) <= 2);
  CHECK(std::abs(next->y - 212) <= 2);
  const auto save = locate_text(st, "Save", atlas, cfg);
  REQUIRE(save);
  CHECK(save->similarity == 1.0);
  CHECK(std::abs(save->x - 55) <= 2);
  CHECK_FALSE(locate_text(st, "Uninstall", atlas, cfg));
  CHECK_THROWS_AS(locate_text(st, "", atlas, cfg), Error);
}

TEST_CASE("robot_emulator dispatches at the matched element") {
  const Raster s = screen();
  EmulatorConfig cfg;
  SUBCASE("exact crop") {
    sim::SimState st(dialog());
    const auto out = robot_emulator(step("click_image", {"save.png"}), s.sub_image(20, 60, 70, 24), st, cfg);
    CHECK(out.status == Status::Success);
    REQUIRE(out.match);
    CHECK(out.match->scale == 1.0);
    CHECK(st.event_log().size() == 1);
    CHECK(st.current_screen() == "other");
  }
  SUBCASE("downscaled crop goes through the scale loop") {
    sim::SimState st(dialog());
    const Raster small = resize_bilinear(s.sub_image(20, 60, 70, 24), 56, 19);
    const auto out = robot_emulator(step("click_image", {"save.png"}), small, st, cfg);
    CHECK(out.status == Status::Success);
    REQUIRE(out.match);
    CHECK(out.match->scale != 1.0);
    CHECK(st.current_screen() == "other");
  }
  SUBCASE("element on another screen") {
    sim::SimState st(dialog());
    st.dispatch(sim::Event::click(50, 70));
    const auto out = robot_emulator(step("click_image", {"next.png"}), s.sub_image(230, 200, 70, 24), st, cfg);
    CHECK(out.status == Status::TargetNotFound);
  }
}

TEST_CASE("execute_step waits and polls on the simulated clock") {
  video::Recorder rec;
  EmulatorConfig cfg;
  SUBCASE("standard wait captures fps x 2 frames after the event frame") {
    Emulator emu(dialog(), cfg, rec);
    rec.start(0);
    auto s = step("click_text", {"Next"});
    s.wait_after = 2.0;
    const auto out = emu.execute_step(s, 0);
    CHECK(out.status == Status::Success);
    CHECK(out.ticks == 20);
    CHECK(out.frames == 21);
    CHECK(rec.frame_count() == 21);
  }
  SUBCASE("wait_for resolves at the delay tick") {
    Emulator emu(dialog(), cfg, rec);
    auto s = step("click_text", {"Next"});
    s.wait_for = script::WaitTarget{script::WaitTarget::Kind::Text, "Complete"};
    const auto out = emu.execute_step(s, 0);
    CHECK(out.status == Status::Success);
    CHECK(out.ticks == 10);
  }
  SUBCASE("wait_for that never resolves times out") {
    Emulator emu(dialog(), cfg, rec);
    auto s = step("wait_for_text", {"Missing"});
    const auto out = emu.execute_step(s, 0);
    CHECK(out.status == Status::Timeout);
    CHECK(out.ticks == 300);
  }
  SUBCASE("type_text types and commits") {
    Emulator emu(dialog(), cfg, rec);
    emu.set_variables({{"who", "Ada"}});
    CHECK(emu.execute_step(step("click_text", {"Name"}), 0).status == Status::Success);
    const auto out = emu.execute_step(step("type_text", {"${who}", "commit"}), 1);
    CHECK(out.status == Status::Success);
    CHECK(emu.state().element_state("main", "name").text == "Ada");
    CHECK(emu.state().element_state("main", "title").text == "ok");
  }
  SUBCASE("conditional step whose target never appears is skipped") {
    Emulator emu(dialog(), cfg, rec);
    auto s = step("click_text", {"Restart"});
    s.condition = "If a restart prompt appears";
    const auto out = emu.execute_step(s, 0);
    CHECK(out.status == Status::DispatchNoop);
    CHECK(out.ticks == 20);
  }
  SUBCASE("clicking an inert label is a no-op") {
    Emulator emu(dialog(), cfg, rec);
    CHECK(emu.execute_step(step("click_text", {"Setup"}), 0).status == Status::DispatchNoop);
  }
}

TEST_CASE("run_script policies, bracketing and determinism") {
  EmulatorConfig cfg;
  script::ActionScript script;
  SUBCASE("empty test case still records bracketing frames") {
    script.test_cases.push_back({"Empty", {}});
    video::Recorder rec;
    const RunReport r = run_script(script, dialog(), rec, cfg);
    CHECK(r.steps.empty());
    CHECK(r.frames == 2);
    CHECK(r.ok());
  }
  SUBCASE("abort and continue") {
    script.test_cases.push_back({"Flow", {step("start_recording", {}), step("click_text", {"Missing"}),
                                          step("click_text", {"Save"}), step("stop_recording", {})}});
    video::Recorder rec;
    const RunReport aborted = run_script(script, dialog(), rec, cfg);
    CHECK(aborted.steps.size() == 2);
    CHECK(aborted.aborted_at == 1u);
    CHECK(aborted.first_failure() == 1u);
    CHECK_FALSE(rec.recording());

    cfg.policy = Policy::Continue;
    video::Recorder rec2;
    const RunReport cont = run_script(script, dialog(), rec2, cfg);
    CHECK(cont.steps.size() == 4);
    CHECK(cont.steps[2].status == Status::Success);
    CHECK(cont.final_screen == "other");
    CHECK_FALSE(cont.ok());
    CHECK(cont.to_json()["steps"][1]["coordinate"].is_null());
  }
  SUBCASE("two runs give identical reports and frames") {
    auto wait = step("click_text", {"Next"});
    wait.wait_for = script::WaitTarget{script::WaitTarget::Kind::Text, "Complete"};
    auto save = step("click_text", {"Save"});
    save.wait_after = 2.0;
    script.test_cases.push_back({"Flow", {step("start_recording", {}), wait, save, step("stop_recording", {})}});
    video::Recorder a, b;
    const RunReport ra = run_script(script, dialog(), a, cfg);
    const RunReport rb = run_script(script, dialog(), b, cfg);
    CHECK(ra.to_json() == rb.to_json());
    CHECK(a.frame_digests() == b.frame_digests());
    std::size_t sum = 0;
    for (const auto& s : ra.steps) sum += s.frames;
    CHECK(sum == a.frame_count());
    CHECK(ra.ok());
  }
}
