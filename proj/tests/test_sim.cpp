#include <doctest.h>

#include <random>

#include "m2v/error.hpp"
#include "m2v/sim.hpp"

using namespace m2v;
using namespace m2v::sim;
using nlohmann::json;

namespace {

json wizard_json() {
  return json::parse(R"({
    "screen_size": [320, 240],
    "initial": "welcome",
    "screens": [
      {"id": "welcome", "elements": [
        {"id": "title", "kind": "label", "label": "Welcome", "rect": [10, 10, 120, 16]},
        {"id": "agree", "kind": "checkbox", "label": "I agree", "rect": [10, 40, 120, 16]},
        {"id": "name", "kind": "textbox", "label": "Name", "rect": [10, 70, 150, 20]},
        {"id": "next", "kind": "button", "label": "Next", "rect": [200, 200, 60, 24]},
        {"id": "ghost", "kind": "button", "label": "Ghost", "rect": [100, 200, 60, 24],
         "state": {"visible": false}}
      ]},
      {"id": "install", "elements": [
        {"id": "progress", "kind": "label", "label": "Installing", "rect": [10, 10, 120, 16]},
        {"id": "finish", "kind": "button", "label": "Finish", "rect": [200, 200, 60, 24],
         "state": {"visible": false}}
      ]},
      {"id": "done", "background": [255, 255, 255], "elements": []}
    ],
    "transitions": [
      {"on": ["welcome", "next", "click"], "effects": [{"goto": "install"},
        {"delay": 10}, {"set_state": {"screen": "install", "element": "finish", "field": "visible", "value": true}}]},
      {"on": ["welcome", "name", "text_committed"], "effects": [
        {"set_state": {"element": "title", "field": "text", "value": "committed"}}]},
      {"on": ["install", "finish", "click"], "effects": [{"goto": "done"}]},
      {"on": ["welcome", "*", "key:F5"], "effects": [
        {"set_state": {"element": "agree", "field": "checked", "value": true}}]}
    ],
    "goal": {"screen": "done", "states": [
      {"screen": "welcome", "element": "agree", "field": "checked", "value": true}]}
  })");
}

const Scene& wizard() {
  static const Scene scene = parse_scenario(wizard_json(), ".");
  return scene;
}

void expect_schema_error(const json& j, const std::string& pointer) {
  try {
    parse_scenario(j, ".");
    FAIL("expected SchemaError at " << pointer);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find(pointer + ":") != std::string::npos);
  }
}

bool same_outside(const Raster& a, const Raster& b, int x, int y, int w, int h) {
  for (int py = 0; py < a.height(); ++py)
    for (int px = 0; px < a.width(); ++px) {
      const bool inside = px >= x && py >= y && px < x + w && py < y + h;
      if (!inside && !(a.at(px, py) == b.at(px, py))) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("scenario loads screens, transitions and goal") {
  const Scene& s = wizard();
  CHECK(s.width == 320);
  CHECK(s.screens.size() == 3);
  CHECK(s.transitions.size() == 4);
  REQUIRE(s.goal);
  CHECK(s.goal->states.size() == 1);
  CHECK(s.screen("done")->background == Rgb{255, 255, 255});
  CHECK(s.transitions[1].effects[0].screen == "welcome");
  CHECK(s.transitions[3].key == "F5");
}

TEST_CASE("scenario schema errors carry a JSON pointer") {
  auto j = wizard_json();
  j["initial"] = "nowhere";
  expect_schema_error(j, "/initial");

  j = wizard_json();
  j["screens"][0]["elements"][3]["rect"] = {300, 200, 60, 24};
  expect_schema_error(j, "/screens/0/elements/3/rect");

  j = wizard_json();
  j["screens"][0]["elements"][1]["kind"] = "slider";
  expect_schema_error(j, "/screens/0/elements/1/kind");

  j = wizard_json();
  j["transitions"][0]["on"][1] = "missing";
  expect_schema_error(j, "/transitions/0/on/1");

  j = wizard_json();
  j["transitions"][0]["effects"][2]["set_state"]["field"] = "colour";
  expect_schema_error(j, "/transitions/0/effects/2/set_state/field");

  j = wizard_json();
  j["transitions"][0]["effects"][1]["delay"] = -1;
  expect_schema_error(j, "/transitions/0/effects/1/delay");

  j = wizard_json();
  j["screens"][1]["id"] = "welcome";
  expect_schema_error(j, "/screens/1/id");

  j = wizard_json();
  j.erase("screen_size");
  expect_schema_error(j, "/screen_size");

  j = wizard_json();
  j["screens"][0]["elements"][3]["icon"] = "no/such.png";
  expect_schema_error(j, "/screens/0/elements/3/icon");
}

TEST_CASE("identical event sequences give identical digests") {
  auto run = [] {
    SimState st(wizard());
    st.dispatch(Event::click(20, 45));
    st.dispatch(Event::click(20, 75));
    for (char c : std::string("Ada")) st.dispatch(Event::key_char(c));
    st.advance_clock(3);
    st.dispatch(Event::click(210, 210));
    st.advance_clock(12);
    return st;
  };
  const SimState a = run(), b = run();
  CHECK(a.digest() == b.digest());
  CHECK(a.digest().size() == 64);
  CHECK(render(a) == render(b));
  SimState c(wizard());
  CHECK(c.digest() != a.digest());
}

TEST_CASE("checkbox toggle only redraws inside its rect") {
  SimState st(wizard());
  const Raster before = render(st);
  st.dispatch(Event::click(15, 48));
  CHECK(st.element_state("welcome", "agree").checked);
  const Raster after = render(st);
  CHECK_FALSE(before == after);
  CHECK(same_outside(before, after, 10, 40, 120, 16));
  st.dispatch(Event::click(15, 48));
  CHECK_FALSE(st.element_state("welcome", "agree").checked);
  CHECK(render(st) == before);
}

TEST_CASE("click on a button follows its transition") {
  SimState st(wizard());
  st.dispatch(Event::click(230, 210));
  CHECK(st.current_screen() == "install");
  CHECK(st.event_log().back().handled);
}

TEST_CASE("background clicks and unbound keys change nothing") {
  SimState st(wizard());
  const std::string d0 = st.digest();
  const Raster r0 = render(st);
  st.dispatch(Event::click(300, 5));
  st.dispatch(Event::key_char('x'));
  st.dispatch(Event::key_named("Escape"));
  st.dispatch(Event::click(130, 210));  // invisible element
  CHECK(st.digest() == d0);
  CHECK(render(st) == r0);
  for (const auto& e : st.event_log()) CHECK_FALSE(e.handled);
}

TEST_CASE("delay reveals an element after the expiry tick") {
  SimState st(wizard());
  st.dispatch(Event::click(230, 210));
  CHECK(st.pending_count() == 1);
  CHECK_FALSE(st.element_state("install", "finish").visible);
  st.advance_clock(9);
  CHECK_FALSE(st.element_state("install", "finish").visible);
  st.advance_clock(1);
  CHECK(st.element_state("install", "finish").visible);
  CHECK(st.pending_count() == 0);

  SimState split(wizard()), whole(wizard());
  split.dispatch(Event::click(230, 210));
  whole.dispatch(Event::click(230, 210));
  split.advance_clock(5);
  split.advance_clock(5);
  whole.advance_clock(10);
  CHECK(split.digest() == whole.digest());
  CHECK_THROWS_AS(whole.advance_clock(-1), Error);
}

TEST_CASE("typing goes to the focused textbox and Enter commits") {
  SimState st(wizard());
  st.dispatch(Event::key_char('q'));
  CHECK(st.element_state("welcome", "name").text.empty());
  st.dispatch(Event::click(20, 75));
  CHECK(st.element_state("welcome", "name").focused);
  for (char c : std::string("Bob")) st.dispatch(Event::key_char(c));
  st.dispatch(Event::key_named("Backspace"));
  CHECK(st.element_state("welcome", "name").text == "Bo");
  st.dispatch(Event::key_named("Enter"));
  CHECK(st.element_state("welcome", "title").text == "committed");
  st.dispatch(Event::key_named("F5"));
  CHECK(st.element_state("welcome", "agree").checked);
}

TEST_CASE("goal requires the screen and every declared state") {
  SimState st(wizard());
  st.dispatch(Event::click(230, 210));
  st.advance_clock(10);
  st.dispatch(Event::click(230, 210));
  CHECK(st.current_screen() == "done");
  CHECK_FALSE(st.goal_reached());

  SimState ok(wizard());
  ok.dispatch(Event::click(15, 48));
  ok.dispatch(Event::click(230, 210));
  ok.advance_clock(10);
  ok.dispatch(Event::click(230, 210));
  CHECK(ok.goal_reached());
}

TEST_CASE("replaying the event log reproduces the final state") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> px(0, 319), py(0, 239), dt(0, 4), pick(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    SimState st(wizard());
    for (int i = 0; i < 30; ++i) {
      const int p = pick(rng);
      if (p < 6) st.dispatch(Event::click(px(rng), py(rng)));
      else if (p < 8) st.dispatch(Event::key_char(static_cast<char>('a' + pick(rng))));
      else st.dispatch(Event::key_named(p == 8 ? "Enter" : "F5"));
      st.advance_clock(dt(rng));
    }
    const SimState again = replay(wizard(), st.event_log(), st.clock());
    CHECK(again.digest() == st.digest());
    CHECK(render(again) == render(st));
  }
}

TEST_CASE("hit testing picks the topmost visible element") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> pos(0, 150), size(5, 60), flag(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    json j = {{"screen_size", {220, 220}}, {"initial", "s"}};
    json elements = json::array();
    const int n = 2 + trial % 6;
    for (int i = 0; i < n; ++i) {
      elements.push_back({{"id", "b" + std::to_string(i)},
                          {"kind", "button"},
                          {"rect", {pos(rng), pos(rng), size(rng), size(rng)}},
                          {"state", {{"visible", flag(rng) != 0}}}});
    }
    j["screens"] = json::array({{{"id", "s"}, {"elements", elements}}});
    json transitions = json::array();
    for (int i = 0; i < n; ++i) {
      transitions.push_back({{"on", {"s", "b" + std::to_string(i), "click"}},
                             {"effects", json::array({{{"set_state", {{"element", "b" + std::to_string(i)},
                                                                       {"field", "text"},
                                                                       {"value", "hit"}}}}})}});
    }
    j["transitions"] = transitions;
    const Scene scene = parse_scenario(j, ".");
    const int x = pos(rng) + 20, y = pos(rng) + 20;
    std::string expected;
    for (const auto& el : scene.screens[0].elements)
      if (el.state.visible && el.contains(x, y)) expected = el.id;
    SimState st(scene);
    st.dispatch(Event::click(x, y));
    for (const auto& el : scene.screens[0].elements) {
      CHECK((st.element_state("s", el.id).text == "hit") == (el.id == expected));
    }
  }
}

TEST_CASE("disabled elements swallow clicks") {
  auto j = wizard_json();
  j["screens"][0]["elements"][3]["state"] = {{"enabled", false}};
  const Scene scene = parse_scenario(j, ".");
  SimState st(scene);
  st.dispatch(Event::click(230, 210));
  CHECK(st.current_screen() == "welcome");
}
