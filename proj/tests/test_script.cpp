#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "m2v/error.hpp"
#include "m2v/raster.hpp"
#include "m2v/script.hpp"

using namespace m2v;
using namespace m2v::script;
using extract::TargetType;
using nlohmann::json;

namespace {

ActionRecord rec(std::string kw, TargetType type, std::string obj, std::optional<std::string> path = std::nullopt) {
  ActionRecord r;
  r.keyword = std::move(kw);
  r.target_type = type;
  r.target_object = std::move(obj);
  r.target_path = std::move(path);
  return r;
}

// A knowledge base in a scratch directory with two icons and one routine.
KnowledgeBase scratch_kb() {
  const auto dir = std::filesystem::temp_directory_path() / "m2v_script_kb";
  std::filesystem::create_directories(dir / "icons");
  write_ppm(Raster(8, 8, {10, 20, 200}), dir / "icons" / "start.ppm");
  write_ppm(Raster(8, 8, {200, 20, 10}), dir / "icons" / "search.ppm");
  const json j = json::parse(R"({
    "elements": {"Windows menu": "icons/start.ppm", "Search": "icons/search.ppm"},
    "routines": {
      "open settings": [
        {"keyword": "click", "target_type": "Icon", "target_object": "Search"},
        {"keyword": "type", "target_type": "Text", "target_object": "settings"},
        {"keyword": "click", "target_type": "Text", "target_object": "Settings"}
      ],
      "open notepad": [{"keyword": "double-click", "target_type": "Icon", "target_object": "Notepad"}]
    },
    "defaults": {"ip_address": "192.0.2.10", "install_dir": "C:/Program Files/App"},
    "slow_targets": ["Install"]
  })");
  return KnowledgeBase::from_json(j, dir);
}

std::string random_cell(std::mt19937& rng) {
  static const std::string alphabet = "ab #@$\\{}*\t\nxyz  EMPTY";
  std::uniform_int_distribution<int> len(0, 8), pick(0, static_cast<int>(alphabet.size()) - 1), coin(0, 9);
  if (coin(rng) == 0) return "${EMPTY}";
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(alphabet[static_cast<std::size_t>(pick(rng))]);
  return s;
}

}  // namespace

TEST_CASE("map_peripheral") {
  const ScriptStep img = map_peripheral(rec("click", TargetType::Button, "Next", "p.ppm"));
  CHECK(img.keyword == "click_image");
  CHECK(img.args == std::vector<std::string>{"p.ppm"});
  CHECK(map_peripheral(rec("select", TargetType::Menu, "File")).keyword == "click_text");
  const ScriptStep typed = map_peripheral(rec("type", TargetType::Text, "ipconfig"));
  CHECK(typed.keyword == "type_text");
  CHECK(typed.args == std::vector<std::string>{"ipconfig"});
  const ScriptStep key = map_peripheral(rec("press", TargetType::Unknown, "Enter"));
  CHECK(key.keyword == "press_key");
  CHECK(key.args == std::vector<std::string>{"Enter"});
  CHECK(map_peripheral(rec("right-click", TargetType::Icon, "Network")).keyword == "right_click_text");
  CHECK(map_peripheral(rec("double-click", TargetType::Icon, "App", "a.ppm")).keyword == "double_click_image");
  CHECK_THROWS_AS(map_peripheral(rec("drag", TargetType::Unknown, "x")), Error);
}

TEST_CASE("insert_waits") {
  CompileConfig cfg;
  CHECK(insert_waits({}, cfg).empty());
  auto steps = insert_waits({map_peripheral(rec("click", TargetType::Button, "A")),
                             map_peripheral(rec("click", TargetType::Button, "B"))},
                            cfg);
  CHECK(steps[0].wait_after == std::optional<double>(2.0));
  CHECK_FALSE(steps[0].wait_for.has_value());

  cfg.slow_targets = {"Install"};
  steps = insert_waits({map_peripheral(rec("click", TargetType::Button, "Install")),
                        map_peripheral(rec("click", TargetType::Button, "Finish"))},
                       cfg);
  REQUIRE(steps[0].wait_for.has_value());
  CHECK(steps[0].wait_for->kind == WaitTarget::Kind::Text);
  CHECK(steps[0].wait_for->value == "Finish");
  CHECK(steps[0].timeout == 30.0);
  CHECK(steps[1].wait_after == std::optional<double>(2.0));
}

TEST_CASE("attach_paths") {
  const KnowledgeBase kb = scratch_kb();
  auto out = attach_paths({rec("click", TargetType::Icon, "Windows menu"),
                           rec("click", TargetType::Button, "Next", "crop.ppm"),
                           rec("click", TargetType::Icon, "Unknown thing")},
                          kb);
  REQUIRE(out[0].target_path.has_value());
  CHECK(std::filesystem::path(*out[0].target_path).filename() == "start.ppm");
  CHECK(out[1].target_path == std::optional<std::string>("crop.ppm"));
  CHECK_FALSE(out[2].target_path.has_value());
}

TEST_CASE("expand_abstract") {
  const KnowledgeBase kb = scratch_kb();
  const std::vector<ActionRecord> in{rec("click", TargetType::Button, "Next"), rec("open", TargetType::Unknown, "Settings"),
                                     rec("opening", TargetType::Unknown, "notepad")};
  std::vector<std::size_t> origins;
  const auto out = expand_abstract(in, kb, &origins);
  REQUIRE(out.size() == 5);
  CHECK(out[1].target_object == "Search");
  CHECK(out[2].keyword == "type");
  CHECK(out[4].keyword == "double-click");
  CHECK(origins == std::vector<std::size_t>{0, 1, 1, 1, 2});
  CHECK(expand_abstract(out, kb) == out);
  const std::vector<ActionRecord> plain{rec("click", TargetType::Button, "Next")};
  CHECK(expand_abstract(plain, kb) == plain);

  const json looping = json::parse(R"({"routines": {"open a": [{"keyword": "open", "target_object": "b"}],
                                                     "open b": [{"keyword": "click", "target_object": "x"}]}})");
  CHECK_THROWS_AS(KnowledgeBase::from_json(looping, {}), Error);
}

TEST_CASE("fill_parameters") {
  const KnowledgeBase kb = scratch_kb();
  auto out = fill_parameters({rec("type", TargetType::Text, "${ip_address}")}, kb, {});
  CHECK(out[0].target_object == "192.0.2.10");
  out = fill_parameters({rec("type", TargetType::Text, "${ip_address}")}, kb, {{"ip_address", "10.0.0.2"}});
  CHECK(out[0].target_object == "10.0.0.2");
  const std::vector<ActionRecord> plain{rec("type", TargetType::Text, "hello")};
  CHECK(fill_parameters(plain, kb, {}) == plain);
  CHECK_THROWS_AS(fill_parameters({rec("type", TargetType::Text, "${nope}")}, kb, {}), Error);
}

TEST_CASE("compile") {
  const KnowledgeBase kb = scratch_kb();
  CompileConfig cfg;
  // The teaser sequence: menu, search text, result entry, button.
  const std::vector<ActionRecord> teaser{
      rec("click", TargetType::Icon, "Windows menu"), rec("type", TargetType::Text, "environment"),
      rec("click", TargetType::Text, "Edit the system environment variables"),
      rec("click", TargetType::Button, "Environment Variables")};
  const ActionScript s = compile(teaser, kb, cfg);
  REQUIRE(s.test_cases.size() == 1);
  const auto& steps = s.test_cases[0].steps;
  REQUIRE(steps.size() == 6);
  CHECK(steps.front().keyword == "start_recording");
  CHECK(steps.back().keyword == "stop_recording");
  CHECK(steps[1].keyword == "click_image");
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(steps[i].wait_after == std::optional<double>(2.0));
    CHECK(steps[i].origin == std::optional<std::size_t>(i - 1));
  }
  CHECK_FALSE(steps[0].origin.has_value());
  CHECK(s.setting("fps") == std::optional<std::string>("10"));

  CHECK(compile({rec("click", TargetType::Button, "OK")}, kb, cfg).test_cases[0].steps.size() == 3);
  const auto expanded = compile({rec("open", TargetType::Unknown, "settings")}, kb, cfg);
  CHECK(expanded.test_cases[0].steps.size() == 3 + 2);

  CHECK_THROWS_AS(compile({}, kb, cfg), Error);
  CHECK_THROWS_AS(compile({rec("click", TargetType::Button, "x", "/no/such.ppm")}, kb, cfg), Error);

  cfg.overrides = {{"ip_address", "10.0.0.2"}};
  const auto typed = compile({rec("type", TargetType::Text, "${ip_address}")}, kb, cfg);
  CHECK(typed.test_cases[0].steps[1].args[0] == "10.0.0.2");
  CHECK(typed.variables == std::vector<std::pair<std::string, std::string>>{{"ip_address", "10.0.0.2"}});
}

TEST_CASE("script text format") {
  ActionScript minimal;
  minimal.test_cases.push_back({"Manual", {ScriptStep{"click_text", {"Next"}, 2.0, std::nullopt, 30.0, 0, std::nullopt}}});
  const std::string text = serialize_script(minimal);
  CHECK(text.find("*** Settings ***") != std::string::npos);
  CHECK(text.find("*** Variables ***") != std::string::npos);
  CHECK(text.find("*** Test Cases ***") != std::string::npos);
  CHECK(text.find("*** Keywords ***") != std::string::npos);
  CHECK(text.find("    click_text  Next  @wait=2  @origin=0") != std::string::npos);
  CHECK(parse_script(text) == minimal);

  const std::string no_cases = "*** Settings ***\n*** Variables ***\n*** Keywords ***\n";
  CHECK_THROWS_AS(parse_script(no_cases), Error);
  try {
    parse_script("*** Settings ***\n*** Variables ***\n*** Test Cases ***\nT\n    fly  x\n*** Keywords ***\n");
    FAIL("expected a syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SyntaxError);
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_script("*** Settings ***\n*** Variables ***\n*** Test Cases ***\nT\n    click_text\n*** Keywords ***\n"),
                  Error);

  const std::string commented =
      "# header comment\n*** Settings ***\nfps  10  # trailing\n\n*** Variables ***\n${a}  b\n"
      "*** Test Cases ***\nMain\n    type_text  words here  commit  @wait=0.5\n*** Keywords ***\n";
  const ActionScript parsed = parse_script(commented);
  CHECK(parsed.setting("fps") == std::optional<std::string>("10"));
  REQUIRE(parsed.test_cases[0].steps.size() == 1);
  CHECK(parsed.test_cases[0].steps[0].args == std::vector<std::string>{"words here", "commit"});
}

TEST_CASE("randomized scripts round-trip") {
  std::mt19937 rng(2024);
  const std::vector<std::string> keywords{"click_image", "click_text", "right_click_text", "type_text",
                                          "press_key", "wait_for_text", "double_click_image"};
  std::uniform_int_distribution<int> kw(0, static_cast<int>(keywords.size()) - 1), n_steps(0, 6), coin(0, 1);
  std::uniform_real_distribution<double> secs(0.0, 40.0);
  for (int trial = 0; trial < 300; ++trial) {
    ActionScript s;
    s.settings = {{random_cell(rng), random_cell(rng)}};
    s.variables = {{"v" + std::to_string(trial), random_cell(rng)}};
    TestCase tc{random_cell(rng), {}};
    const int n = n_steps(rng);
    for (int i = 0; i < n; ++i) {
      ScriptStep st;
      st.keyword = keywords[static_cast<std::size_t>(kw(rng))];
      st.args = {random_cell(rng)};
      if (coin(rng)) st.wait_after = secs(rng);
      if (coin(rng)) st.wait_for = WaitTarget{coin(rng) ? WaitTarget::Kind::Image : WaitTarget::Kind::Text, random_cell(rng)};
      if (coin(rng)) st.timeout = secs(rng) + 1.0;
      if (coin(rng)) st.origin = static_cast<std::size_t>(i);
      if (coin(rng)) st.condition = random_cell(rng);
      tc.steps.push_back(st);
    }
    s.test_cases.push_back(tc);
    if (coin(rng)) s.keywords.push_back({"helper", {ScriptStep{"press_key", {"F5"}, 1.0, std::nullopt, 30.0, std::nullopt, std::nullopt}}});
    const std::string text = serialize_script(s);
    ActionScript back;
    REQUIRE_NOTHROW(back = parse_script(text));
    CHECK_MESSAGE(back == s, text);
  }
}

TEST_CASE("knowledge base loading") {
  const auto dir = std::filesystem::temp_directory_path() / "m2v_kb_load";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "kb.json") << R"({"elements": {"Ghost": "missing.ppm"}})";
  try {
    KnowledgeBase::load(dir);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("/elements/Ghost") != std::string::npos);
  }
  CHECK_THROWS_AS(KnowledgeBase::load(dir / "nope"), Error);
}
