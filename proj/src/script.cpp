#include "m2v/script.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "m2v/error.hpp"

namespace m2v::script {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool iequals(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

std::filesystem::path resolve_path(const std::filesystem::path& p, const std::filesystem::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

struct KeywordSpec {
  std::string_view name;
  KeywordArity arity;
  bool locating;
  bool image;
};

constexpr KeywordSpec kKeywords[] = {
    {"click_image", {1, 1}, true, true},
    {"click_text", {1, 1}, true, false},
    {"right_click_image", {1, 1}, true, true},
    {"right_click_text", {1, 1}, true, false},
    {"double_click_image", {1, 1}, true, true},
    {"double_click_text", {1, 1}, true, false},
    {"type_text", {1, 2}, false, false},
    {"press_key", {1, 1}, false, false},
    {"wait", {1, 1}, false, false},
    {"wait_for_image", {1, 1}, true, true},
    {"wait_for_text", {1, 1}, true, false},
    {"start_recording", {0, 0}, false, false},
    {"stop_recording", {0, 0}, false, false},
};

const KeywordSpec* find_keyword(std::string_view name) {
  for (const auto& k : kKeywords)
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

std::optional<KeywordArity> keyword_arity(std::string_view keyword) {
  if (const auto* k = find_keyword(keyword)) return k->arity;
  return std::nullopt;
}

bool is_locating_keyword(std::string_view keyword) {
  const auto* k = find_keyword(keyword);
  return k && k->locating;
}

bool is_image_keyword(std::string_view keyword) {
  const auto* k = find_keyword(keyword);
  return k && k->image;
}

std::optional<std::string> ActionScript::setting(std::string_view key) const {
  for (const auto& [k, v] : settings)
    if (k == key) return v;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Knowledge base

std::string routine_key(std::string_view keyword, std::string_view target) {
  return extract::stem(keyword) + " " + lower(target);
}

KnowledgeBase KnowledgeBase::from_json(const json& j, std::filesystem::path base_dir) {
  KnowledgeBase kb;
  kb.base_dir = std::move(base_dir);
  auto schema = [](const std::string& pointer, const std::string& msg) {
    return Error(ErrorCode::SchemaError, pointer + ": " + msg);
  };
  if (!j.is_object()) throw schema("", "knowledge base must be a JSON object");
  try {
    if (j.contains("elements")) {
      for (const auto& [name, path] : j.at("elements").items()) {
        const std::string rel = path.get<std::string>();
        if (!std::filesystem::is_regular_file(resolve_path(rel, kb.base_dir))) {
          throw schema("/elements/" + name, "image not found: " + rel);
        }
        kb.element_images[name] = rel;
      }
    }
    if (j.contains("defaults")) {
      for (const auto& [name, value] : j.at("defaults").items()) {
        kb.defaults[name] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    if (j.contains("slow_targets")) {
      for (const auto& t : j.at("slow_targets")) kb.slow_targets.push_back(t.get<std::string>());
    }
    if (j.contains("routines")) {
      for (const auto& [name, steps] : j.at("routines").items()) {
        if (!steps.is_array() || steps.empty()) throw schema("/routines/" + name, "routine needs at least one step");
        std::vector<ActionRecord> records;
        for (const auto& s : steps) records.push_back(extract::record_from_json(s));
        kb.routines[lower(name)] = std::move(records);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("knowledge base: ") + e.what());
  }
  // Expansion is single-level; a routine step that is itself a routine would
  // make expand_abstract depend on how often it runs.
  for (const auto& [name, steps] : kb.routines) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (kb.routines.count(routine_key(steps[i].keyword, steps[i].target_object))) {
        throw schema("/routines/" + name + "/" + std::to_string(i), "routine step names another routine");
      }
    }
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "kb.json" : path;
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::FileNotFound, file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, file.string() + ": " + e.what());
  }
  return from_json(j, std::filesystem::absolute(file).parent_path());
}

std::optional<std::filesystem::path> KnowledgeBase::element_image(std::string_view name) const {
  for (const auto& [k, v] : element_images)
    if (iequals(k, name)) return resolve_path(v, base_dir);
  return std::nullopt;
}

const std::vector<ActionRecord>* KnowledgeBase::routine(const ActionRecord& record) const {
  const auto it = routines.find(routine_key(record.keyword, record.target_object));
  return it == routines.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Enrichment steps

ScriptStep map_peripheral(const ActionRecord& record, const extract::Lexicon* lexicon) {
  const std::string key = extract::stem(record.keyword);
  ScriptStep step;
  auto pointer = [&](std::string_view image_kw, std::string_view text_kw) {
    if (record.target_path) {
      step.keyword = image_kw;
      step.args = {*record.target_path};
    } else {
      step.keyword = text_kw;
      step.args = {record.target_object};
    }
  };
  if (key == "click" || key == "select" || key == "check" || key == "uncheck" || key == "choose" || key == "open") {
    pointer("click_image", "click_text");
  } else if (key == "right-click") {
    pointer("right_click_image", "right_click_text");
  } else if (key == "double-click") {
    pointer("double_click_image", "double_click_text");
  } else if (key == "type" || key == "input" || key == "enter") {
    step.keyword = "type_text";
    step.args = {record.target_object};
  } else if (key == "press") {
    step.keyword = "press_key";
    step.args = {record.target_object};
  } else if (const extract::KeywordInfo* info = lexicon ? lexicon->keyword(key) : nullptr) {
    if (info->peripheral == extract::Peripheral::Keyboard) {
      step.keyword = "type_text";
      step.args = {record.target_object};
    } else {
      pointer("click_image", "click_text");
    }
  } else {
    throw Error(ErrorCode::UnmappableKeyword, "no peripheral mapping for keyword '" + record.keyword + "'");
  }
  if (step.args.front().empty()) {
    throw Error(ErrorCode::UnmappableKeyword, "keyword '" + record.keyword + "' has no target");
  }
  step.condition = record.condition;
  return step;
}

namespace {

std::optional<WaitTarget> target_of(const ScriptStep& step) {
  if (!is_locating_keyword(step.keyword) || step.args.empty()) return std::nullopt;
  return WaitTarget{is_image_keyword(step.keyword) ? WaitTarget::Kind::Image : WaitTarget::Kind::Text,
                    step.args.front()};
}

bool is_slow(const ScriptStep& step, const CompileConfig& config) {
  if (step.args.empty()) return false;
  const std::string target = step.args.front();
  const auto stem_of = std::filesystem::path(target).stem().string();
  return std::any_of(config.slow_targets.begin(), config.slow_targets.end(),
                     [&](const std::string& s) { return iequals(s, target) || iequals(s, stem_of); });
}

}  // namespace

std::vector<ScriptStep> insert_waits(std::vector<ScriptStep> steps, const CompileConfig& config) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    ScriptStep& step = steps[i];
    if (step.wait_after || step.wait_for) continue;
    if (step.keyword == "start_recording" || step.keyword == "stop_recording") {
      step.wait_after = 0.0;
      continue;
    }
    if (is_slow(step, config) && i + 1 < steps.size()) {
      if (auto next = target_of(steps[i + 1])) {
        step.wait_for = std::move(next);
        step.timeout = config.wait_for_timeout;
        step.wait_after = 0.0;
        continue;
      }
    }
    step.wait_after = config.wait_seconds;
  }
  return steps;
}

std::vector<ActionRecord> attach_paths(std::vector<ActionRecord> records, const KnowledgeBase& kb) {
  for (auto& r : records) {
    if (r.target_path) continue;
    if (auto path = kb.element_image(r.target_object)) {
      r.target_path = path->string();
    } else if (r.target_type == extract::TargetType::Icon) {
      spdlog::warn("no knowledge-base image for icon '{}'", r.target_object);
    }
  }
  return records;
}

std::vector<ActionRecord> expand_abstract(const std::vector<ActionRecord>& records, const KnowledgeBase& kb,
                                          std::vector<std::size_t>* origins) {
  std::vector<ActionRecord> out;
  if (origins) origins->clear();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto* routine = kb.routine(records[i]);
    if (!routine) {
      out.push_back(records[i]);
      if (origins) origins->push_back(i);
      continue;
    }
    for (ActionRecord step : *routine) {
      step.source_block = records[i].source_block;
      if (!step.condition) step.condition = records[i].condition;
      if (step.target_path) step.target_path = resolve_path(*step.target_path, kb.base_dir).string();
      out.push_back(std::move(step));
      if (origins) origins->push_back(i);
    }
  }
  return out;
}

std::vector<ActionRecord> fill_parameters(std::vector<ActionRecord> records, const KnowledgeBase& kb,
                                          const std::map<std::string, std::string>& overrides) {
  auto resolve = [&](const std::string& name) -> std::optional<std::string> {
    if (const auto it = overrides.find(name); it != overrides.end()) return it->second;
    if (const auto it = kb.defaults.find(name); it != kb.defaults.end()) return it->second;
    throw Error(ErrorCode::UnresolvedParameter, "no value bound to ${" + name + "}");
  };
  for (auto& r : records) {
    r.target_object = substitute(r.target_object, resolve);
    if (r.target_path) r.target_path = substitute(*r.target_path, resolve);
  }
  return records;
}

ActionScript compile(const std::vector<ActionRecord>& records, const KnowledgeBase& kb, const CompileConfig& config) {
  if (records.empty()) throw Error(ErrorCode::InvalidArgument, "cannot compile an empty action list");

  std::vector<std::size_t> origins;
  auto enriched = attach_paths(records, kb);
  enriched = expand_abstract(enriched, kb, &origins);
  enriched = attach_paths(std::move(enriched), kb);

  // Record which parameters were bound so the Variables section documents them.
  std::map<std::string, std::string> used;
  for (const auto& r : enriched) {
    substitute(r.target_object + (r.target_path ? *r.target_path : ""), [&](const std::string& name) {
      const auto o = config.overrides.find(name);
      const auto d = kb.defaults.find(name);
      if (o != config.overrides.end()) used[name] = o->second;
      else if (d != kb.defaults.end()) used[name] = d->second;
      return std::optional<std::string>{};
    });
  }
  enriched = fill_parameters(std::move(enriched), kb, config.overrides);

  std::vector<ScriptStep> steps;
  for (std::size_t i = 0; i < enriched.size(); ++i) {
    ScriptStep step = map_peripheral(enriched[i], config.lexicon);
    step.origin = origins[i];
    if (is_image_keyword(step.keyword) && !std::filesystem::is_regular_file(resolve_path(step.args[0], config.base_dir))) {
      throw Error(ErrorCode::FileNotFound, "image for step " + std::to_string(i) + " not found: " + step.args[0]);
    }
    steps.push_back(std::move(step));
  }
  CompileConfig wait_config = config;
  for (const auto& t : kb.slow_targets) wait_config.slow_targets.push_back(t);
  steps = insert_waits(std::move(steps), wait_config);

  ScriptStep start{"start_recording", {}, 0.0, std::nullopt, config.wait_for_timeout, std::nullopt, std::nullopt};
  ScriptStep stop{"stop_recording", {}, 0.0, std::nullopt, config.wait_for_timeout, std::nullopt, std::nullopt};
  steps.insert(steps.begin(), start);
  steps.push_back(stop);

  ActionScript script;
  script.settings = {
      {"environment", config.environment},
      {"screen_size", std::to_string(config.screen_width) + "x" + std::to_string(config.screen_height)},
      {"fps", std::to_string(config.fps)},
      {"start_hotkey", "F2"},
      {"stop_hotkey", "F1"},
  };
  for (const auto& [k, v] : used) script.variables.emplace_back(k, v);
  script.test_cases.push_back({config.test_case_name, std::move(steps)});
  return script;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

constexpr std::string_view kSections[] = {"Settings", "Variables", "Test Cases", "Keywords"};
constexpr std::string_view kEmpty = "${EMPTY}";

std::string format_number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

// Escapes a cell so it survives column splitting: backslashes, spaces that
// could merge into a separator, and leading characters with a meaning.
std::string escape_cell(std::string_view cell) {
  if (cell.empty()) return std::string(kEmpty);
  std::string out;
  for (std::size_t i = 0; i < cell.size(); ++i) {
    const char c = cell[i];
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else if (c == '\r') {
      out += "\\r";
    } else if (c == ' ') {
      const bool edge = i == 0 || i + 1 == cell.size();
      const bool run = (i > 0 && cell[i - 1] == ' ') || (i + 1 < cell.size() && cell[i + 1] == ' ');
      out += (edge || run) ? "\\ " : " ";
    } else if (i == 0 && (c == '#' || c == '@' || c == '*')) {
      out.push_back('\\');
      out.push_back(c);
    } else if (i == 0 && c == '$' && cell == kEmpty) {
      out += "\\$";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

struct Cell {
  std::string text;
  bool escaped_start = false;  // first character was written with a backslash
};

// Splits a line (without indentation) into cells separated by two or more
// spaces or a tab. A cell starting with an unescaped '#' begins a comment.
std::vector<Cell> split_cells(std::string_view line, std::size_t line_no) {
  std::vector<Cell> cells;
  Cell cur;
  bool have = false;
  std::size_t i = 0;
  auto finish = [&] {
    if (have) cells.push_back(std::move(cur));
    cur = Cell{};
    have = false;
  };
  while (i < line.size()) {
    const char c = line[i];
    if (c == '\\') {
      if (i + 1 >= line.size()) throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line_no) + ": dangling backslash");
      const char n = line[i + 1];
      if (!have) cur.escaped_start = true;
      switch (n) {
        case 'n': cur.text.push_back('\n'); break;
        case 't': cur.text.push_back('\t'); break;
        case 'r': cur.text.push_back('\r'); break;
        default: cur.text.push_back(n); break;
      }
      have = true;
      i += 2;
      continue;
    }
    if (c == '\t' || (c == ' ' && i + 1 < line.size() && line[i + 1] == ' ')) {
      finish();
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      continue;
    }
    if (c == ' ' && !have) {
      ++i;
      continue;
    }
    if (c == '#' && !have) break;
    if (c == ' ' && i + 1 == line.size()) {
      ++i;
      continue;
    }
    cur.text.push_back(c);
    have = true;
    ++i;
  }
  finish();
  for (auto& cell : cells) {
    if (!cell.escaped_start && cell.text == kEmpty) cell.text.clear();
  }
  return cells;
}

std::string serialize_step(const ScriptStep& step) {
  std::string line = "    " + step.keyword;
  for (const auto& a : step.args) line += "  " + escape_cell(a);
  if (step.wait_after) line += "  @wait=" + format_number(*step.wait_after);
  if (step.wait_for) {
    line += "  " + escape_cell(std::string("@wait_for=") +
                               (step.wait_for->kind == WaitTarget::Kind::Image ? "image:" : "text:") +
                               step.wait_for->value)
                       .substr(1);
  }
  if (step.timeout != 30.0) line += "  @timeout=" + format_number(step.timeout);
  line += "  @origin=" + (step.origin ? std::to_string(*step.origin) : std::string("enrichment"));
  if (step.condition) line += "  " + escape_cell("@if=" + *step.condition).substr(1);
  return line;
}

ScriptStep parse_step(const std::vector<Cell>& cells, std::size_t line_no) {
  auto fail = [&](const std::string& msg) {
    return Error(ErrorCode::SyntaxError, "line " + std::to_string(line_no) + ": " + msg);
  };
  ScriptStep step;
  step.keyword = cells.front().text;
  const auto arity = keyword_arity(step.keyword);
  if (!arity) throw fail("unknown keyword '" + step.keyword + "'");
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    if (cell.escaped_start || cell.text.empty() || cell.text[0] != '@') {
      step.args.push_back(cell.text);
      continue;
    }
    const auto eq = cell.text.find('=');
    if (eq == std::string::npos) throw fail("annotation without value: " + cell.text);
    const std::string name = cell.text.substr(1, eq - 1);
    const std::string value = cell.text.substr(eq + 1);
    if (name == "wait") {
      const auto v = parse_number(value);
      if (!v || *v < 0) throw fail("bad wait: " + value);
      step.wait_after = v;
    } else if (name == "timeout") {
      const auto v = parse_number(value);
      if (!v || *v <= 0) throw fail("bad timeout: " + value);
      step.timeout = *v;
    } else if (name == "wait_for") {
      if (value.rfind("image:", 0) == 0) step.wait_for = WaitTarget{WaitTarget::Kind::Image, value.substr(6)};
      else if (value.rfind("text:", 0) == 0) step.wait_for = WaitTarget{WaitTarget::Kind::Text, value.substr(5)};
      else throw fail("wait_for needs an image: or text: prefix");
    } else if (name == "origin") {
      if (value != "enrichment") {
        std::size_t v = 0;
        const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || end != value.data() + value.size()) throw fail("bad origin: " + value);
        step.origin = v;
      }
    } else if (name == "if") {
      step.condition = value;
    } else {
      throw fail("unknown annotation @" + name);
    }
  }
  if (step.args.size() < arity->min_args || step.args.size() > arity->max_args) {
    throw fail("keyword '" + step.keyword + "' takes " + std::to_string(arity->min_args) +
               (arity->max_args != arity->min_args ? "-" + std::to_string(arity->max_args) : "") +
               " argument(s), got " + std::to_string(step.args.size()));
  }
  if (step.keyword == "type_text" && step.args.size() == 2 && step.args[1] != "commit") {
    throw fail("type_text's second argument must be 'commit'");
  }
  if (step.keyword == "wait" && !parse_number(step.args[0])) throw fail("wait needs a number of seconds");
  return step;
}

std::optional<std::string> section_header(std::string_view line) {
  std::string_view s = line;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() < 7 || s.substr(0, 3) != "***" || s.substr(s.size() - 3) != "***") return std::nullopt;
  std::string name(s.substr(3, s.size() - 6));
  const auto first = name.find_first_not_of(' ');
  const auto last = name.find_last_not_of(' ');
  if (first == std::string::npos) return std::string{};
  return name.substr(first, last - first + 1);
}

}  // namespace

std::string serialize_script(const ActionScript& script) {
  std::ostringstream out;
  out << "*** Settings ***\n";
  for (const auto& [k, v] : script.settings) out << escape_cell(k) << "  " << escape_cell(v) << '\n';
  out << "\n*** Variables ***\n";
  for (const auto& [k, v] : script.variables) out << "${" << k << "}  " << escape_cell(v) << '\n';
  auto blocks = [&](const std::vector<TestCase>& cases) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (i > 0) out << '\n';
      out << escape_cell(cases[i].name) << '\n';
      for (const auto& s : cases[i].steps) out << serialize_step(s) << '\n';
    }
  };
  out << "\n*** Test Cases ***\n";
  blocks(script.test_cases);
  out << "\n*** Keywords ***\n";
  blocks(script.keywords);
  return out.str();
}

ActionScript parse_script(std::string_view text) {
  ActionScript script;
  int section = -1;
  std::size_t line_no = 0;
  std::vector<TestCase>* cases = nullptr;
  std::istringstream in{std::string(text)};
  std::string raw;
  auto fail = [&](const std::string& msg) {
    return Error(ErrorCode::SyntaxError, "line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const auto first = raw.find_first_not_of(" \t");
    if (first == std::string::npos || raw[first] == '#') continue;

    if (auto header = section_header(raw)) {
      const int expected = section + 1;
      if (expected >= 4 || !iequals(*header, kSections[expected])) {
        throw fail("expected section '*** " +
                   std::string(expected < 4 ? kSections[expected] : std::string_view("end of file")) + " ***', got '" +
                   *header + "'");
      }
      section = expected;
      cases = section == 2 ? &script.test_cases : section == 3 ? &script.keywords : nullptr;
      continue;
    }
    if (section < 0) throw fail("content before the first section header");

    const bool indented = first > 0;
    const auto cells = split_cells(std::string_view(raw).substr(first), line_no);
    if (cells.empty()) continue;
    if (section == 0) {
      if (cells.size() != 2) throw fail("setting needs a key and a value");
      script.settings.emplace_back(cells[0].text, cells[1].text);
    } else if (section == 1) {
      const std::string& name = cells[0].text;
      if (cells.size() != 2 || name.size() < 4 || name.rfind("${", 0) != 0 || name.back() != '}') {
        throw fail("variable line must be '${name}  value'");
      }
      script.variables.emplace_back(name.substr(2, name.size() - 3), cells[1].text);
    } else if (!indented) {
      if (cells.size() != 1) throw fail("test case or keyword name must be alone on its line");
      cases->push_back({cells[0].text, {}});
    } else {
      if (cases->empty()) throw fail("step outside a test case");
      cases->back().steps.push_back(parse_step(cells, line_no));
    }
  }
  if (section < 3) {
    ++line_no;
    throw fail("missing section '*** " + std::string(kSections[section + 1]) + " ***'");
  }
  if (script.test_cases.empty()) throw fail("script has no test case");
  return script;
}

ActionScript read_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_script(buf.str());
}

void write_script(const ActionScript& script, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << serialize_script(script);
}

}  // namespace m2v::script
