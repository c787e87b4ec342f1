#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "m2v/extract.hpp"

namespace m2v::script {

using extract::ActionRecord;

/// Common GUI element images, abstract-action routines and parameter
/// defaults, loaded from `<dir>/kb.json`.
struct KnowledgeBase {
  std::filesystem::path base_dir;
  /// Element name -> image path relative to base_dir.
  std::map<std::string, std::string> element_images;
  /// "<keyword> <target>" (lowercase) -> replacement records.
  std::map<std::string, std::vector<ActionRecord>> routines;
  std::map<std::string, std::string> defaults;
  /// Targets whose actions take variable time (installs); their step waits
  /// for the next target instead of sleeping a fixed interval.
  std::vector<std::string> slow_targets;

  /// Accepts the directory or the kb.json file itself. Throws FileNotFound,
  /// MalformedInput or SchemaError.
  static KnowledgeBase load(const std::filesystem::path& path);
  static KnowledgeBase from_json(const nlohmann::json& j, std::filesystem::path base_dir);

  std::optional<std::filesystem::path> element_image(std::string_view name) const;
  const std::vector<ActionRecord>* routine(const ActionRecord& record) const;
};

std::string routine_key(std::string_view keyword, std::string_view target);

struct WaitTarget {
  enum class Kind { Image, Text };
  Kind kind = Kind::Text;
  std::string value;
  friend bool operator==(const WaitTarget&, const WaitTarget&) = default;
};

struct ScriptStep {
  std::string keyword;
  std::vector<std::string> args;
  /// Simulated seconds to pause after the step; unset until insert_waits.
  std::optional<double> wait_after;
  std::optional<WaitTarget> wait_for;
  double timeout = 30.0;
  /// Index of the source ActionRecord; nullopt marks enrichment steps.
  std::optional<std::size_t> origin;
  /// Trigger event from the manual; the step is skipped when its target
  /// never shows up.
  std::optional<std::string> condition;

  friend bool operator==(const ScriptStep&, const ScriptStep&) = default;
};

struct KeywordArity {
  std::size_t min_args;
  std::size_t max_args;
};

/// Arity of a built-in keyword, or nullopt if the keyword is unknown.
std::optional<KeywordArity> keyword_arity(std::string_view keyword);
bool is_locating_keyword(std::string_view keyword);
bool is_image_keyword(std::string_view keyword);

struct TestCase {
  std::string name;
  std::vector<ScriptStep> steps;
  friend bool operator==(const TestCase&, const TestCase&) = default;
};

struct ActionScript {
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<std::pair<std::string, std::string>> variables;
  std::vector<TestCase> test_cases;
  std::vector<TestCase> keywords;

  std::optional<std::string> setting(std::string_view key) const;
  friend bool operator==(const ActionScript&, const ActionScript&) = default;
};

struct CompileConfig {
  std::string environment = "default";
  int screen_width = 640;
  int screen_height = 480;
  int fps = 10;
  double wait_seconds = 2.0;
  double wait_for_timeout = 30.0;
  std::vector<std::string> slow_targets;
  std::map<std::string, std::string> overrides;
  /// Relative image paths are checked against this directory.
  std::filesystem::path base_dir;
  std::string test_case_name = "Manual";
  /// Consulted for keywords outside the built-in mapping table.
  const extract::Lexicon* lexicon = nullptr;
};

/// Step 1. Throws UnmappableKeyword.
ScriptStep map_peripheral(const ActionRecord& record, const extract::Lexicon* lexicon = nullptr);
/// Step 2.
std::vector<ScriptStep> insert_waits(std::vector<ScriptStep> steps, const CompileConfig& config);
/// Step 3. Never overwrites an existing target_path.
std::vector<ActionRecord> attach_paths(std::vector<ActionRecord> records, const KnowledgeBase& kb);
/// Step 4. `origins`, when given, receives each output record's input index.
std::vector<ActionRecord> expand_abstract(const std::vector<ActionRecord>& records, const KnowledgeBase& kb,
                                          std::vector<std::size_t>* origins = nullptr);
/// Step 5. Overrides beat KB defaults. Throws UnresolvedParameter.
std::vector<ActionRecord> fill_parameters(std::vector<ActionRecord> records, const KnowledgeBase& kb,
                                          const std::map<std::string, std::string>& overrides);
/// Replaces `${name}` placeholders; `resolve` returns nullopt for unbound names.
template <typename Resolve>
std::string substitute(std::string_view text, Resolve&& resolve);

/// Runs the five enrichment steps and brackets the result with recording
/// steps. Throws InvalidArgument for an empty record list.
ActionScript compile(const std::vector<ActionRecord>& records, const KnowledgeBase& kb,
                     const CompileConfig& config);

std::string serialize_script(const ActionScript& script);
/// Throws SyntaxError naming the offending line.
ActionScript parse_script(std::string_view text);
ActionScript read_script(const std::filesystem::path& path);
void write_script(const ActionScript& script, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <typename Resolve>
std::string substitute(std::string_view text, Resolve&& resolve) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t open = text.find("${", i);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find('}', open + 2);
    if (close == std::string_view::npos) break;
    out.append(text.substr(i, open - i));
    const std::string name(text.substr(open + 2, close - open - 2));
    if (std::optional<std::string> value = resolve(name)) {
      out += *value;
    } else {
      out.append(text.substr(open, close - open + 1));
    }
    i = close + 1;
  }
  out.append(text.substr(std::min(i, text.size())));
  return out;
}

}  // namespace m2v::script
