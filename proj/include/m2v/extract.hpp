#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "m2v/manual.hpp"

namespace m2v::extract {

enum class TargetType { Button, Checkbox, Menu, Textbox, Icon, Text, Unknown };
enum class Peripheral { Mouse, Keyboard };
enum class Style { Auto, Emphasis, ExplicitType };

std::string_view to_string(TargetType t);
TargetType parse_target_type(std::string_view s);
std::string_view to_string(Style s);
Style parse_style(std::string_view s);

struct KeywordInfo {
  Peripheral peripheral = Peripheral::Mouse;
  TargetType default_type = TargetType::Unknown;
};

/// Action keywords, determiners and GUI noun hints. Keys are stems.
class Lexicon {
 public:
  static const Lexicon& builtin();
  /// Reads `{"keywords": {...}, "noun_hints": [...] | {...}, "determiners": [...],
  /// "style": "..."}`. Missing sections fall back to the built-in defaults.
  static Lexicon from_json(const nlohmann::json& j);
  static Lexicon load(const std::filesystem::path& path);

  const KeywordInfo* keyword(std::string_view word) const;
  bool is_determiner(std::string_view word) const;
  /// Type hinted by a GUI noun such as "button"; nullopt if the word is no hint.
  std::optional<TargetType> noun_hint(std::string_view word) const;
  Style style() const noexcept { return style_; }

 private:
  std::map<std::string, KeywordInfo, std::less<>> keywords_;
  std::map<std::string, TargetType, std::less<>> noun_hints_;
  std::vector<std::string> determiners_;
  Style style_ = Style::Auto;
};

/// Porter-style step 1a/1b suffix stripping with final-e restoration,
/// repeated until the word stops changing. Lowercases its input.
std::string stem(std::string_view word);

enum class Tag { Verb, Noun, Determiner, Symbol, Other };
std::string_view to_string(Tag t);

struct Token {
  std::string text;
  Tag tag = Tag::Other;
  /// Set for emphasis inlines and double-quoted phrases, which stay whole.
  bool emphasis = false;
  bool code_span = false;
  std::size_t position = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

std::vector<Token> tokenize(const manual::Inlines& inlines);
std::vector<Token> tag_tokens(std::vector<Token> tokens, const Lexicon& lexicon);
std::vector<Token> correct_tags(std::vector<Token> tokens, const Lexicon& lexicon);

struct ActionRecord {
  std::string keyword;
  TargetType target_type = TargetType::Unknown;
  std::string target_object;
  std::optional<std::string> target_path;
  std::optional<std::string> condition;
  /// Index of the block the keyword came from.
  std::size_t source_block = 0;
  /// Manual image associated with the record, relative to the manual.
  std::optional<std::string> candidate_image;

  friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

/// Resolves Auto to Emphasis iff the document has any emphasis inline.
Style resolve_style(const manual::ManualDocument& doc, Style style);

/// Records for one instruction, as if it were a single-step document.
std::vector<ActionRecord> extract_sentence_actions(const manual::Inlines& inlines, const Lexicon& lexicon,
                                                   Style style);

/// Throws NoActionsFound when the document yields nothing.
std::vector<ActionRecord> extract_actions(const manual::ManualDocument& doc, const Lexicon& lexicon,
                                          Style style = Style::Auto);

std::vector<ActionRecord> attach_manual_images(std::vector<ActionRecord> records,
                                               const manual::ManualDocument& doc);

nlohmann::json to_json(const ActionRecord& r);
ActionRecord record_from_json(const nlohmann::json& j);
nlohmann::json records_to_json(const std::vector<ActionRecord>& records);
std::vector<ActionRecord> records_from_json(const nlohmann::json& j);
void write_actions(const std::vector<ActionRecord>& records, const std::filesystem::path& path);
std::vector<ActionRecord> read_actions(const std::filesystem::path& path);

}  // namespace m2v::extract
