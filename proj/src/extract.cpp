#include "m2v/extract.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "m2v/error.hpp"

namespace m2v::extract {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80); }

template <std::size_t N>
bool one_of(std::string_view s, const std::array<std::string_view, N>& set) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

constexpr std::array<std::string_view, 3> kTerminators{".", "!", "?"};
constexpr std::array<std::string_view, 5> kBoundarySymbols{";", ",", ":", "(", "-"};
constexpr std::array<std::string_view, 5> kBoundaryWords{"then", "and", "or", "please", "to"};
constexpr std::array<std::string_view, 2> kConditionWords{"if", "when"};
// Words that end a forward noun-phrase search.
constexpr std::array<std::string_view, 16> kPhraseStops{"in", "on", "at", "from", "to", "into", "for", "with",
                                                         "under", "and", "or", "then", "by", "via", "until",
                                                         "within"};
// Words skipped before a phrase begins, e.g. "click on Settings".
constexpr std::array<std::string_view, 2> kPhraseLead{"on", "onto"};

}  // namespace

std::string_view to_string(TargetType t) {
  switch (t) {
    case TargetType::Button: return "Button";
    case TargetType::Checkbox: return "Checkbox";
    case TargetType::Menu: return "Menu";
    case TargetType::Textbox: return "Textbox";
    case TargetType::Icon: return "Icon";
    case TargetType::Text: return "Text";
    case TargetType::Unknown: return "Unknown";
  }
  return "Unknown";
}

TargetType parse_target_type(std::string_view s) {
  const std::string l = lower(s);
  for (TargetType t : {TargetType::Button, TargetType::Checkbox, TargetType::Menu, TargetType::Textbox,
                       TargetType::Icon, TargetType::Text, TargetType::Unknown}) {
    if (lower(to_string(t)) == l) return t;
  }
  throw Error(ErrorCode::MalformedInput, "unknown target type: " + std::string(s));
}

std::string_view to_string(Style s) {
  switch (s) {
    case Style::Auto: return "auto";
    case Style::Emphasis: return "emphasis";
    case Style::ExplicitType: return "explicit-type";
  }
  return "auto";
}

Style parse_style(std::string_view s) {
  if (s == "auto") return Style::Auto;
  if (s == "emphasis") return Style::Emphasis;
  if (s == "explicit-type") return Style::ExplicitType;
  throw Error(ErrorCode::InvalidArgument, "unknown style profile: " + std::string(s));
}

std::string_view to_string(Tag t) {
  switch (t) {
    case Tag::Verb: return "Verb";
    case Tag::Noun: return "Noun";
    case Tag::Determiner: return "Det";
    case Tag::Symbol: return "Symbol";
    case Tag::Other: return "Other";
  }
  return "Other";
}

// ---------------------------------------------------------------------------
// Lexicon

const Lexicon& Lexicon::builtin() {
  static const Lexicon lexicon = [] {
    Lexicon l;
    const std::pair<const char*, KeywordInfo> keywords[] = {
        {"click", {Peripheral::Mouse, TargetType::Button}},
        {"right-click", {Peripheral::Mouse, TargetType::Icon}},
        {"double-click", {Peripheral::Mouse, TargetType::Icon}},
        {"select", {Peripheral::Mouse, TargetType::Menu}},
        {"choose", {Peripheral::Mouse, TargetType::Menu}},
        {"check", {Peripheral::Mouse, TargetType::Checkbox}},
        {"uncheck", {Peripheral::Mouse, TargetType::Checkbox}},
        {"type", {Peripheral::Keyboard, TargetType::Text}},
        {"input", {Peripheral::Keyboard, TargetType::Text}},
        {"enter", {Peripheral::Keyboard, TargetType::Text}},
        {"press", {Peripheral::Keyboard, TargetType::Unknown}},
        {"open", {Peripheral::Mouse, TargetType::Unknown}},
    };
    for (const auto& [k, info] : keywords) l.keywords_.emplace(k, info);
    const std::pair<const char*, TargetType> hints[] = {
        {"button", TargetType::Button},   {"checkbox", TargetType::Checkbox}, {"menu", TargetType::Menu},
        {"tab", TargetType::Button},      {"field", TargetType::Textbox},     {"textbox", TargetType::Textbox},
        {"icon", TargetType::Icon},       {"window", TargetType::Unknown},
    };
    for (const auto& [k, t] : hints) l.noun_hints_.emplace(k, t);
    l.determiners_ = {"the", "a", "an"};
    return l;
  }();
  return lexicon;
}

Lexicon Lexicon::from_json(const json& j) {
  Lexicon l = builtin();
  try {
    if (j.contains("keywords")) {
      l.keywords_.clear();
      for (const auto& [key, value] : j.at("keywords").items()) {
        KeywordInfo info;
        if (value.is_object()) {
          if (value.contains("peripheral")) {
            const std::string p = lower(value.at("peripheral").get<std::string>());
            if (p != "mouse" && p != "keyboard") {
              throw Error(ErrorCode::MalformedInput, "unknown peripheral for keyword " + key + ": " + p);
            }
            info.peripheral = p == "keyboard" ? Peripheral::Keyboard : Peripheral::Mouse;
          }
          if (value.contains("target_type")) info.default_type = parse_target_type(value.at("target_type").get<std::string>());
        } else if (value.is_string()) {
          info.default_type = parse_target_type(value.get<std::string>());
        }
        l.keywords_[stem(key)] = info;
      }
    }
    if (j.contains("noun_hints")) {
      l.noun_hints_.clear();
      const auto& hints = j.at("noun_hints");
      if (hints.is_array()) {
        for (const auto& h : hints) {
          const std::string word = h.get<std::string>();
          const auto builtin_hint = builtin().noun_hint(word);
          l.noun_hints_[stem(word)] = builtin_hint.value_or(TargetType::Unknown);
        }
      } else {
        for (const auto& [word, type] : hints.items()) l.noun_hints_[stem(word)] = parse_target_type(type.get<std::string>());
      }
    }
    if (j.contains("determiners")) {
      l.determiners_.clear();
      for (const auto& d : j.at("determiners")) l.determiners_.push_back(lower(d.get<std::string>()));
    }
    if (j.contains("style")) l.style_ = parse_style(j.at("style").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("lexicon: ") + e.what());
  }
  return l;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
  }
}

const KeywordInfo* Lexicon::keyword(std::string_view word) const {
  const auto it = keywords_.find(stem(word));
  return it == keywords_.end() ? nullptr : &it->second;
}

bool Lexicon::is_determiner(std::string_view word) const {
  const std::string l = lower(word);
  return std::find(determiners_.begin(), determiners_.end(), l) != determiners_.end();
}

std::optional<TargetType> Lexicon::noun_hint(std::string_view word) const {
  const auto it = noun_hints_.find(stem(word));
  if (it == noun_hints_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Stemming

namespace {

bool is_consonant(const std::string& w, std::size_t i) {
  switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return false;
    case 'y': return i == 0 || !is_consonant(w, i - 1);
    default: return true;
  }
}

// Porter's m: the number of VC sequences in [C](VC)^m[V].
int measure(const std::string& w, std::size_t len) {
  int m = 0;
  std::size_t i = 0;
  while (i < len && is_consonant(w, i)) ++i;
  while (i < len) {
    while (i < len && !is_consonant(w, i)) ++i;
    if (i >= len) break;
    while (i < len && is_consonant(w, i)) ++i;
    ++m;
  }
  return m;
}

bool has_vowel(const std::string& w, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool ends_cvc(const std::string& w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  const char last = w[n - 1];
  return is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) && last != 'w' &&
         last != 'x' && last != 'y';
}

bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Short stems that lost a final e ("us" from "using", "choos" from "choosing").
bool wants_final_e(const std::string& w) {
  if (measure(w, w.size()) != 1) return false;
  if (ends_cvc(w)) return true;
  const std::size_t n = w.size();
  if (n == 2 && !is_consonant(w, 0) && is_consonant(w, 1)) return true;
  return n >= 2 && (w[n - 1] == 's' || w[n - 1] == 'z') && !is_consonant(w, n - 2);
}

std::string stem_once(std::string w) {
  if (w.size() <= 2) return w;
  // Step 1a: plurals.
  if (ends_with(w, "sses") || ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (!ends_with(w, "ss") && ends_with(w, "s")) {
    w.pop_back();
  }
  // Step 1b: past tense and progressive forms.
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.pop_back();
    return w;
  }
  std::size_t cut = 0;
  if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) cut = 2;
  else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) cut = 3;
  if (cut == 0) return w;
  w.resize(w.size() - cut);
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w.push_back('e');
  } else if (w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] && is_consonant(w, w.size() - 1) &&
             w.back() != 'l' && w.back() != 's' && w.back() != 'z') {
    w.pop_back();
  } else if (wants_final_e(w)) {
    w.push_back('e');
  }
  return w;
}

}  // namespace

std::string stem(std::string_view word) {
  std::string w = lower(word);
  for (;;) {
    std::string next = stem_once(w);
    if (next == w) return w;
    w = std::move(next);
  }
}

// ---------------------------------------------------------------------------
// Tokenizing and tagging

namespace {

void push_token(std::vector<Token>& out, std::string text, bool emphasis = false, bool code = false) {
  Token t;
  t.text = std::move(text);
  t.emphasis = emphasis;
  t.code_span = code;
  out.push_back(std::move(t));
}

bool is_symbol_token(const Token& t) {
  return !t.emphasis && !t.code_span && !t.text.empty() &&
         std::none_of(t.text.begin(), t.text.end(), is_word_char);
}

void split_words(std::string_view text, std::vector<Token>& out) {
  static constexpr std::string_view kLeading = "(['\"";
  static constexpr std::string_view kTrailing = ".,;:!?)]'\"";
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;
    if (std::none_of(chunk.begin(), chunk.end(), is_word_char)) {
      push_token(out, std::string(chunk));
      continue;
    }
    while (!chunk.empty() && kLeading.find(chunk.front()) != std::string_view::npos) {
      push_token(out, std::string(1, chunk.front()));
      chunk.remove_prefix(1);
    }
    std::vector<std::string> trailing;
    while (!chunk.empty() && kTrailing.find(chunk.back()) != std::string_view::npos) {
      trailing.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }
    push_token(out, std::string(chunk));
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) push_token(out, *it);
  }
}

// Splits plain text, keeping double-quoted phrases whole.
void tokenize_plain(std::string_view text, std::vector<Token>& out) {
  static constexpr std::string_view kOpenCurly = "\xE2\x80\x9C", kCloseCurly = "\xE2\x80\x9D";
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t open = std::string_view::npos, open_len = 0;
    for (std::size_t k = i; k < text.size(); ++k) {
      if (text[k] == '"') {
        open = k;
        open_len = 1;
        break;
      }
      if (text.substr(k, kOpenCurly.size()) == kOpenCurly) {
        open = k;
        open_len = kOpenCurly.size();
        break;
      }
    }
    if (open == std::string_view::npos) break;
    const std::string_view closer = open_len == 1 ? std::string_view("\"") : kCloseCurly;
    const std::size_t close = text.find(closer, open + open_len);
    if (close == std::string_view::npos) break;
    split_words(text.substr(i, open - i), out);
    std::string inner(text.substr(open + open_len, close - open - open_len));
    const auto first = inner.find_first_not_of(' ');
    const auto last = inner.find_last_not_of(' ');
    if (first != std::string::npos) push_token(out, inner.substr(first, last - first + 1), true);
    i = close + closer.size();
  }
  split_words(text.substr(std::min(i, text.size())), out);
}

std::string trimmed(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\n");
  return std::string(s.substr(first, last - first + 1));
}

bool capitalized(const std::string& s) { return !s.empty() && std::isupper(static_cast<unsigned char>(s[0])); }

}  // namespace

std::vector<Token> tokenize(const manual::Inlines& inlines) {
  std::vector<Token> out;
  for (const auto& in : inlines) {
    if (const auto* p = std::get_if<manual::PlainText>(&in)) {
      tokenize_plain(p->text, out);
    } else if (const auto* e = std::get_if<manual::Emphasis>(&in)) {
      if (auto t = trimmed(e->text); !t.empty()) push_token(out, std::move(t), true);
    } else if (const auto* c = std::get_if<manual::CodeSpan>(&in)) {
      push_token(out, c->text, false, true);
    }
  }
  std::size_t position = 0;
  for (auto& t : out) {
    t.position = position++;
    if (is_symbol_token(t) && one_of(t.text, kTerminators)) position = 0;
  }
  return out;
}

std::vector<Token> tag_tokens(std::vector<Token> tokens, const Lexicon& lexicon) {
  bool clause_start = true;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token& t = tokens[i];
    if (t.emphasis || t.code_span) {
      t.tag = Tag::Noun;
      clause_start = false;
      continue;
    }
    if (is_symbol_token(t)) {
      t.tag = Tag::Symbol;
      if (one_of(t.text, kTerminators) || one_of(t.text, kBoundarySymbols)) clause_start = true;
      continue;
    }
    const std::string word = lower(t.text);
    const bool after_to = i > 0 && lower(tokens[i - 1].text) == "to" && !tokens[i - 1].emphasis;
    if (lexicon.is_determiner(word)) {
      t.tag = Tag::Determiner;
      clause_start = false;
    } else if (lexicon.keyword(word)) {
      t.tag = (clause_start || after_to) ? Tag::Verb : Tag::Noun;
      clause_start = false;
    } else if (one_of(word, kBoundaryWords)) {
      t.tag = Tag::Other;
      clause_start = true;
    } else if (lexicon.noun_hint(word) || (capitalized(t.text) && t.position > 0)) {
      t.tag = Tag::Noun;
      clause_start = false;
    } else {
      t.tag = Tag::Other;
      clause_start = false;
    }
  }
  return tokens;
}

std::vector<Token> correct_tags(std::vector<Token> tokens, const Lexicon& lexicon) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token& t = tokens[i];
    if (t.tag == Tag::Verb || t.emphasis || t.code_span || !lexicon.keyword(t.text)) continue;
    std::size_t j = i + 1;
    while (j < tokens.size() && tokens[j].tag == Tag::Determiner) ++j;
    if (j < tokens.size() && (tokens[j].emphasis || tokens[j].code_span)) t.tag = Tag::Verb;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Extraction

namespace {

std::string join_tokens(const std::vector<Token>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    const bool attach = is_symbol_token(tokens[i]) && tokens[i].text != "(" && tokens[i].text != "-" &&
                        tokens[i].text != ">" && tokens[i].text != "/";
    if (!out.empty() && !attach) out.push_back(' ');
    out += tokens[i].text;
  }
  return out;
}

bool is_strong(const Token& t) { return t.emphasis || t.code_span; }

struct Target {
  std::string object;
  std::optional<TargetType> hinted;
};

std::optional<TargetType> hint_of(const Token& t, const Lexicon& lexicon) {
  if (is_strong(t) || t.tag == Tag::Symbol) return std::nullopt;
  return lexicon.noun_hint(t.text);
}

// Nearest emphasis or code token after the verb, with a hint noun right
// before or after it ("the **Next** button", "the Button **Next**").
std::optional<Target> emphasis_target(const std::vector<Token>& s, std::size_t verb, std::size_t end,
                                      const Lexicon& lexicon) {
  for (std::size_t i = verb + 1; i < end; ++i) {
    if (!is_strong(s[i])) continue;
    Target target{s[i].text, std::nullopt};
    if (i + 1 < end) target.hinted = hint_of(s[i + 1], lexicon);
    if (!target.hinted && i > verb + 1) target.hinted = hint_of(s[i - 1], lexicon);
    return target;
  }
  return std::nullopt;
}

std::optional<Target> phrase_target(const std::vector<Token>& s, std::size_t verb, std::size_t end,
                                    const Lexicon& lexicon) {
  constexpr std::size_t kMaxPhrase = 6;
  std::size_t i = verb + 1;
  while (i < end && (s[i].tag == Tag::Determiner || (!is_strong(s[i]) && one_of(lower(s[i].text), kPhraseLead)))) {
    ++i;
  }
  const std::size_t begin = i;
  while (i < end && i - begin < kMaxPhrase) {
    const Token& t = s[i];
    if (t.tag == Tag::Symbol || t.tag == Tag::Verb || t.tag == Tag::Determiner) break;
    if (!is_strong(t) && one_of(lower(t.text), kPhraseStops)) break;
    ++i;
    // A trailing GUI noun closes the phrase: "the Apply button saves ...".
    if (i - begin > 1 && hint_of(t, lexicon)) break;
  }
  std::size_t first = begin, last = i;
  if (first == last) return std::nullopt;
  Target target;
  if (last - first > 1) {
    if (auto h = hint_of(s[first], lexicon)) {
      target.hinted = h;
      ++first;
    } else if (auto h2 = hint_of(s[last - 1], lexicon)) {
      target.hinted = h2;
      --last;
    }
  } else if (auto h = hint_of(s[first], lexicon)) {
    target.hinted = h;
  }
  target.object = join_tokens(s, first, last);
  return target;
}

}  // namespace

Style resolve_style(const manual::ManualDocument& doc, Style style) {
  if (style != Style::Auto) return style;
  for (const auto& block : doc.blocks) {
    const manual::Inlines* inlines = nullptr;
    if (const auto* s = std::get_if<manual::Step>(&block)) inlines = &s->inlines;
    if (const auto* p = std::get_if<manual::Paragraph>(&block)) inlines = &p->inlines;
    if (!inlines) continue;
    for (const auto& in : *inlines)
      if (std::holds_alternative<manual::Emphasis>(in)) return Style::Emphasis;
  }
  return Style::ExplicitType;
}

std::vector<ActionRecord> extract_sentence_actions(const manual::Inlines& inlines, const Lexicon& lexicon,
                                                   Style style) {
  const std::vector<Token> tokens = correct_tags(tag_tokens(tokenize(inlines), lexicon), lexicon);
  std::vector<ActionRecord> records;
  std::size_t start = 0;
  while (start < tokens.size()) {
    std::size_t end = start;
    while (end < tokens.size() && !(tokens[end].tag == Tag::Symbol && one_of(tokens[end].text, kTerminators))) ++end;
    const std::vector<Token> sentence(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(end));
    start = end + 1;

    std::size_t body = 0;
    std::optional<std::string> condition;
    if (!sentence.empty() && !is_strong(sentence[0]) && one_of(lower(sentence[0].text), kConditionWords)) {
      for (std::size_t k = 1; k < sentence.size(); ++k) {
        if (sentence[k].tag == Tag::Symbol && sentence[k].text == ",") {
          if (k > 1) condition = join_tokens(sentence, 1, k);
          body = k + 1;
          break;
        }
      }
    }
    for (std::size_t i = body; i < sentence.size(); ++i) {
      if (sentence[i].tag != Tag::Verb) continue;
      std::size_t scope = i + 1;
      while (scope < sentence.size() && sentence[scope].tag != Tag::Verb) ++scope;

      std::optional<Target> target;
      if (style != Style::ExplicitType) target = emphasis_target(sentence, i, scope, lexicon);
      if (!target) target = phrase_target(sentence, i, scope, lexicon);
      if (!target || target->object.empty()) {
        spdlog::debug("keyword '{}' has no target object; skipped", sentence[i].text);
        continue;
      }
      const std::string key = stem(sentence[i].text);
      const KeywordInfo* info = lexicon.keyword(key);
      ActionRecord r;
      r.keyword = key;
      r.target_object = target->object;
      r.target_type = target->hinted && *target->hinted != TargetType::Unknown ? *target->hinted : info->default_type;
      r.condition = condition;
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<ActionRecord> extract_actions(const manual::ManualDocument& doc, const Lexicon& lexicon, Style style) {
  const Style resolved = resolve_style(doc, style == Style::Auto ? lexicon.style() : style);
  std::vector<ActionRecord> records;
  for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
    const manual::Inlines* inlines = nullptr;
    if (const auto* s = std::get_if<manual::Step>(&doc.blocks[b])) inlines = &s->inlines;
    if (const auto* p = std::get_if<manual::Paragraph>(&doc.blocks[b])) inlines = &p->inlines;
    if (!inlines) continue;
    for (auto& r : extract_sentence_actions(*inlines, lexicon, resolved)) {
      r.source_block = b;
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) {
    throw Error(ErrorCode::NoActionsFound, "no action keywords found in " +
                                               (doc.source_path.empty() ? std::string("manual") : doc.source_path.string()));
  }
  return records;
}

std::vector<ActionRecord> attach_manual_images(std::vector<ActionRecord> records, const manual::ManualDocument& doc) {
  if (manual::classify_manual(doc) != manual::ManualKind::Hybrid) return records;
  std::size_t i = 0;
  while (i < records.size()) {
    const std::size_t block = records[i].source_block;
    std::size_t j = i;
    while (j < records.size() && records[j].source_block == block) ++j;

    std::vector<std::string> images;
    if (block < doc.blocks.size()) {
      const manual::Inlines* inlines = nullptr;
      if (const auto* s = std::get_if<manual::Step>(&doc.blocks[block])) inlines = &s->inlines;
      if (const auto* p = std::get_if<manual::Paragraph>(&doc.blocks[block])) inlines = &p->inlines;
      if (inlines) {
        for (const auto& in : *inlines)
          if (const auto* img = std::get_if<manual::InlineImage>(&in)) images.push_back(img->path);
      }
      if (images.empty() && block + 1 < doc.blocks.size()) {
        if (const auto* img = std::get_if<manual::ImageBlock>(&doc.blocks[block + 1])) images.push_back(img->path);
      }
    }
    if (!images.empty()) {
      // One image per record pairs them in order; otherwise they share the first.
      const bool paired = images.size() == j - i;
      for (std::size_t k = i; k < j; ++k) {
        if (!records[k].candidate_image) records[k].candidate_image = paired ? images[k - i] : images.front();
      }
    }
    i = j;
  }
  return records;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const ActionRecord& r) {
  json j{{"keyword", r.keyword},
         {"target_type", to_string(r.target_type)},
         {"target_object", r.target_object},
         {"source_block", r.source_block}};
  if (r.target_path) j["target_path"] = *r.target_path;
  if (r.condition) j["condition"] = *r.condition;
  if (r.candidate_image) j["candidate_image"] = *r.candidate_image;
  return j;
}

ActionRecord record_from_json(const json& j) {
  try {
    ActionRecord r;
    r.keyword = j.at("keyword").get<std::string>();
    r.target_type = parse_target_type(j.value("target_type", std::string("Unknown")));
    r.target_object = j.value("target_object", std::string());
    r.source_block = j.value("source_block", std::size_t{0});
    if (j.contains("target_path") && !j["target_path"].is_null()) r.target_path = j["target_path"].get<std::string>();
    if (j.contains("condition") && !j["condition"].is_null()) r.condition = j["condition"].get<std::string>();
    if (j.contains("candidate_image") && !j["candidate_image"].is_null()) {
      r.candidate_image = j["candidate_image"].get<std::string>();
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("action record: ") + e.what());
  }
}

json records_to_json(const std::vector<ActionRecord>& records) {
  json list = json::array();
  for (const auto& r : records) list.push_back(to_json(r));
  return json{{"records", list}};
}

std::vector<ActionRecord> records_from_json(const json& j) {
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("records")) throw Error(ErrorCode::MalformedInput, "actions file lacks \"records\"");
    list = &j.at("records");
  }
  if (!list->is_array()) throw Error(ErrorCode::MalformedInput, "\"records\" must be an array");
  std::vector<ActionRecord> out;
  for (const auto& r : *list) out.push_back(record_from_json(r));
  return out;
}

void write_actions(const std::vector<ActionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << records_to_json(records).dump(2) << '\n';
}

std::vector<ActionRecord> read_actions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  try {
    return records_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
  }
}

}  // namespace m2v::extract
