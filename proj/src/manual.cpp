#include "m2v/manual.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>

#include "m2v/error.hpp"

namespace m2v::manual {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void append_text(Inlines& out, std::string_view text) {
  if (text.empty()) return;
  if (!out.empty()) {
    if (auto* last = std::get_if<PlainText>(&out.back())) {
      last->text += text;
      return;
    }
  }
  out.emplace_back(PlainText{std::string(text)});
}

// Decodes one of the three entities the serializer emits; returns the number
// of characters consumed, or 0.
std::size_t decode_entity(std::string_view s, std::size_t pos, char& out) {
  static constexpr std::pair<std::string_view, char> kEntities[] = {{"&lt;", '<'}, {"&gt;", '>'}, {"&amp;", '&'}};
  for (const auto& [name, ch] : kEntities) {
    if (s.substr(pos, name.size()) == name) {
      out = ch;
      return name.size();
    }
  }
  return 0;
}

std::optional<InlineImage> match_image(std::string_view s, std::size_t pos, std::size_t& end) {
  if (s.substr(pos, 2) != "![") return std::nullopt;
  std::string alt;
  std::size_t i = pos + 2;
  while (i < s.size() && s[i] != ']') {
    if (s[i] == '\\' && i + 1 < s.size() && is_ascii_punct(s[i + 1])) ++i;
    alt.push_back(s[i++]);
  }
  if (i >= s.size() || s.substr(i, 2) != "](") return std::nullopt;
  i += 2;
  const std::size_t close = s.find(')', i);
  if (close == std::string_view::npos) return std::nullopt;
  const std::string_view path = trim(s.substr(i, close - i));
  if (path.empty() || std::any_of(path.begin(), path.end(), is_space)) return std::nullopt;
  end = close + 1;
  return InlineImage{std::string(path), alt};
}

Inlines parse_inlines(std::string_view s) {
  Inlines out;
  std::string text;
  auto flush = [&] {
    append_text(out, text);
    text.clear();
  };
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '\\' && i + 1 < s.size() && is_ascii_punct(s[i + 1])) {
      text.push_back(s[i + 1]);
      i += 2;
      continue;
    }
    if (c == '&') {
      char decoded = 0;
      if (const std::size_t n = decode_entity(s, i, decoded)) {
        text.push_back(decoded);
        i += n;
        continue;
      }
    }
    if (c == '`') {
      std::size_t run = 0;
      while (i + run < s.size() && s[i + run] == '`') ++run;
      std::size_t j = i + run;
      std::optional<std::size_t> close;
      while (j < s.size()) {
        if (s[j] != '`') {
          ++j;
          continue;
        }
        std::size_t r = 0;
        while (j + r < s.size() && s[j + r] == '`') ++r;
        if (r == run) {
          close = j;
          break;
        }
        j += r;
      }
      if (!close) throw Error(ErrorCode::MalformedInput, "unclosed code span in: " + std::string(s));
      std::string_view content = s.substr(i + run, *close - i - run);
      if (content.size() >= 2 && content.front() == ' ' && content.back() == ' ' &&
          content.find_first_not_of(' ') != std::string_view::npos) {
        content = content.substr(1, content.size() - 2);
      }
      if (content.empty()) {
        text.append(s.substr(i, *close + run - i));
      } else {
        flush();
        out.emplace_back(CodeSpan{std::string(content)});
      }
      i = *close + run;
      continue;
    }
    if (c == '!') {
      std::size_t end = 0;
      if (auto img = match_image(s, i, end)) {
        flush();
        out.emplace_back(std::move(*img));
        i = end;
        continue;
      }
    }
    if (c == '*') {
      std::size_t run = 0;
      while (i + run < s.size() && s[i + run] == '*') ++run;
      const bool followed_by_text = i + run < s.size() && !is_space(s[i + run]);
      const bool intraword = i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1]));
      if (run > 2 || !followed_by_text || intraword) {
        // Not an opener; the asterisks are literal text.
        text.append(run, '*');
        i += run;
        continue;
      }
      std::optional<std::size_t> close;
      for (std::size_t j = i + run; j < s.size(); ++j) {
        if (s[j] == '\\') {
          ++j;
          continue;
        }
        if (s[j] != '*') continue;
        std::size_t r = 0;
        while (j + r < s.size() && s[j + r] == '*') ++r;
        if (r == run && !is_space(s[j - 1])) {
          close = j;
          break;
        }
        j += r - 1;
      }
      if (!close) throw Error(ErrorCode::MalformedInput, "unclosed emphasis in: " + std::string(s));
      std::string content;
      const std::string_view raw = s.substr(i + run, *close - i - run);
      for (std::size_t k = 0; k < raw.size(); ++k) {
        if (raw[k] == '\\' && k + 1 < raw.size() && is_ascii_punct(raw[k + 1])) ++k;
        content.push_back(raw[k]);
      }
      flush();
      out.emplace_back(Emphasis{std::move(content)});
      i = *close + run;
      continue;
    }
    text.push_back(c);
    ++i;
  }
  flush();
  return out;
}

struct ListItemMatch {
  bool ordered;
  int number;
  std::string_view rest;
};

std::optional<ListItemMatch> match_list_item(std::string_view line) {
  if (line.size() >= 2 && (line[0] == '-' || line[0] == '+' || line[0] == '*') && line[1] == ' ') {
    return ListItemMatch{false, 0, trim(line.substr(2))};
  }
  std::size_t digits = 0;
  while (digits < line.size() && digits < 9 && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits == 0 || digits + 1 >= line.size()) return std::nullopt;
  if ((line[digits] == '.' || line[digits] == ')') && line[digits + 1] == ' ') {
    return ListItemMatch{true, std::stoi(std::string(line.substr(0, digits))), trim(line.substr(digits + 2))};
  }
  return std::nullopt;
}

std::optional<Heading> match_heading(std::string_view line) {
  std::size_t level = 0;
  while (level < line.size() && line[level] == '#') ++level;
  if (level == 0 || level > 6) return std::nullopt;
  if (level < line.size() && line[level] != ' ') return std::nullopt;
  std::string_view rest = trim(line.substr(level));
  // Optional closing sequence: unescaped trailing '#' run preceded by a space.
  std::size_t end = rest.size();
  while (end > 0 && rest[end - 1] == '#') --end;
  if (end < rest.size() && (end == 0 || rest[end - 1] == ' ')) rest = trim(rest.substr(0, end));
  return Heading{static_cast<int>(level), parse_inlines(rest)};
}

std::optional<ImageBlock> match_image_block(std::string_view line) {
  std::size_t end = 0;
  if (auto img = match_image(line, 0, end); img && end == line.size()) {
    return ImageBlock{img->path, img->alt_text};
  }
  return std::nullopt;
}

}  // namespace

std::vector<Block> parse_markdown(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<Block> blocks;

  enum class Open { None, Paragraph, Item };
  Open open = Open::None;
  std::string pending;  // raw inline text of the open block
  std::optional<ListItemMatch> pending_item;
  std::optional<int> last_ordinal;  // ordinal of the previous item in the current run
  std::optional<bool> run_ordered;

  auto close_block = [&] {
    if (open == Open::Paragraph) {
      blocks.emplace_back(Paragraph{parse_inlines(pending)});
    } else if (open == Open::Item) {
      int ordinal = 1;
      if (last_ordinal && run_ordered == pending_item->ordered) {
        ordinal = *last_ordinal + 1;
      } else if (pending_item->ordered) {
        ordinal = std::max(1, pending_item->number);
      }
      blocks.emplace_back(Step{ordinal, pending_item->ordered, parse_inlines(pending)});
      last_ordinal = ordinal;
      run_ordered = pending_item->ordered;
    }
    open = Open::None;
    pending.clear();
  };
  auto break_run = [&] {
    last_ordinal.reset();
    run_ordered.reset();
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string_view line = trim(raw);
    if (line.empty()) {
      close_block();
      continue;
    }
    if (auto heading = match_heading(line)) {
      close_block();
      break_run();
      blocks.emplace_back(std::move(*heading));
      continue;
    }
    if (auto image = match_image_block(line)) {
      close_block();
      break_run();
      blocks.emplace_back(std::move(*image));
      continue;
    }
    if (auto item = match_list_item(line)) {
      close_block();
      if (run_ordered && *run_ordered != item->ordered) break_run();
      open = Open::Item;
      pending_item = item;
      pending = std::string(item->rest);
      continue;
    }
    if (open == Open::None) {
      break_run();
      open = Open::Paragraph;
      pending = std::string(line);
    } else {
      pending += ' ';
      pending += line;
    }
  }
  close_block();
  return blocks;
}

namespace {

std::string escape_text(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' || c == '*' || c == '`' || c == '[' || c == ']') {
      out.push_back('\\');
      out.push_back(c);
    } else if (c == '<') {
      out += "&lt;";
    } else if (c == '&') {
      char ignored = 0;
      out += decode_entity(text, i, ignored) ? "&amp;" : "&";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string code_fence(std::string_view content) {
  std::size_t longest = 0, run = 0;
  for (char c : content) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  const std::string fence(longest + 1, '`');
  const bool pad = content.front() == '`' || content.back() == '`' ||
                   (content.front() == ' ' && content.back() == ' ');
  return fence + (pad ? " " : "") + std::string(content) + (pad ? " " : "") + fence;
}

std::string serialize_inlines(const Inlines& inlines) {
  std::string out;
  for (const auto& in : inlines) {
    std::visit(
        [&](const auto& node) {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, PlainText>) {
            out += escape_text(node.text);
          } else if constexpr (std::is_same_v<T, Emphasis>) {
            out += "**" + escape_text(node.text) + "**";
          } else if constexpr (std::is_same_v<T, CodeSpan>) {
            out += code_fence(node.text);
          } else {
            out += "![" + escape_text(node.alt_text) + "](" + node.path + ")";
          }
        },
        in);
  }
  return out;
}

// Escapes a leading sequence that would otherwise start a different block.
std::string guard_block_start(std::string line) {
  if (line.empty()) return line;
  if (line[0] == '#' || ((line[0] == '-' || line[0] == '+') && line.size() > 1 && line[1] == ' ')) {
    return "\\" + line;
  }
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits > 0 && digits + 1 < line.size() && (line[digits] == '.' || line[digits] == ')') && line[digits + 1] == ' ') {
    line.insert(digits, "\\");
  }
  return line;
}

}  // namespace

std::string serialize_markdown(const std::vector<Block>& blocks) {
  std::string out;
  const Block* prev = nullptr;
  for (const auto& block : blocks) {
    std::string line = std::visit(
        [](const auto& node) -> std::string {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Heading>) {
            std::string body = serialize_inlines(node.inlines);
            if (!body.empty() && body.back() == '#') body.insert(body.size() - 1, "\\");
            return std::string(static_cast<std::size_t>(node.level), '#') + " " + body;
          } else if constexpr (std::is_same_v<T, Step>) {
            return (node.ordered ? std::to_string(node.ordinal) + ". " : std::string("- ")) +
                   serialize_inlines(node.inlines);
          } else if constexpr (std::is_same_v<T, Paragraph>) {
            return guard_block_start(serialize_inlines(node.inlines));
          } else {
            return "![" + escape_text(node.alt_text) + "](" + node.path + ")";
          }
        },
        block);
    if (prev) {
      const bool same_list = std::holds_alternative<Step>(*prev) && std::holds_alternative<Step>(block) &&
                             std::get<Step>(*prev).ordered == std::get<Step>(block).ordered &&
                             std::get<Step>(*prev).ordinal + 1 == std::get<Step>(block).ordinal;
      out += same_list ? "\n" : "\n\n";
    }
    out += line;
    prev = &block;
  }
  if (!out.empty()) out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// HTML subset

namespace {

std::string decode_html_entities(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const std::size_t semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string_view name = s.substr(i + 1, semi - i - 1);
    std::optional<unsigned long> code;
    if (name == "amp") code = '&';
    else if (name == "lt") code = '<';
    else if (name == "gt") code = '>';
    else if (name == "quot") code = '"';
    else if (name == "apos" || name == "#39") code = '\'';
    else if (name == "nbsp") code = ' ';
    else if (name.size() > 1 && name[0] == '#') {
      try {
        code = (name[1] == 'x' || name[1] == 'X') ? std::stoul(std::string(name.substr(2)), nullptr, 16)
                                                  : std::stoul(std::string(name.substr(1)));
      } catch (const std::exception&) {
        code.reset();
      }
    }
    if (!code) {
      out.push_back('&');
      continue;
    }
    const unsigned long cp = *code;
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    i = semi;
  }
  return out;
}

struct Tag {
  std::string name;
  bool closing = false;
  bool self_closing = false;
  std::vector<std::pair<std::string, std::string>> attributes;

  std::string attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return v;
    return {};
  }
};

Tag parse_tag(std::string_view body) {
  Tag tag;
  std::size_t i = 0;
  if (i < body.size() && body[i] == '/') {
    tag.closing = true;
    ++i;
  }
  while (i < body.size() && !is_space(body[i]) && body[i] != '/') {
    tag.name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(body[i]))));
    ++i;
  }
  while (i < body.size()) {
    while (i < body.size() && is_space(body[i])) ++i;
    if (i >= body.size()) break;
    if (body[i] == '/') {
      tag.self_closing = true;
      ++i;
      continue;
    }
    std::string key;
    while (i < body.size() && !is_space(body[i]) && body[i] != '=' && body[i] != '/') {
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(body[i]))));
      ++i;
    }
    std::string value;
    while (i < body.size() && is_space(body[i])) ++i;
    if (i < body.size() && body[i] == '=') {
      ++i;
      while (i < body.size() && is_space(body[i])) ++i;
      if (i < body.size() && (body[i] == '"' || body[i] == '\'')) {
        const char quote = body[i++];
        const std::size_t end = body.find(quote, i);
        value = std::string(body.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i));
        i = end == std::string_view::npos ? body.size() : end + 1;
      } else {
        while (i < body.size() && !is_space(body[i])) value.push_back(body[i++]);
      }
    }
    if (!key.empty()) tag.attributes.emplace_back(std::move(key), decode_html_entities(value));
  }
  return tag;
}

bool is_block_container(std::string_view name) {
  static constexpr std::string_view kBlocks[] = {"div", "section", "article", "header", "footer", "main",
                                                 "nav", "table", "tr", "blockquote", "pre", "body", "html",
                                                 "aside", "figure", "dl", "dt", "dd"};
  return std::find(std::begin(kBlocks), std::end(kBlocks), name) != std::end(kBlocks);
}

class HtmlToMarkdown {
 public:
  explicit HtmlToMarkdown(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  std::string convert(std::string_view html) {
    std::size_t i = 0;
    while (i < html.size()) {
      if (html[i] == '<') {
        if (html.substr(i, 4) == "<!--") {
          const std::size_t end = html.find("-->", i + 4);
          i = end == std::string_view::npos ? html.size() : end + 3;
          continue;
        }
        const bool tag_like = i + 1 < html.size() &&
                              (std::isalpha(static_cast<unsigned char>(html[i + 1])) || html[i + 1] == '/' ||
                               html[i + 1] == '!' || html[i + 1] == '?');
        if (tag_like) {
          const std::size_t end = html.find('>', i);
          if (end == std::string_view::npos) {
            text(html.substr(i));
            break;
          }
          const std::string_view body = html.substr(i + 1, end - i - 1);
          if (!body.empty() && (body[0] != '!' && body[0] != '?')) handle(parse_tag(body));
          i = end + 1;
          continue;
        }
      }
      const std::size_t next = html.find('<', i + 1);
      const std::size_t stop = next == std::string_view::npos ? html.size() : next;
      text(html.substr(i, stop - i));
      i = stop;
    }
    while (frames_.size() > 1) close_inline(frames_.back().tag);
    flush_block();
    return out_;
  }

 private:
  struct Frame {
    std::string tag;
    std::string text;
  };

  void text(std::string_view raw) {
    const std::string decoded = decode_html_entities(raw);
    if (in_code()) {
      // Code keeps its characters but whitespace still collapses.
      for (char c : decoded) append_collapsed(is_space(c) ? ' ' : c, false);
      return;
    }
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      const char c = decoded[i];
      if (is_space(c)) {
        append_collapsed(' ', false);
      } else {
        append_collapsed(c, true);
      }
    }
  }

  void append_collapsed(char c, bool escape) {
    std::string& buf = frames_.back().text;
    if (c == ' ') {
      if (all_text_empty() || (!buf.empty() && buf.back() == ' ')) return;
      buf.push_back(' ');
      return;
    }
    if (escape) {
      if (c == '\\' || c == '*' || c == '`' || c == '[' || c == ']') {
        buf.push_back('\\');
        buf.push_back(c);
      } else if (c == '<') {
        buf += "&lt;";
      } else if (c == '&') {
        buf += "&amp;";
      } else {
        buf.push_back(c);
      }
    } else {
      buf.push_back(c);
    }
  }

  bool all_text_empty() const {
    return std::all_of(frames_.begin(), frames_.end(), [](const Frame& f) { return f.text.empty(); });
  }

  bool in_code() const {
    return std::any_of(frames_.begin(), frames_.end(), [](const Frame& f) { return f.tag == "code"; });
  }

  void open_inline(const std::string& tag) { frames_.push_back({tag, {}}); }

  void close_inline(const std::string& tag) {
    auto it = std::find_if(frames_.rbegin(), frames_.rend() - 1, [&](const Frame& f) { return f.tag == tag; });
    if (it == frames_.rend() - 1) return;
    while (frames_.back().tag != tag) close_inline(frames_.back().tag);
    Frame frame = std::move(frames_.back());
    frames_.pop_back();
    std::string_view content = frame.text;
    const bool lead = !content.empty() && content.front() == ' ';
    const bool tail = !content.empty() && content.back() == ' ';
    content = trim(content);
    std::string& parent = frames_.back().text;
    if (lead && !parent.empty() && parent.back() != ' ') parent.push_back(' ');
    if (!content.empty()) {
      if (tag == "code") {
        parent += code_fence(content);
      } else if (tag == "b" || tag == "strong") {
        parent += "**" + std::string(content) + "**";
      } else {
        parent += "*" + std::string(content) + "*";
      }
    }
    if (tail) parent.push_back(' ');
  }

  void flush_block() {
    while (frames_.size() > 1) close_inline(frames_.back().tag);
    std::string body(trim(frames_.front().text));
    frames_.front().text.clear();
    if (body.empty() && prefix_.empty()) return;
    if (body.empty()) {
      prefix_.clear();
      return;
    }
    std::string line = prefix_.empty() ? guard_block_start(body) : prefix_ + body;
    if (!out_.empty()) out_ += (prefix_is_item_ && last_was_item_) ? "\n" : "\n\n";
    out_ += line;
    last_was_item_ = prefix_is_item_;
    prefix_.clear();
    prefix_is_item_ = false;
  }

  void handle(const Tag& tag) {
    const std::string& n = tag.name;
    if (n == "p" || is_block_container(n)) {
      flush_block();
      return;
    }
    if (n.size() == 2 && n[0] == 'h' && n[1] >= '1' && n[1] <= '6') {
      flush_block();
      if (!tag.closing) prefix_ = std::string(static_cast<std::size_t>(n[1] - '0'), '#') + " ";
      return;
    }
    if (n == "ol" || n == "ul") {
      flush_block();
      if (tag.closing) {
        if (!lists_.empty()) lists_.pop_back();
      } else {
        lists_.push_back({n == "ol", 0});
      }
      return;
    }
    if (n == "li") {
      flush_block();
      if (!tag.closing) {
        if (lists_.empty()) lists_.push_back({false, 0});
        auto& list = lists_.back();
        ++list.counter;
        prefix_ = list.ordered ? std::to_string(list.counter) + ". " : "- ";
        prefix_is_item_ = true;
      }
      return;
    }
    if (n == "b" || n == "strong" || n == "em" || n == "i" || n == "code") {
      if (tag.closing) {
        close_inline(n);
      } else if (!tag.self_closing) {
        open_inline(n);
      }
      return;
    }
    if (n == "img") {
      std::string src = tag.attribute("src");
      if (src.rfind("file://", 0) == 0) {
        src = src.substr(7);
        std::error_code ec;
        const auto rel = std::filesystem::path(src).lexically_relative(base_dir_);
        if (!rel.empty() && !ec && rel.native().rfind("..", 0) != 0) src = rel.generic_string();
      }
      if (src.empty()) return;
      std::string& buf = frames_.back().text;
      std::string alt;
      for (char c : tag.attribute("alt")) {
        if (c == '\\' || c == '[' || c == ']') alt.push_back('\\');
        alt.push_back(c);
      }
      buf += "![" + alt + "](" + src + ")";
      return;
    }
    if (n == "br") {
      append_collapsed(' ', false);
      return;
    }
    spdlog::debug("normalize_html: stripping <{}{}>", tag.closing ? "/" : "", n);
  }

  struct ListState {
    bool ordered;
    int counter;
  };

  std::filesystem::path base_dir_;
  std::vector<Frame> frames_{Frame{"", {}}};
  std::vector<ListState> lists_;
  std::string prefix_;
  bool prefix_is_item_ = false;
  bool last_was_item_ = false;
  std::string out_;
};

bool has_image(const Inlines& inlines) {
  return std::any_of(inlines.begin(), inlines.end(),
                     [](const Inline& in) { return std::holds_alternative<InlineImage>(in); });
}

template <typename F>
void for_each_image(const std::vector<Block>& blocks, F&& f) {
  for (const auto& block : blocks) {
    if (const auto* img = std::get_if<ImageBlock>(&block)) {
      f(img->path);
      continue;
    }
    const Inlines* inlines = nullptr;
    if (const auto* h = std::get_if<Heading>(&block)) inlines = &h->inlines;
    if (const auto* s = std::get_if<Step>(&block)) inlines = &s->inlines;
    if (const auto* p = std::get_if<Paragraph>(&block)) inlines = &p->inlines;
    for (const auto& in : *inlines) {
      if (const auto* img = std::get_if<InlineImage>(&in)) f(img->path);
    }
  }
}

}  // namespace

std::string normalize_html(std::string_view html, const std::filesystem::path& base_dir) {
  return HtmlToMarkdown(base_dir).convert(html);
}

ManualKind classify_manual(const std::vector<Block>& blocks) {
  for (const auto& block : blocks) {
    if (std::holds_alternative<ImageBlock>(block)) return ManualKind::Hybrid;
    if (const auto* h = std::get_if<Heading>(&block); h && has_image(h->inlines)) return ManualKind::Hybrid;
    if (const auto* s = std::get_if<Step>(&block); s && has_image(s->inlines)) return ManualKind::Hybrid;
    if (const auto* p = std::get_if<Paragraph>(&block); p && has_image(p->inlines)) return ManualKind::Hybrid;
  }
  return ManualKind::TextOnly;
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong encodings, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += len;
  }
  return true;
}

ManualDocument parse_manual_text(std::string_view markdown, std::filesystem::path base_dir) {
  ManualDocument doc;
  doc.base_dir = std::move(base_dir);
  doc.blocks = parse_markdown(markdown);
  doc.kind = classify_manual(doc.blocks);
  return doc;
}

ManualDocument load_manual(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::FileNotFound, path.string());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const bool markdown = ext == ".md" || ext == ".markdown";
  const bool html = ext == ".html" || ext == ".htm";
  if (!markdown && !html) throw Error(ErrorCode::UnsupportedFormat, "unsupported manual format: " + path.string());

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (!is_valid_utf8(text)) throw Error(ErrorCode::MalformedInput, path.string() + " is not valid UTF-8");

  const auto base_dir = path.parent_path();
  ManualDocument doc = parse_manual_text(html ? normalize_html(text, base_dir) : text, base_dir);
  doc.source_path = path;
  for_each_image(doc.blocks, [&](const std::string& ref) {
    const auto full = base_dir / ref;
    if (!std::filesystem::is_regular_file(full)) {
      throw Error(ErrorCode::FileNotFound, "image referenced by " + path.string() + " not found: " + ref);
    }
  });
  return doc;
}

std::string inline_text(const Inlines& inlines) {
  std::string out;
  for (const auto& in : inlines) {
    std::visit(
        [&](const auto& node) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(node)>, InlineImage>) out += node.text;
        },
        in);
  }
  return out;
}

std::string_view to_string(ManualKind kind) { return kind == ManualKind::Hybrid ? "hybrid" : "text-only"; }

}  // namespace m2v::manual
