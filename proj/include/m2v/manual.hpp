#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace m2v::manual {

struct PlainText {
  std::string text;
  friend bool operator==(const PlainText&, const PlainText&) = default;
};
struct Emphasis {
  std::string text;
  friend bool operator==(const Emphasis&, const Emphasis&) = default;
};
struct CodeSpan {
  std::string text;
  friend bool operator==(const CodeSpan&, const CodeSpan&) = default;
};
struct InlineImage {
  std::string path;
  std::string alt_text;
  friend bool operator==(const InlineImage&, const InlineImage&) = default;
};

using Inline = std::variant<PlainText, Emphasis, CodeSpan, InlineImage>;
using Inlines = std::vector<Inline>;

struct Heading {
  int level = 1;
  Inlines inlines;
  friend bool operator==(const Heading&, const Heading&) = default;
};
/// One list item. `ordered` records whether the source used numbers or bullets.
struct Step {
  int ordinal = 1;
  bool ordered = true;
  Inlines inlines;
  friend bool operator==(const Step&, const Step&) = default;
};
struct Paragraph {
  Inlines inlines;
  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};
struct ImageBlock {
  std::string path;
  std::string alt_text;
  friend bool operator==(const ImageBlock&, const ImageBlock&) = default;
};

using Block = std::variant<Heading, Step, Paragraph, ImageBlock>;

enum class ManualKind { TextOnly, Hybrid };

struct ManualDocument {
  std::filesystem::path source_path;
  std::filesystem::path base_dir;
  std::vector<Block> blocks;
  ManualKind kind = ManualKind::TextOnly;
};

/// Parses the supported Markdown subset: ATX headings, ordered/bulleted list
/// items, paragraphs, `*`/`**` emphasis, backtick code spans and `![alt](path)`
/// images. Throws MalformedInput on unclosed emphasis or code spans.
std::vector<Block> parse_markdown(std::string_view text);

/// Canonical Markdown for a block list; parse_markdown inverts it.
std::string serialize_markdown(const std::vector<Block>& blocks);

/// Maps p, ol, ul, li, b, strong, em, i, code, img and h1-h6 onto Markdown and
/// strips every other tag while keeping its text.
std::string normalize_html(std::string_view html, const std::filesystem::path& base_dir);

ManualKind classify_manual(const std::vector<Block>& blocks);
inline ManualKind classify_manual(const ManualDocument& doc) { return classify_manual(doc.blocks); }

/// Reads a .md or .html/.htm manual. Throws FileNotFound (manual or any image
/// it references), UnsupportedFormat or MalformedInput (including non-UTF-8).
ManualDocument load_manual(const std::filesystem::path& path);

/// Builds a document from in-memory Markdown without touching the filesystem.
ManualDocument parse_manual_text(std::string_view markdown, std::filesystem::path base_dir = {});

/// Concatenated visible text of a run of inlines (images contribute nothing).
std::string inline_text(const Inlines& inlines);

bool is_valid_utf8(std::string_view text);

std::string_view to_string(ManualKind kind);

}  // namespace m2v::manual
