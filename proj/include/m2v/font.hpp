#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "m2v/raster.hpp"

namespace m2v {

/// Fixed-pitch monochrome glyph set covering printable ASCII (0x20..0x7E).
/// The renderer draws with it and the OCR engine recognizes against it.
class GlyphAtlas {
 public:
  static constexpr int kGlyphWidth = 8;
  static constexpr int kGlyphHeight = 12;
  static constexpr char kFirst = ' ';
  static constexpr char kLast = '~';

  using Bitmap = std::array<std::uint8_t, kGlyphHeight>;

  /// The built-in 8x12 font.
  static const GlyphAtlas& builtin();

  int glyph_width() const noexcept { return kGlyphWidth; }
  int glyph_height() const noexcept { return kGlyphHeight; }

  static bool has_glyph(char c) noexcept { return c >= kFirst && c <= kLast; }
  /// Characters outside printable ASCII render as '?'.
  const Bitmap& glyph(char c) const noexcept;
  bool pixel(char c, int x, int y) const noexcept {
    return (glyph(c)[static_cast<std::size_t>(y)] >> (7 - x)) & 1;
  }

  int text_width(std::string_view text) const noexcept {
    return static_cast<int>(text.size()) * kGlyphWidth;
  }
  /// Draws `text` with its first cell's top-left corner at (x, y); pixels off
  /// the raster are clipped.
  void draw_text(Raster& target, int x, int y, std::string_view text, Rgb color) const;

 private:
  explicit GlyphAtlas(const std::array<Bitmap, kLast - kFirst + 1>& glyphs) : glyphs_(glyphs) {}

  std::array<Bitmap, kLast - kFirst + 1> glyphs_;
};

}  // namespace m2v
