#include "m2v/font.hpp"

namespace m2v {

namespace {

constexpr std::array<GlyphAtlas::Bitmap, GlyphAtlas::kLast - GlyphAtlas::kFirst + 1> kGlyphs = {{
#include "font_data.inc"
}};

}  // namespace

const GlyphAtlas& GlyphAtlas::builtin() {
  static const GlyphAtlas atlas(kGlyphs);
  return atlas;
}

const GlyphAtlas::Bitmap& GlyphAtlas::glyph(char c) const noexcept {
  if (!has_glyph(c)) c = '?';
  return glyphs_[static_cast<std::size_t>(c - kFirst)];
}

void GlyphAtlas::draw_text(Raster& target, int x, int y, std::string_view text, Rgb color) const {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int cx = x + static_cast<int>(i) * kGlyphWidth;
    for (int gy = 0; gy < kGlyphHeight; ++gy) {
      for (int gx = 0; gx < kGlyphWidth; ++gx) {
        if (pixel(text[i], gx, gy) && target.contains(cx + gx, y + gy)) {
          target.set(cx + gx, y + gy, color);
        }
      }
    }
  }
}

}  // namespace m2v
