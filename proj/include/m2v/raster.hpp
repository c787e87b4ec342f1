#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace m2v {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major RGB8 image. Width and height are always positive.
class Raster {
 public:
  Raster(int width, int height, Rgb fill = {255, 255, 255});
  /// Wraps an existing RGB8 buffer; its length must be width*height*3.
  static Raster from_pixels(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  void fill_rect(int x, int y, int w, int h, Rgb c);
  void stroke_rect(int x, int y, int w, int h, Rgb c);
  /// Copies `src` with its top-left corner at (x, y), clipping at the border.
  void blit(const Raster& src, int x, int y);
  Raster sub_image(int x, int y, int w, int h) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

/// Single-channel float image used by the vision and matching code.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

GrayImage to_gray(const Raster& img);

Raster resize_bilinear(const Raster& img, int new_width, int new_height);
/// Samples as if the output grid were moved by (shift_x, shift_y) output pixels.
Raster resize_bilinear(const Raster& img, int new_width, int new_height, double shift_x, double shift_y);
Raster resize_nearest(const Raster& img, int new_width, int new_height);
/// Box-filter (pixel area) average; meant for shrinking.
Raster resize_area(const Raster& img, int new_width, int new_height);
/// Scales both dimensions by `scale`, rounding to the nearest pixel (minimum 1).
Raster rescale(const Raster& img, double scale);

Raster read_ppm(const std::filesystem::path& path);
void write_ppm(const Raster& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Raster& img);
Raster decode_ppm(std::span<const std::uint8_t> data);

/// 8-bit RGB/RGBA/gray PNG; alpha is composited over white.
Raster read_png(const std::filesystem::path& path);

/// Dispatches on extension (.ppm or .png).
Raster load_image(const std::filesystem::path& path);

}  // namespace m2v
