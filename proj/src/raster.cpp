#include "m2v/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "m2v/error.hpp"

namespace m2v {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "raster dimensions must be positive");
  }
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Raster Raster::from_pixels(int width, int height, std::vector<std::uint8_t> pixels) {
  Raster r(width, height);
  if (pixels.size() != r.pixels_.size()) {
    throw Error(ErrorCode::InvalidArgument, "pixel buffer length does not match dimensions");
  }
  r.pixels_ = std::move(pixels);
  return r;
}

void Raster::fill_rect(int x, int y, int w, int h, Rgb c) {
  const int x0 = std::max(0, x), y0 = std::max(0, y);
  const int x1 = std::min(width_, x + w), y1 = std::min(height_, y + h);
  for (int yy = y0; yy < y1; ++yy)
    for (int xx = x0; xx < x1; ++xx) set(xx, yy, c);
}

void Raster::stroke_rect(int x, int y, int w, int h, Rgb c) {
  if (w <= 0 || h <= 0) return;
  fill_rect(x, y, w, 1, c);
  fill_rect(x, y + h - 1, w, 1, c);
  fill_rect(x, y, 1, h, c);
  fill_rect(x + w - 1, y, 1, h, c);
}

void Raster::blit(const Raster& src, int x, int y) {
  for (int sy = 0; sy < src.height(); ++sy) {
    for (int sx = 0; sx < src.width(); ++sx) {
      if (contains(x + sx, y + sy)) set(x + sx, y + sy, src.at(sx, sy));
    }
  }
}

Raster Raster::sub_image(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > width_ || y + h > height_) {
    throw Error(ErrorCode::OutOfBounds, "region (" + std::to_string(x) + "," + std::to_string(y) +
                                            "," + std::to_string(w) + "," + std::to_string(h) +
                                            ") outside " + std::to_string(width_) + "x" +
                                            std::to_string(height_));
  }
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(w) * h * 3);
  for (int yy = y; yy < y + h; ++yy) {
    const auto row = pixels_.begin() + static_cast<std::ptrdiff_t>(index(x, yy));
    out.insert(out.end(), row, row + static_cast<std::ptrdiff_t>(w) * 3);
  }
  return from_pixels(w, h, std::move(out));
}

GrayImage to_gray(const Raster& img) {
  GrayImage g{img.width(), img.height(), {}};
  g.values.resize(static_cast<std::size_t>(img.width()) * img.height());
  const auto px = img.bytes();
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    g.values[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return g;
}

Raster resize_bilinear(const Raster& img, int new_width, int new_height) {
  return resize_bilinear(img, new_width, new_height, 0.0, 0.0);
}

Raster resize_bilinear(const Raster& img, int new_width, int new_height, double shift_x, double shift_y) {
  Raster out(new_width, new_height);
  const double sx = static_cast<double>(img.width()) / new_width;
  const double sy = static_cast<double>(img.height()) / new_height;
  const auto src = img.bytes();
  auto dst = out.bytes();
  for (int y = 0; y < new_height; ++y) {
    double fy = (y + 0.5 + shift_y) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      double fx = (x + 0.5 + shift_x) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        auto p = [&](int xx, int yy) {
          return static_cast<double>(src[(static_cast<std::size_t>(yy) * img.width() + xx) * 3 + c]);
        };
        const double top = p(x0, y0) * (1 - wx) + p(x1, y0) * wx;
        const double bottom = p(x0, y1) * (1 - wx) + p(x1, y1) * wx;
        const double v = top * (1 - wy) + bottom * wy;
        dst[(static_cast<std::size_t>(y) * new_width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Raster resize_nearest(const Raster& img, int new_width, int new_height) {
  Raster out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const int syy = std::min(img.height() - 1, y * img.height() / new_height);
    for (int x = 0; x < new_width; ++x) {
      const int sxx = std::min(img.width() - 1, x * img.width() / new_width);
      out.set(x, y, img.at(sxx, syy));
    }
  }
  return out;
}

Raster resize_area(const Raster& img, int new_width, int new_height) {
  Raster out(new_width, new_height);
  const double sx = static_cast<double>(img.width()) / new_width;
  const double sy = static_cast<double>(img.height()) / new_height;
  for (int y = 0; y < new_height; ++y) {
    const double y0 = y * sy, y1 = (y + 1) * sy;
    for (int x = 0; x < new_width; ++x) {
      const double x0 = x * sx, x1 = (x + 1) * sx;
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (int yy = static_cast<int>(y0); yy < img.height() && yy < y1; ++yy) {
        const double wy = std::min(y1, yy + 1.0) - std::max(y0, static_cast<double>(yy));
        for (int xx = static_cast<int>(x0); xx < img.width() && xx < x1; ++xx) {
          const double wgt = wy * (std::min(x1, xx + 1.0) - std::max(x0, static_cast<double>(xx)));
          const Rgb p = img.at(xx, yy);
          acc[0] += p.r * wgt;
          acc[1] += p.g * wgt;
          acc[2] += p.b * wgt;
          total += wgt;
        }
      }
      auto channel = [&](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v / total), 0L, 255L)); };
      out.set(x, y, {channel(acc[0]), channel(acc[1]), channel(acc[2])});
    }
  }
  return out;
}

Raster rescale(const Raster& img, double scale) {
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
  if (w == img.width() && h == img.height()) return img;
  return resize_bilinear(img, w, h);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Raster& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

Raster decode_ppm(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(data[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space_and_comments();
    if (pos >= data.size() || !std::isdigit(data[pos])) {
      throw Error(ErrorCode::MalformedInput, "bad PPM header");
    }
    long v = 0;
    while (pos < data.size() && std::isdigit(data[pos])) {
      v = v * 10 + (data[pos++] - '0');
      if (v > 1'000'000) throw Error(ErrorCode::MalformedInput, "PPM dimension too large");
    }
    return static_cast<int>(v);
  };
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6') {
    throw Error(ErrorCode::UnsupportedFormat, "only binary P6 PPM is supported");
  }
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "PPM maxval must be 255");
  if (pos >= data.size() || !std::isspace(data[pos])) {
    throw Error(ErrorCode::MalformedInput, "bad PPM header");
  }
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (data.size() - pos < n) throw Error(ErrorCode::MalformedInput, "truncated PPM data");
  return Raster::from_pixels(w, h, std::vector<std::uint8_t>(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                                data.begin() + static_cast<std::ptrdiff_t>(pos + n)));
}

Raster read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const Raster& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto data = encode_ppm(img);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

Raster read_png(const std::filesystem::path& path) {
  const auto data = read_file(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + image.message);
  }
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw Error(ErrorCode::MalformedInput, path.string() + ": empty PNG");
  }
  // Ask libpng for RGB with the alpha channel already composited onto white.
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + msg);
  }
  return Raster::from_pixels(static_cast<int>(image.width), static_cast<int>(image.height), std::move(pixels));
}

Raster load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw Error(ErrorCode::UnsupportedFormat, "unsupported image format: " + path.string());
}

}  // namespace m2v
