#include "m2v/vision.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "m2v/error.hpp"

namespace m2v::vision {

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1}));
}

namespace {

GrayImage gaussian_blur(const GrayImage& src) {
  constexpr double sigma = 1.4;
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) {
    k[static_cast<std::size_t>(i + 2)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i + 2)];
  }
  for (auto& v : k) v /= sum;

  const int w = src.width, h = src.height;
  GrayImage tmp{w, h, std::vector<double>(src.values.size())};
  GrayImage out{w, h, std::vector<double>(src.values.size())};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * src.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

EdgeMap canny(const Raster& img, double low, double high) {
  if (!(low >= 0.0 && low < high)) {
    throw Error(ErrorCode::InvalidArgument, "canny thresholds must satisfy 0 <= low < high");
  }
  const int w = img.width(), h = img.height();
  EdgeMap edges{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  if (w < 3 || h < 3) return edges;

  const GrayImage blurred = gaussian_blur(to_gray(img));
  std::vector<double> mag(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<std::uint8_t> dir(mag.size(), 0);
  auto px = [&](int x, int y) { return blurred.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = std::hypot(gx, gy);
      double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
      if (angle < 0) angle += 180.0;
      if (angle < 22.5 || angle >= 157.5) dir[i] = 0;
      else if (angle < 67.5) dir[i] = 1;
      else if (angle < 112.5) dir[i] = 2;
      else dir[i] = 3;
    }
  }

  // Neighbor offsets along the gradient for each direction bin.
  constexpr std::array<std::array<int, 2>, 4> step{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}}};
  std::vector<double> thin(mag.size(), 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = mag[i];
      if (m <= 0.0) continue;
      const auto [dx, dy] = step[dir[i]];
      const double ahead = mag[static_cast<std::size_t>(y + dy) * w + (x + dx)];
      const double behind = mag[static_cast<std::size_t>(y - dy) * w + (x - dx)];
      if (m > ahead && m >= behind) thin[i] = m;
    }
  }

  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] > high) {
      edges.on[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (!edges.on[j] && thin[j] > low) {
          edges.on[j] = 1;
          queue.push_back(j);
        }
      }
    }
  }
  return edges;
}

double perimeter_density(const EdgeMap& edges, const BoundingBox& box) {
  std::size_t total = 0, hits = 0;
  auto visit = [&](int x, int y) {
    ++total;
    if (edges.at(x, y)) ++hits;
  };
  for (int x = box.x; x < box.x + box.w; ++x) {
    visit(x, box.y);
    if (box.h > 1) visit(x, box.y + box.h - 1);
  }
  for (int y = box.y + 1; y < box.y + box.h - 1; ++y) {
    visit(box.x, y);
    if (box.w > 1) visit(box.x + box.w - 1, y);
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<BoundingBox> detect_boxes(const EdgeMap& edges, int min_size) {
  if (min_size < 2) throw Error(ErrorCode::InvalidArgument, "min_size must be at least 2");
  const int w = edges.width, h = edges.height;
  std::vector<std::uint8_t> seen(edges.on.size(), 0);
  std::vector<BoundingBox> boxes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < edges.on.size(); ++start) {
    if (!edges.on[start] || seen[start]) continue;
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
          if (edges.on[j] && !seen[j]) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
      }
    }
    BoundingBox box{x0, y0, x1 - x0 + 1, y1 - y0 + 1, 0.0};
    if (box.w < min_size || box.h < min_size) continue;
    box.score = perimeter_density(edges, box);
    boxes.push_back(box);
  }
  return boxes;
}

std::vector<BoundingBox> group_text_lines(const EdgeMap& edges,
                                          const std::vector<BoundingBox>& boxes, int max_gap) {
  const int max_height = GlyphAtlas::kGlyphHeight + 6;
  std::vector<std::size_t> parent(boxes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto text_sized = [&](const BoundingBox& b) { return b.h <= max_height; };
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (!text_sized(boxes[i])) continue;
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (!text_sized(boxes[j])) continue;
      const auto& a = boxes[i];
      const auto& b = boxes[j];
      const int overlap = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
      if (overlap * 2 < std::min(a.h, b.h)) continue;
      const int gap = std::max(a.x, b.x) - std::min(a.x + a.w, b.x + b.w);
      if (gap > max_gap) continue;
      const std::size_t ra = find(i), rb = find(j);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
  std::vector<BoundingBox> lines;
  std::vector<std::size_t> members(boxes.size(), 0);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (text_sized(boxes[i])) ++members[find(i)];
  }
  for (std::size_t root = 0; root < boxes.size(); ++root) {
    if (members[root] < 2) continue;
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = std::numeric_limits<int>::min(), y1 = x1;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!text_sized(boxes[i]) || find(i) != root) continue;
      x0 = std::min(x0, boxes[i].x);
      y0 = std::min(y0, boxes[i].y);
      x1 = std::max(x1, boxes[i].x + boxes[i].w);
      y1 = std::max(y1, boxes[i].y + boxes[i].h);
    }
    BoundingBox line{x0, y0, x1 - x0, y1 - y0, 0.0};
    line.score = perimeter_density(edges, line);
    lines.push_back(line);
  }
  return lines;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long inter = ix * iy;
  const long uni = static_cast<long>(a.area()) + b.area() - inter;
  return uni <= 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "nms threshold must lie in (0, 1)");
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.y, a.x, a.w, a.h) < std::tie(b.y, b.x, b.w, b.h);
  });
  std::vector<BoundingBox> kept;
  for (const auto& box : boxes) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const BoundingBox& k) {
      return iou(box, k) >= iou_threshold;
    });
    if (!overlaps) kept.push_back(box);
  }
  return kept;
}

std::vector<BoundingBox> propose_boxes(const Raster& img, const VisionConfig& config) {
  const EdgeMap edges = canny(img, config.canny_low, config.canny_high);
  auto boxes = detect_boxes(edges, config.min_size);
  auto lines = group_text_lines(edges, boxes, config.text_gap);
  boxes.insert(boxes.end(), lines.begin(), lines.end());
  return nms(std::move(boxes), config.nms_iou);
}

// ---------------------------------------------------------------------------
// OCR

namespace {

int otsu_threshold(const std::vector<int>& gray) {
  std::array<std::size_t, 256> hist{};
  for (int v : gray) ++hist[static_cast<std::size_t>(v)];
  const double total = static_cast<double>(gray.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[static_cast<std::size_t>(i)]);
  double sum_bg = 0.0, weight_bg = 0.0, best = -1.0;
  int threshold = 0;
  for (int t = 0; t < 256; ++t) {
    weight_bg += static_cast<double>(hist[static_cast<std::size_t>(t)]);
    if (weight_bg == 0.0) continue;
    const double weight_fg = total - weight_bg;
    if (weight_fg == 0.0) break;
    sum_bg += t * static_cast<double>(hist[static_cast<std::size_t>(t)]);
    const double mean_bg = sum_bg / weight_bg;
    const double mean_fg = (sum_all - sum_bg) / weight_fg;
    const double between = weight_bg * weight_fg * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (between > best) {
      best = between;
      threshold = t;
    }
  }
  return threshold;
}

// Ink coverage per pixel in [0, 1]; 0 is background.
struct InkMap {
  int width = 0, height = 0;
  std::vector<double> ink;

  double at(int x, int y) const {
    if (x < 0 || y < 0 || x >= width || y >= height) return 0.0;
    return ink[static_cast<std::size_t>(y) * width + x];
  }
  bool on(int x, int y) const { return at(x, y) >= kInkCutoff; }
  void clear(int x, int y) { ink[static_cast<std::size_t>(y) * width + x] = 0.0; }

  static constexpr double kInkCutoff = 0.3;
};

struct Extent {
  int x0, y0, x1, y1;
  bool empty() const { return x1 < x0; }
};

Extent foreground_extent(const InkMap& m) {
  Extent e{m.width, m.height, -1, -1};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.on(x, y)) {
        e.x0 = std::min(e.x0, x);
        e.y0 = std::min(e.y0, y);
        e.x1 = std::max(e.x1, x);
        e.y1 = std::max(e.y1, y);
      }
  return e;
}

// Strips straight frame lines (button and text-field borders) from the outside
// in. Only applies while the foreground is taller than one glyph row, so a
// bare line of text is never touched.
void peel_frame(InkMap& m) {
  constexpr double kLineFill = 0.9;
  for (;;) {
    const Extent e = foreground_extent(m);
    if (e.empty() || e.y1 - e.y0 + 1 <= GlyphAtlas::kGlyphHeight) return;
    const int ew = e.x1 - e.x0 + 1, eh = e.y1 - e.y0 + 1;
    auto row_fill = [&](int y) {
      int n = 0;
      for (int x = e.x0; x <= e.x1; ++x) n += m.on(x, y);
      return n;
    };
    auto col_fill = [&](int x) {
      int n = 0;
      for (int y = e.y0; y <= e.y1; ++y) n += m.on(x, y);
      return n;
    };
    std::vector<int> rows, cols;
    for (int y : {e.y0, e.y1})
      if (row_fill(y) >= kLineFill * ew) rows.push_back(y);
    for (int x : {e.x0, e.x1})
      if (col_fill(x) >= kLineFill * eh) cols.push_back(x);
    if (rows.empty() && cols.empty()) return;
    // A resampled frame line smears into its neighbors; clear those too.
    for (int y : rows)
      for (int yy = y - 1; yy <= y + 1; ++yy)
        if (yy >= 0 && yy < m.height)
          for (int x = 0; x < m.width; ++x)
            if (yy == y || m.at(x, yy) < 1.0 - InkMap::kInkCutoff) m.clear(x, yy);
    for (int x : cols)
      for (int xx = x - 1; xx <= x + 1; ++xx)
        if (xx >= 0 && xx < m.width)
          for (int y = 0; y < m.height; ++y)
            if (xx == x || m.at(xx, y) < 1.0 - InkMap::kInkCutoff) m.clear(xx, y);
  }
}

// Clears squares about one glyph tall but wider than any glyph, such as
// checkbox markers. They sit next to the label and would otherwise read as
// bracket characters.
void clear_marker_boxes(InkMap& m) {
  constexpr double kEdgeFill = 0.8;
  std::vector<int> label(m.ink.size(), 0);
  int next = 0;
  for (int sy = 0; sy < m.height; ++sy) {
    for (int sx = 0; sx < m.width; ++sx) {
      if (!m.on(sx, sy) || label[static_cast<std::size_t>(sy) * m.width + sx]) continue;
      ++next;
      Extent e{sx, sy, sx, sy};
      std::vector<std::pair<int, int>> stack{{sx, sy}}, pixels;
      label[static_cast<std::size_t>(sy) * m.width + sx] = next;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        pixels.push_back({x, y});
        e = {std::min(e.x0, x), std::min(e.y0, y), std::max(e.x1, x), std::max(e.y1, y)};
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (!m.on(nx, ny)) continue;
            int& l = label[static_cast<std::size_t>(ny) * m.width + nx];
            if (!l) {
              l = next;
              stack.push_back({nx, ny});
            }
          }
      }
      const int w = e.x1 - e.x0 + 1, h = e.y1 - e.y0 + 1;
      // Wider than any glyph, about one glyph tall.
      if (w <= GlyphAtlas::kGlyphWidth + 1 || w > GlyphAtlas::kGlyphHeight + 4 || h < 7 ||
          h > GlyphAtlas::kGlyphHeight + 4 || std::abs(w - h) > 4) {
        continue;
      }
      // Each side must be covered along most of its length; resampling may
      // spread a side over two pixel rows.
      std::vector<char> top(static_cast<std::size_t>(w)), bottom(top), left(static_cast<std::size_t>(h)), right(left);
      for (const auto& [x, y] : pixels) {
        if (y <= e.y0 + 1) top[static_cast<std::size_t>(x - e.x0)] = 1;
        if (y >= e.y1 - 1) bottom[static_cast<std::size_t>(x - e.x0)] = 1;
        if (x <= e.x0 + 1) left[static_cast<std::size_t>(y - e.y0)] = 1;
        if (x >= e.x1 - 1) right[static_cast<std::size_t>(y - e.y0)] = 1;
      }
      auto covered = [&](const std::vector<char>& side) {
        return std::count(side.begin(), side.end(), 1) >= kEdgeFill * static_cast<double>(side.size());
      };
      // A crop may cut one side of the square off.
      if (covered(top) + covered(bottom) + covered(left) + covered(right) < 3) continue;
      // The interior may hold a check mark; the ring around it holds resampling smear.
      for (int y = e.y0 - 1; y <= e.y1 + 1; ++y)
        for (int x = e.x0 - 1; x <= e.x1 + 1; ++x)
          if (x >= 0 && y >= 0 && x < m.width && y < m.height) m.clear(x, y);
    }
  }
}

struct CellMatch {
  char ch = ' ';
  double distance = 0.0;
  /// Sum of squared ink of the cell and the chosen glyph.
  double energy = 0.0;
};

constexpr int kCellPixels = GlyphAtlas::kGlyphWidth * GlyphAtlas::kGlyphHeight;
using Cell = std::array<double, kCellPixels>;
constexpr std::array<double, 3> kSmooth{0.25, 0.5, 0.25};

// Glyph bitmaps smoothed with the same kernel applied to the ink map, so both
// sides of the comparison carry the same blur.
std::vector<Cell> smoothed_glyphs(const GlyphAtlas& atlas) {
  constexpr int gw = GlyphAtlas::kGlyphWidth, gh = GlyphAtlas::kGlyphHeight;
  std::vector<Cell> out;
  for (char c = GlyphAtlas::kFirst; c <= GlyphAtlas::kLast; ++c) {
    Cell cell{};
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= gw || yy >= gh || !atlas.pixel(c, xx, yy)) continue;
            acc += kSmooth[static_cast<std::size_t>(dx + 1)] * kSmooth[static_cast<std::size_t>(dy + 1)];
          }
        }
        cell[static_cast<std::size_t>(y * gw + x)] = acc;
      }
    }
    out.push_back(cell);
  }
  return out;
}

CellMatch best_glyph(const std::vector<Cell>& glyphs, const Cell& cell) {
  CellMatch best{' ', std::numeric_limits<double>::infinity()};
  for (std::size_t g = 0; g < glyphs.size(); ++g) {
    double d = 0.0;
    for (std::size_t i = 0; i < cell.size(); ++i) {
      const double diff = cell[i] - glyphs[g][i];
      d += diff * diff;
    }
    if (d < best.distance) best = {static_cast<char>(GlyphAtlas::kFirst + static_cast<int>(g)), d, 0.0};
  }
  const Cell& glyph = glyphs[static_cast<std::size_t>(best.ch - GlyphAtlas::kFirst)];
  for (std::size_t i = 0; i < cell.size(); ++i) best.energy += cell[i] * cell[i] + glyph[i] * glyph[i];
  return best;
}

struct Reading {
  std::string text;
  double cost = 0.0;
  /// Sum over inked cells of distance / energy, each term in [0, 2].
  double mismatch = 0.0;
  int cells = 0;
};

Reading read_band(const std::vector<Cell>& glyphs, const InkMap& m, const InkMap& smooth,
                  int band_top, int band_bottom) {
  constexpr int gw = GlyphAtlas::kGlyphWidth, gh = GlyphAtlas::kGlyphHeight;
  int c0 = m.width, c1 = -1;
  for (int y = band_top; y <= band_bottom; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.on(x, y)) {
        c0 = std::min(c0, x);
        c1 = std::max(c1, x);
      }
  if (c1 < 0) return {};

  std::string best_text;
  double best_cost = std::numeric_limits<double>::infinity();
  double best_mismatch = 0.0;
  int best_cells = 0;
  for (int oy = band_bottom - gh + 1; oy <= band_top; ++oy) {
    for (int ox = c0 - gw + 1; ox <= c0; ++ox) {
      const int cells = (c1 - ox) / gw + 1;
      std::string text;
      double cost = 0.0, mismatch = 0.0;
      int inked = 0;
      for (int cell = 0; cell < cells && cost < best_cost; ++cell) {
        Cell values{};
        for (int y = 0; y < gh; ++y) {
          // Pixels outside the band belong to other lines; treat as background.
          const int yy = oy + y;
          if (yy < band_top || yy > band_bottom) continue;
          for (int x = 0; x < gw; ++x) values[static_cast<std::size_t>(y * gw + x)] = smooth.at(ox + cell * gw + x, yy);
        }
        const CellMatch match = best_glyph(glyphs, values);
        text.push_back(match.ch);
        cost += match.distance;
        if (match.energy > 1e-9) {
          mismatch += match.distance / match.energy;
          ++inked;
        }
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_mismatch = mismatch;
        best_cells = inked;
        best_text = std::move(text);
      }
    }
  }
  while (!best_text.empty() && best_text.back() == ' ') best_text.pop_back();
  const auto first = best_text.find_first_not_of(' ');
  return {first == std::string::npos ? std::string{} : best_text.substr(first), best_cost, best_mismatch, best_cells};
}

}  // namespace

namespace {

Reading read_region(const Raster& region, const GlyphAtlas& atlas) {
  const int w = region.width(), h = region.height();
  std::vector<int> gray(static_cast<std::size_t>(w) * h);
  std::array<std::size_t, 256> hist{};
  const auto px = region.bytes();
  int lo = 255, hi = 0;
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<int>(std::lround(0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2]));
    lo = std::min(lo, gray[i]);
    hi = std::max(hi, gray[i]);
    ++hist[static_cast<std::size_t>(gray[i])];
  }
  // No usable contrast: treat as an empty region.
  if (hi - lo < 32) return {};

  // Otsu splits ink from paper; the more populous class is the paper, and the
  // most frequent level inside it is the reference background.
  const int t = otsu_threshold(gray);
  std::size_t dark = 0;
  for (int v : gray) dark += v <= t;
  const bool dark_is_ink = dark * 2 <= gray.size();
  int background = dark_is_ink ? hi : lo;
  std::size_t best_count = 0;
  for (int v = 0; v < 256; ++v) {
    const bool paper = dark_is_ink ? v > t : v <= t;
    if (paper && hist[static_cast<std::size_t>(v)] > best_count) {
      best_count = hist[static_cast<std::size_t>(v)];
      background = v;
    }
  }
  const int extreme = dark_is_ink ? lo : hi;
  const double span = std::max(1, std::abs(background - extreme));
  InkMap ink{w, h, std::vector<double>(gray.size())};
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double d = dark_is_ink ? background - gray[i] : gray[i] - background;
    ink.ink[i] = std::clamp(d / span, 0.0, 1.0);
  }
  peel_frame(ink);
  clear_marker_boxes(ink);

  std::vector<int> row_count(static_cast<std::size_t>(h), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) row_count[static_cast<std::size_t>(y)] += ink.on(x, y);

  InkMap smooth{w, h, std::vector<double>(ink.ink.size(), 0.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          acc += kSmooth[static_cast<std::size_t>(dx + 1)] * kSmooth[static_cast<std::size_t>(dy + 1)] * ink.at(x + dx, y + dy);
      smooth.ink[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  static const std::vector<Cell> glyphs = smoothed_glyphs(GlyphAtlas::builtin());
  const std::vector<Cell> custom = &atlas == &GlyphAtlas::builtin() ? std::vector<Cell>{} : smoothed_glyphs(atlas);
  const std::vector<Cell>& templates = custom.empty() ? glyphs : custom;

  Reading out;
  int y = 0;
  while (y < h) {
    if (row_count[static_cast<std::size_t>(y)] == 0) {
      ++y;
      continue;
    }
    const int top = y;
    int bottom = y;
    for (int yy = y; yy < std::min(h, top + GlyphAtlas::kGlyphHeight); ++yy) {
      if (row_count[static_cast<std::size_t>(yy)] > 0) bottom = yy;
    }
    const Reading line = read_band(templates, ink, smooth, top, bottom);
    out.cost += line.cost;
    out.mismatch += line.mismatch;
    out.cells += line.cells;
    if (!line.text.empty()) {
      if (!out.text.empty()) out.text.push_back(' ');
      out.text += line.text;
    }
    y = bottom + 1;
  }
  return out;
}

}  // namespace

GlyphOcr::GlyphOcr(const GlyphAtlas& atlas, std::vector<double> text_scales)
    : atlas_(&atlas), scales_(std::move(text_scales)) {
  if (scales_.empty()) throw Error(ErrorCode::InvalidArgument, "GlyphOcr needs at least one text scale");
  for (double s : scales_)
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "GlyphOcr text scales must be positive");
}

std::string GlyphOcr::recognize(const Raster& region) const {
  // Text rendered at scale s is resampled by 1/s back to the atlas size; the
  // reading with the lowest normalized mismatch per inked cell wins, ties to the earlier scale.
  std::optional<Reading> best;
  double best_score = 0.0;
  auto consider = [&](const Raster& img) {
    Reading r = read_region(img, *atlas_);
    if (r.cells == 0) return;
    const double score = r.mismatch / r.cells;
    if (!best || score < best_score) {
      best_score = score;
      best = std::move(r);
    }
  };
  for (const double s : scales_) {
    const int w = std::max(1, static_cast<int>(std::lround(region.width() / s)));
    const int h = std::max(1, static_cast<int>(std::lround(region.height() / s)));
    if (w == region.width() && h == region.height()) {
      consider(region);
    } else if (s > 1.0) {
      consider(resize_area(region, w, h));
    } else {
      // Enlarged text lands between atlas pixels; try a few sub-pixel phases.
      for (const double py : {0.0, 1.0 / 3.0, 2.0 / 3.0})
        for (const double px : {0.0, 1.0 / 3.0, 2.0 / 3.0}) consider(resize_bilinear(region, w, h, px, py));
    }
  }
  return best ? best->text : std::string{};
}

std::string ocr(const Raster& region, const GlyphAtlas& atlas) { return GlyphOcr(atlas).recognize(region); }

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double cer(std::string_view recognized, std::string_view target) {
  if (target.empty()) throw Error(ErrorCode::EmptyTarget, "CER target must be non-empty");
  return static_cast<double>(levenshtein(recognized, target)) / static_cast<double>(target.size());
}

ScoredBox select_target_box(const Raster& img, const std::vector<BoundingBox>& boxes,
                            std::string_view target_name, const OcrEngine& engine, double cer_max) {
  if (boxes.empty()) throw Error(ErrorCode::InvalidArgument, "select_target_box needs at least one box");
  std::optional<ScoredBox> best;
  for (const auto& box : boxes) {
    std::string text = engine.recognize(crop(img, box));
    const double score = cer(text, target_name);
    const bool better = !best || score < best->cer ||
                        (score == best->cer && std::tie(box.y, box.x) < std::tie(best->box.y, best->box.x));
    if (better) best = ScoredBox{box, std::move(text), score};
  }
  if (best->cer > cer_max) {
    throw Error(ErrorCode::NoMatch, "no box reads as '" + std::string(target_name) + "' (best '" +
                                        best->text + "', CER " + std::to_string(best->cer) + ")");
  }
  return *best;
}

BoundingBox select_target_box(const Raster& img, const std::vector<BoundingBox>& boxes,
                              std::string_view target_name, const GlyphAtlas& atlas, double cer_max) {
  return select_target_box(img, boxes, target_name, GlyphOcr(atlas), cer_max).box;
}

Raster crop(const Raster& img, const BoundingBox& box) { return img.sub_image(box.x, box.y, box.w, box.h); }

ImageStyle classify_image(const Raster& img, const std::vector<BoundingBox>& proposals, double precrop_ratio) {
  if (proposals.empty()) return ImageStyle::PreCropped;
  const auto largest = std::max_element(proposals.begin(), proposals.end(),
                                        [](const BoundingBox& a, const BoundingBox& b) { return a.area() < b.area(); });
  const double image_area = static_cast<double>(img.width()) * img.height();
  return image_area <= precrop_ratio * largest->area() ? ImageStyle::PreCropped : ImageStyle::Screenshot;
}

std::string slug(std::string_view text) {
  std::string out;
  bool pending_dash = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_dash && !out.empty()) out.push_back('-');
      pending_dash = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_dash = true;
    }
  }
  return out.empty() ? "element" : out;
}

std::string element_file_name(std::size_t record_index, std::string_view target) {
  return std::to_string(record_index) + "_" + slug(target) + ".ppm";
}

std::optional<Raster> extract_element(const Raster& manual_image, std::string_view target_name,
                                      const VisionConfig& config, const OcrEngine& engine) {
  const auto proposals = propose_boxes(manual_image, config);
  if (classify_image(manual_image, proposals, config.precrop_ratio) == ImageStyle::PreCropped) {
    return manual_image;
  }
  try {
    return crop(manual_image, select_target_box(manual_image, proposals, target_name, engine, config.cer_max).box);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoMatch) throw;
    return std::nullopt;
  }
}

}  // namespace m2v::vision
