#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "m2v/font.hpp"
#include "m2v/raster.hpp"

namespace m2v::vision {

/// Binary edge map; `on` holds 0/1 per pixel, row-major.
struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;

  bool at(int x, int y) const { return on[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

struct BoundingBox {
  int x = 0, y = 0, w = 0, h = 0;
  double score = 0.0;

  int area() const noexcept { return w * h; }
  int center_x() const noexcept { return x + w / 2; }
  int center_y() const noexcept { return y + h / 2; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct VisionConfig {
  double canny_low = 50.0;
  double canny_high = 150.0;
  double nms_iou = 0.5;
  double cer_max = 0.5;
  int min_size = 4;
  /// An image counts as a pre-cropped element when its area is at most this
  /// multiple of the largest detected box.
  double precrop_ratio = 4.0;
  /// Maximum horizontal gap between text fragments merged into one line.
  int text_gap = GlyphAtlas::kGlyphWidth + 4;
};

/// Grayscale, 5x5 Gaussian (sigma 1.4), Sobel, non-maximum suppression and
/// hysteresis. Thresholds apply to the raw Sobel L2 magnitude.
EdgeMap canny(const Raster& img, double low, double high);

/// 8-connected components of edge pixels, in raster-scan order of their first
/// pixel. Components narrower or shorter than `min_size` are dropped.
std::vector<BoundingBox> detect_boxes(const EdgeMap& edges, int min_size);

/// Fraction of a box's perimeter pixels that are edge pixels.
double perimeter_density(const EdgeMap& edges, const BoundingBox& box);

/// Chains text-height boxes that sit on one line with gaps of at most
/// `max_gap` pixels and returns one enclosing box per chain of two or more.
std::vector<BoundingBox> group_text_lines(const EdgeMap& edges,
                                          const std::vector<BoundingBox>& boxes, int max_gap);

double iou(const BoundingBox& a, const BoundingBox& b);

/// Greedy NMS. Boxes are visited by descending score, ties by (y, x, w, h).
std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes, double iou_threshold);

/// Canny, component boxes, text-line grouping and NMS in one call.
std::vector<BoundingBox> propose_boxes(const Raster& img, const VisionConfig& config);

class OcrEngine {
 public:
  virtual ~OcrEngine() = default;
  virtual std::string recognize(const Raster& region) const = 0;
};

/// Fixed-font recognizer: Otsu binarization, frame and marker removal, row
/// banding by projection profile and per-cell template matching against the
/// atlas. `text_scales` lists the rendering scales to try; the default reads
/// native-size text only.
class GlyphOcr final : public OcrEngine {
 public:
  explicit GlyphOcr(const GlyphAtlas& atlas, std::vector<double> text_scales = {1.0});
  std::string recognize(const Raster& region) const override;

 private:
  const GlyphAtlas* atlas_;
  std::vector<double> scales_;
};

/// Scales tried on manual images, whose resolution is unknown.
inline const std::vector<double> kManualTextScales{1.0, 0.75, 0.8, 0.9, 1.25, 1.5};

std::string ocr(const Raster& region, const GlyphAtlas& atlas);

std::size_t levenshtein(std::string_view a, std::string_view b);

/// levenshtein(recognized, target) / |target|. Throws EmptyTarget.
double cer(std::string_view recognized, std::string_view target);

struct ScoredBox {
  BoundingBox box;
  std::string text;
  double cer = 0.0;
};

/// Box whose OCR text has the lowest CER against `target_name`, ties broken
/// by (y, x). Throws NoMatch when the best CER exceeds `cer_max`.
ScoredBox select_target_box(const Raster& img, const std::vector<BoundingBox>& boxes,
                            std::string_view target_name, const OcrEngine& engine,
                            double cer_max = 0.5);
BoundingBox select_target_box(const Raster& img, const std::vector<BoundingBox>& boxes,
                              std::string_view target_name, const GlyphAtlas& atlas,
                              double cer_max = 0.5);

/// Exact pixel copy of `box`. Throws OutOfBounds.
Raster crop(const Raster& img, const BoundingBox& box);

enum class ImageStyle { PreCropped, Screenshot };

ImageStyle classify_image(const Raster& img, const std::vector<BoundingBox>& proposals,
                          double precrop_ratio);

/// Lowercase alphanumerics with runs of anything else collapsed to '-'.
std::string slug(std::string_view text);

/// Element cache file name: `<index>_<slug>.ppm`.
std::string element_file_name(std::size_t record_index, std::string_view target);

/// Produces the element image for one named target out of a manual image:
/// pre-cropped images are used whole, screenshots are searched by OCR and the
/// best box cropped. Returns nullopt when a screenshot holds no match.
std::optional<Raster> extract_element(const Raster& manual_image, std::string_view target_name,
                                      const VisionConfig& config, const OcrEngine& engine);

}  // namespace m2v::vision
