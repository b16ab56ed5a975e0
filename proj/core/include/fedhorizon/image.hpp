#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedhorizon {

/// 8-bit RGB image, rows top to bottom, pixels interleaved (r, g, b).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) {
    return rgb[(y * width + x) * 3 + ch];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const {
    return rgb[(y * width + x) * 3 + ch];
  }
  bool empty() const noexcept { return width == 0 || height == 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Real-valued image, same layout as Image.
struct ImageTensor {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y, std::size_t ch) const {
    return values[(y * width + x) * 3 + ch];
  }
};

inline constexpr std::size_t kModelImageSize = 256;

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Bilinear resampling with half-pixel centers: output pixel (x, y) samples
/// source coordinate ((x + 0.5) * W / out_w - 0.5, (y + 0.5) * H / out_h - 0.5),
/// clamped to the source grid. Channel values stay on the 0..255 scale.
ImageTensor resize_bilinear(const Image& image, std::size_t out_width, std::size_t out_height);

/// Resize to 256 x 256, then divide by 255 so every value lies in [0, 1].
ImageTensor preprocess(const Image& image);

struct AugmentationPolicy {
  std::vector<int> rotation_degrees{0, 45, 90, 135, 180, 225, 270, 315};
  bool horizontal_flip = true;
  std::vector<double> brightness_factors{1.0, 1.25, 1.5};

  /// Rotations must be multiples of 45 in [0, 315] and include 0; factors must
  /// be positive and include 1.0.
  void validate() const;
  std::size_t variant_count() const;
};

/// Mirror left to right.
Image flip_horizontal(const Image& image);

/// Counter-clockwise rotation (as displayed) about the canvas center, by a
/// multiple of 45 degrees. The canvas keeps its size; nearest-neighbour
/// sampling; pixels mapped from outside the source are zero.
Image rotate(const Image& image, int degrees);

struct Hsv {
  double h = 0.0;  // degrees in [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Hexcone model on channels scaled to [0, 1]:
///   V = max, C = max - min, S = C / V (0 when V = 0),
///   H = 60 * ((G - B) / C mod 6) if max = R, 60 * ((B - R) / C + 2) if max = G,
///       60 * ((R - G) / C + 4) otherwise; 0 when C = 0.
Hsv rgb_to_hsv(double r, double g, double b);
/// Inverse of rgb_to_hsv: C = V * S, X = C * (1 - |(H / 60) mod 2 - 1|), m = V - C.
void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b);

/// Scales V by factor, clips it to 1, converts back and rounds each channel
/// to the nearest 8-bit value.
Image adjust_brightness(const Image& image, double factor);

/// Every combination rotation x flip x brightness, in that nesting order
/// (flip-off before flip-on, factors in policy order). With include_identity
/// false the (0 degrees, no flip, 1.0) variant is left out.
std::vector<Image> augment(const Image& image, const AugmentationPolicy& policy,
                           bool include_identity = true);

using FeatureExtractor =
    std::function<std::vector<double>(const ImageTensor&, const nlohmann::json& config)>;

/// Registered extractors by id. "gridpool" is built in: config {"grid": g}
/// (default 4) splits the canvas into g x g cells, cell (r, c) covering rows
/// [r*H/g, (r+1)*H/g) and columns [c*W/g, (c+1)*W/g), and emits the per-channel
/// mean of each cell; index = (r * g + c) * 3 + channel, so d = 3 * g^2.
void register_extractor(const std::string& id, FeatureExtractor extractor);
bool has_extractor(const std::string& id);

/// Throws ConfigError on an unknown extractor id.
std::vector<double> extract_features(const ImageTensor& tensor, const std::string& extractor_id,
                                     const nlohmann::json& config = nlohmann::json::object());

std::vector<double> gridpool_features(const ImageTensor& tensor, std::size_t grid);

}  // namespace fedhorizon
