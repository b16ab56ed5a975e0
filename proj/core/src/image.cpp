#include "fedhorizon/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

#include "fedhorizon/error.hpp"

namespace fedhorizon {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
std::size_t read_ppm_token(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  std::size_t value = 0;
  if (!(in >> value)) throw DataError("malformed PPM header");
  return value;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError(path.string() + ": only binary PPM (P6) is supported");
  const std::size_t width = read_ppm_token(in);
  const std::size_t height = read_ppm_token(in);
  const std::size_t maxval = read_ppm_token(in);
  if (maxval != 255) throw DataError(path.string() + ": PPM maxval must be 255");
  if (width == 0 || height == 0) throw DataError(path.string() + ": empty image");
  in.get();  // single whitespace byte before the raster
  Image image(width, height);
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw DataError(path.string() + ": truncated PPM raster");
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
}

ImageTensor resize_bilinear(const Image& image, std::size_t out_width, std::size_t out_height) {
  if (image.empty()) throw DataError("cannot resize an empty image");
  if (out_width == 0 || out_height == 0) throw ConfigError("resize target must be non-empty");

  ImageTensor out{out_width, out_height, std::vector<double>(out_width * out_height * 3)};
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_height);
  const double max_x = static_cast<double>(image.width - 1);
  const double max_y = static_cast<double>(image.height - 1);

  for (std::size_t y = 0; y < out_height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - wx) * image.at(x0, y0, ch) + wx * image.at(x1, y0, ch);
        const double bottom = (1.0 - wx) * image.at(x0, y1, ch) + wx * image.at(x1, y1, ch);
        out.values[(y * out_width + x) * 3 + ch] = (1.0 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

ImageTensor preprocess(const Image& image) {
  ImageTensor t = resize_bilinear(image, kModelImageSize, kModelImageSize);
  for (double& v : t.values) v = std::clamp(v / 255.0, 0.0, 1.0);
  return t;
}

void AugmentationPolicy::validate() const {
  if (rotation_degrees.empty() || brightness_factors.empty()) {
    throw ConfigError("augmentation policy needs at least one rotation and one brightness factor");
  }
  for (const int deg : rotation_degrees) {
    if (deg < 0 || deg > 315 || deg % 45 != 0) {
      throw ConfigError("rotation " + std::to_string(deg) + " is not a multiple of 45 in [0, 315]");
    }
  }
  for (const double f : brightness_factors) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("brightness factors must be positive");
  }
  if (std::find(rotation_degrees.begin(), rotation_degrees.end(), 0) == rotation_degrees.end()) {
    throw ConfigError("rotation set must contain 0");
  }
  if (std::find(brightness_factors.begin(), brightness_factors.end(), 1.0) ==
      brightness_factors.end()) {
    throw ConfigError("brightness factors must contain 1.0");
  }
}

std::size_t AugmentationPolicy::variant_count() const {
  return rotation_degrees.size() * (horizontal_flip ? 2 : 1) * brightness_factors.size();
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(image.width - 1 - x, y, ch) = image.at(x, y, ch);
      }
    }
  }
  return out;
}

Image rotate(const Image& image, int degrees) {
  if (degrees % 45 != 0) throw ConfigError("rotation must be a multiple of 45 degrees");
  const int step = ((degrees / 45) % 8 + 8) % 8;
  if (step == 0) return image;

  // Exact cosine and sine at multiples of 45 degrees.
  constexpr double r = 0.70710678118654752440;
  constexpr double cos_table[8] = {1, r, 0, -r, -1, -r, 0, r};
  constexpr double sin_table[8] = {0, r, 1, r, 0, -r, -1, -r};
  const double cs = cos_table[step];
  const double sn = sin_table[step];

  Image out(image.width, image.height);
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  for (std::size_t y = 0; y < image.height; ++y) {
    const double dy = static_cast<double>(y) - cy;
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      // Output pixel pulls from the source point rotated back by -degrees.
      const double src_x = std::round(cx + dx * cs - dy * sn);
      const double src_y = std::round(cy + dx * sn + dy * cs);
      if (src_x < 0 || src_y < 0 || src_x >= static_cast<double>(image.width) ||
          src_y >= static_cast<double>(image.height)) {
        continue;
      }
      const auto sx = static_cast<std::size_t>(src_x);
      const auto sy = static_cast<std::size_t>(src_y);
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(x, y, ch) = image.at(sx, sy, ch);
    }
  }
  return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double chroma = hi - lo;
  Hsv out;
  out.v = hi;
  out.s = hi > 0.0 ? chroma / hi : 0.0;
  if (chroma > 0.0) {
    double h = 0.0;
    if (hi == r) {
      h = std::fmod((g - b) / chroma, 6.0);
      if (h < 0.0) h += 6.0;
    } else if (hi == g) {
      h = (b - r) / chroma + 2.0;
    } else {
      h = (r - g) / chroma + 4.0;
    }
    out.h = 60.0 * h;
  }
  return out;
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
  const double chroma = hsv.v * hsv.s;
  const double sector = hsv.h / 60.0;
  const double x = chroma * (1.0 - std::abs(std::fmod(sector, 2.0) - 1.0));
  const double m = hsv.v - chroma;
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(sector) % 6) {
    case 0: r1 = chroma; g1 = x; break;
    case 1: r1 = x; g1 = chroma; break;
    case 2: g1 = chroma; b1 = x; break;
    case 3: g1 = x; b1 = chroma; break;
    case 4: r1 = x; b1 = chroma; break;
    default: r1 = chroma; b1 = x; break;
  }
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

Image adjust_brightness(const Image& image, double factor) {
  if (!(factor > 0.0)) throw ConfigError("brightness factor must be positive");
  Image out(image.width, image.height);
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  for (std::size_t i = 0; i < image.rgb.size(); i += 3) {
    Hsv hsv = rgb_to_hsv(image.rgb[i] / 255.0, image.rgb[i + 1] / 255.0, image.rgb[i + 2] / 255.0);
    hsv.v = std::min(hsv.v * factor, 1.0);
    double r, g, b;
    hsv_to_rgb(hsv, r, g, b);
    out.rgb[i] = to_byte(r);
    out.rgb[i + 1] = to_byte(g);
    out.rgb[i + 2] = to_byte(b);
  }
  return out;
}

std::vector<Image> augment(const Image& image, const AugmentationPolicy& policy,
                           bool include_identity) {
  policy.validate();
  std::vector<Image> out;
  out.reserve(policy.variant_count());
  for (const int deg : policy.rotation_degrees) {
    const Image rotated = rotate(image, deg);
    for (int flip = 0; flip < (policy.horizontal_flip ? 2 : 1); ++flip) {
      const Image oriented = flip ? flip_horizontal(rotated) : rotated;
      for (const double factor : policy.brightness_factors) {
        if (!include_identity && deg == 0 && !flip && factor == 1.0) continue;
        out.push_back(factor == 1.0 ? oriented : adjust_brightness(oriented, factor));
      }
    }
  }
  return out;
}

std::vector<double> gridpool_features(const ImageTensor& tensor, std::size_t grid) {
  if (grid == 0 || grid > tensor.width || grid > tensor.height) {
    throw ConfigError("gridpool grid must be between 1 and the image side");
  }
  std::vector<double> features(3 * grid * grid, 0.0);
  for (std::size_t r = 0; r < grid; ++r) {
    const std::size_t y0 = r * tensor.height / grid;
    const std::size_t y1 = (r + 1) * tensor.height / grid;
    for (std::size_t c = 0; c < grid; ++c) {
      const std::size_t x0 = c * tensor.width / grid;
      const std::size_t x1 = (c + 1) * tensor.width / grid;
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double sum = 0.0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) sum += tensor.at(x, y, ch);
        }
        features[(r * grid + c) * 3 + ch] = sum / count;
      }
    }
  }
  return features;
}

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, FeatureExtractor> extractors;

  Registry() {
    extractors["gridpool"] = [](const ImageTensor& t, const nlohmann::json& config) {
      const auto grid = config.is_object() ? config.value("grid", std::size_t{4}) : std::size_t{4};
      return gridpool_features(t, grid);
    };
  }
};

Registry& registry() {
  static Registry instance;
  return instance;
}

}  // namespace

void register_extractor(const std::string& id, FeatureExtractor extractor) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  reg.extractors[id] = std::move(extractor);
}

bool has_extractor(const std::string& id) {
  auto& reg = registry();
  std::lock_guard lock(reg.mutex);
  return reg.extractors.contains(id);
}

std::vector<double> extract_features(const ImageTensor& tensor, const std::string& extractor_id,
                                     const nlohmann::json& config) {
  FeatureExtractor fn;
  {
    auto& reg = registry();
    std::lock_guard lock(reg.mutex);
    const auto it = reg.extractors.find(extractor_id);
    if (it == reg.extractors.end()) throw ConfigError("unknown feature extractor '" + extractor_id + "'");
    fn = it->second;
  }
  return fn(tensor, config);
}

}  // namespace fedhorizon
