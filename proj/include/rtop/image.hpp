#pragma once

// Visual encoding: crop + box-average + HSL quantization into 32x32 nodes, summary attributes,
// pixel-wise lightness matching and masked matching against merged nodes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rtop/node.hpp"

namespace rtop {

// 8-bit-per-channel HSL sample (hue scaled 0..255 over the full circle).
struct Hsl8 {
  std::uint8_t h = 0;
  std::uint8_t s = 0;
  std::uint8_t l = 0;
  bool operator==(const Hsl8&) const = default;
};

struct Rgb8 {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb8&) const = default;
};

Hsl8 rgb_to_hsl8(Rgb8 c);
Rgb8 hsl8_to_rgb(Hsl8 c);

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<Hsl8> pixels;

  Raster() = default;
  Raster(int w, int h, Hsl8 fill = {});

  Hsl8& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Hsl8& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Raster&) const = default;
};

// Square crop window in source-raster pixels; (x, y) is the top-left corner.
struct FocusWindow {
  int x = 0;
  int y = 0;
  int side = kImageSide;
  bool operator==(const FocusWindow&) const = default;
};

inline constexpr int kHueBits = 3;
inline constexpr int kSaturationBits = 2;
inline constexpr int kLightnessBits = 3;

// floor(raw / 2^(8 - bits)).
std::uint8_t quantize(double raw, int bits);
// Center of the bucket, back on the 0..255 scale.
std::uint8_t bucket_center(int value, int bits);

ImageData encode_image(const Raster& source, FocusWindow focus);

struct ImageSummary {
  double mean_lightness = 0.0;
  double var_lightness = 0.0;
};

ImageSummary image_summary(const ImageData& img);
ImageSummary image_summary(const ImageMergedData& img);

struct MatchResult {
  bool matched = false;
  double distance = 0.0;
};

// Mean absolute lightness difference over all pixels.
double image_distance(const ImageData& a, const ImageData& b);
MatchResult match_image(const ImageData& probe, const ImageData& candidate, double threshold);

// Every must-match pixel within its lightness tolerance; others ignored.
bool match_image_masked(const ImageData& probe, const ImageMergedData& merged);
// Mean |dl| over must-match pixels (0 when there are none).
double masked_distance(const ImageData& probe, const ImageMergedData& merged);

// Bucket-center raster of a node, for display and export.
Raster render(const ImageData& img);
// Centers of a merged node; don't-care pixels are dimmed when `dim_dont_care` is set.
Raster render(const ImageMergedData& img, bool dim_dont_care);

Raster load_ppm(const std::filesystem::path& path);
std::string encode_ppm(const Raster& raster);
void save_ppm(const Raster& raster, const std::filesystem::path& path);
Raster load_png(const std::filesystem::path& path);
// Dispatches on file magic (P6 PPM or PNG).
Raster load_raster(const std::filesystem::path& path);
Raster decode_raster(const std::vector<std::uint8_t>& bytes);

}  // namespace rtop
