#include "rtop/image.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <png.h>

#include "rtop/error.hpp"

namespace rtop {

Hsl8 rgb_to_hsl8(Rgb8 c) {
  const double r = c.r / 255.0;
  const double g = c.g / 255.0;
  const double b = c.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double l = (mx + mn) / 2.0;
  double h = 0.0;
  double s = 0.0;
  if (mx != mn) {
    const double d = mx - mn;
    s = l > 0.5 ? d / (2.0 - mx - mn) : d / (mx + mn);
    if (mx == r) {
      h = (g - b) / d + (g < b ? 6.0 : 0.0);
    } else if (mx == g) {
      h = (b - r) / d + 2.0;
    } else {
      h = (r - g) / d + 4.0;
    }
    h /= 6.0;  // 0..1
  }
  Hsl8 out;
  out.h = static_cast<std::uint8_t>(std::min(255.0, std::floor(h * 256.0)));
  out.s = static_cast<std::uint8_t>(std::lround(s * 255.0));
  out.l = static_cast<std::uint8_t>(std::lround(l * 255.0));
  return out;
}

namespace {

double hue_channel(double p, double q, double t) {
  if (t < 0.0) t += 1.0;
  if (t > 1.0) t -= 1.0;
  if (t < 1.0 / 6.0) return p + (q - p) * 6.0 * t;
  if (t < 0.5) return q;
  if (t < 2.0 / 3.0) return p + (q - p) * (2.0 / 3.0 - t) * 6.0;
  return p;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace

Rgb8 hsl8_to_rgb(Hsl8 c) {
  const double h = (c.h + 0.5) / 256.0;
  const double s = c.s / 255.0;
  const double l = c.l / 255.0;
  if (s == 0.0) return Rgb8{to_byte(l), to_byte(l), to_byte(l)};
  const double q = l < 0.5 ? l * (1.0 + s) : l + s - l * s;
  const double p = 2.0 * l - q;
  return Rgb8{to_byte(hue_channel(p, q, h + 1.0 / 3.0)), to_byte(hue_channel(p, q, h)),
              to_byte(hue_channel(p, q, h - 1.0 / 3.0))};
}

Raster::Raster(int w, int h, Hsl8 fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

std::uint8_t quantize(double raw, int bits) {
  const double step = static_cast<double>(1 << (8 - bits));
  const double maxv = static_cast<double>((1 << bits) - 1);
  return static_cast<std::uint8_t>(std::clamp(std::floor(raw / step), 0.0, maxv));
}

std::uint8_t bucket_center(int value, int bits) {
  const int step = 1 << (8 - bits);
  return static_cast<std::uint8_t>(value * step + step / 2);
}

ImageData encode_image(const Raster& source, FocusWindow focus) {
  if (focus.side <= 0 || focus.x < 0 || focus.y < 0 || focus.x + focus.side > source.width ||
      focus.y + focus.side > source.height) {
    throw Error(ErrorKind::OutOfBounds, "focus window outside source raster");
  }
  ImageData out;
  const int s = focus.side;
  for (int oy = 0; oy < kImageSide; ++oy) {
    const int y0 = oy * s / kImageSide;
    const int y1 = std::max(y0 + 1, (oy + 1) * s / kImageSide);
    for (int ox = 0; ox < kImageSide; ++ox) {
      const int x0 = ox * s / kImageSide;
      const int x1 = std::max(x0 + 1, (ox + 1) * s / kImageSide);
      double h = 0.0, sat = 0.0, l = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const Hsl8& p = source.at(focus.x + x, focus.y + y);
          h += p.h;
          sat += p.s;
          l += p.l;
        }
      }
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      out.at(ox, oy) = HslPixel{quantize(h / n, kHueBits), quantize(sat / n, kSaturationBits),
                                quantize(l / n, kLightnessBits)};
    }
  }
  return out;
}

ImageSummary image_summary(const ImageData& img) {
  double sum = 0.0, sq = 0.0;
  for (const auto& p : img.pixels) {
    sum += p.l;
    sq += static_cast<double>(p.l) * p.l;
  }
  const double n = kImagePixels;
  const double mean = sum / n;
  return ImageSummary{mean, std::max(0.0, sq / n - mean * mean)};
}

ImageSummary image_summary(const ImageMergedData& img) {
  double sum = 0.0, sq = 0.0;
  for (const auto& p : img.pixels) {
    sum += p.l;
    sq += p.l * p.l;
  }
  const double n = kImagePixels;
  const double mean = sum / n;
  return ImageSummary{mean, std::max(0.0, sq / n - mean * mean)};
}

double image_distance(const ImageData& a, const ImageData& b) {
  long total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    total += std::abs(static_cast<int>(a.pixels[i].l) - static_cast<int>(b.pixels[i].l));
  }
  return static_cast<double>(total) / kImagePixels;
}

MatchResult match_image(const ImageData& probe, const ImageData& candidate, double threshold) {
  const double d = image_distance(probe, candidate);
  return MatchResult{d <= threshold, d};
}

bool match_image_masked(const ImageData& probe, const ImageMergedData& merged) {
  for (std::size_t i = 0; i < merged.pixels.size(); ++i) {
    const auto& m = merged.pixels[i];
    if (!m.must_match) continue;
    if (std::abs(probe.pixels[i].l - m.l) > m.l_tol) return false;
  }
  return true;
}

double masked_distance(const ImageData& probe, const ImageMergedData& merged) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < merged.pixels.size(); ++i) {
    const auto& m = merged.pixels[i];
    if (!m.must_match) continue;
    total += std::abs(probe.pixels[i].l - m.l);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

Raster render(const ImageData& img) {
  Raster out(kImageSide, kImageSide);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto& p = img.pixels[i];
    out.pixels[i] = Hsl8{bucket_center(p.h, kHueBits), bucket_center(p.s, kSaturationBits),
                         bucket_center(p.l, kLightnessBits)};
  }
  return out;
}

Raster render(const ImageMergedData& img, bool dim_dont_care) {
  Raster out(kImageSide, kImageSide);
  auto center = [](double v, int bits) {
    const double step = static_cast<double>(1 << (8 - bits));
    return static_cast<std::uint8_t>(std::clamp(v * step + step / 2.0, 0.0, 255.0));
  };
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto& p = img.pixels[i];
    Hsl8 c{center(p.h, kHueBits), center(p.s, kSaturationBits), center(p.l, kLightnessBits)};
    if (dim_dont_care && !p.must_match) {
      c.s = 0;
      c.l = static_cast<std::uint8_t>(c.l / 4);
    }
    out.pixels[i] = c;
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Raster decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw Error(ErrorKind::Malformed, "bad PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(ErrorKind::Malformed, "not a binary PPM");
  }
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxv = read_int();
  if (w <= 0 || h <= 0 || maxv != 255) throw Error(ErrorKind::Malformed, "unsupported PPM");
  ++pos;  // single whitespace before raster
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < pos + need) throw Error(ErrorKind::Malformed, "truncated PPM");
  Raster out(w, h);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const auto* p = &bytes[pos + i * 3];
    out.pixels[i] = rgb_to_hsl8(Rgb8{p[0], p[1], p[2]});
  }
  return out;
}

Raster decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::Malformed, std::string("PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::Malformed, std::string("PNG: ") + image.message);
  }
  Raster out(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = rgb_to_hsl8(Rgb8{buf[i * 3], buf[i * 3 + 1], buf[i * 3 + 2]});
  }
  return out;
}

}  // namespace

Raster decode_raster(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return decode_png(bytes);
  }
  return decode_ppm(bytes);
}

Raster load_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
Raster load_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }
Raster load_raster(const std::filesystem::path& path) { return decode_raster(read_file(path)); }

std::string encode_ppm(const Raster& raster) {
  std::string out = "P6\n" + std::to_string(raster.width) + ' ' + std::to_string(raster.height) +
                    "\n255\n";
  out.reserve(out.size() + raster.pixels.size() * 3);
  for (const auto& p : raster.pixels) {
    const Rgb8 c = hsl8_to_rgb(p);
    out += static_cast<char>(c.r);
    out += static_cast<char>(c.g);
    out += static_cast<char>(c.b);
  }
  return out;
}

void save_ppm(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto bytes = encode_ppm(raster);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace rtop
