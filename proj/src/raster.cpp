#include "dlseg/raster.hpp"

#include <algorithm>
#include <cmath>

#include "dlseg/errors.hpp"

namespace dlseg {

Image::Image(int h, int w, float fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

double Image::mean_luminance() const {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    const float* p = data.data() + i * kChannels;
    acc += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return acc / static_cast<double>(pixel_count());
}

LabelMask::LabelMask(int h, int w, std::uint8_t fill) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

ProbMap::ProbMap(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

LabelMask ProbMap::argmax() const {
  LabelMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto px = pixel(y, x);
      out.at(y, x) = static_cast<std::uint8_t>(std::max_element(px.begin(), px.end()) - px.begin());
    }
  }
  return out;
}

double ProbMap::simplex_error() const {
  double worst = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (float v : pixel(y, x)) {
        if (v < 0.0f) return -1.0;
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

Box clamp_box(const Box& b, int img_h, int img_w) {
  const int x0 = std::clamp(b.x, 0, img_w);
  const int y0 = std::clamp(b.y, 0, img_h);
  const int x1 = std::clamp(b.x + b.w, 0, img_w);
  const int y1 = std::clamp(b.y + b.h, 0, img_h);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

Box expand_box(const Box& b, double fraction, int img_h, int img_w) {
  const int dx = static_cast<int>(std::lround(b.w * fraction));
  const int dy = static_cast<int>(std::lround(b.h * fraction));
  return clamp_box({b.x - dx, b.y - dy, b.w + 2 * dx, b.h + 2 * dy}, img_h, img_w);
}

namespace {

void check_crop(const Box& b, int h, int w) {
  if (!b.inside(h, w)) {
    throw ValidationError("crop box (" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) +
                          "," + std::to_string(b.h) + ") outside " + std::to_string(w) + "x" + std::to_string(h) +
                          " raster");
  }
}

// Source coordinate and blend weight for half-pixel-centred sampling.
struct Tap {
  int lo;
  int hi;
  float t;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::max(s, 0.0);
    int lo = std::min(static_cast<int>(s), src - 1);
    int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

template <typename Get, typename Put>
void bilinear_kernel(int src_h, int src_w, int dst_h, int dst_w, int channels, Get get, Put put) {
  auto ty = bilinear_taps(src_h, dst_h);
  auto tx = bilinear_taps(src_w, dst_w);
  for (int y = 0; y < dst_h; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < dst_w; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < channels; ++c) {
        const float top = get(a.lo, b.lo, c) * (1 - b.t) + get(a.lo, b.hi, c) * b.t;
        const float bot = get(a.hi, b.lo, c) * (1 - b.t) + get(a.hi, b.hi, c) * b.t;
        put(y, x, c, top * (1 - a.t) + bot * a.t);
      }
    }
  }
}

}  // namespace

Image crop(const Image& img, const Box& b) {
  check_crop(b, img.height, img.width);
  Image out(b.h, b.w);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = img.at(b.y + y, b.x + x, c);
  return out;
}

LabelMask crop(const LabelMask& mask, const Box& b) {
  check_crop(b, mask.height, mask.width);
  LabelMask out(b.h, b.w);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x) out.at(y, x) = mask.at(b.y + y, b.x + x);
  return out;
}

ProbMap crop(const ProbMap& map, const Box& b) {
  check_crop(b, map.height, map.width);
  ProbMap out(b.h, b.w, map.channels);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      for (int c = 0; c < map.channels; ++c) out.at(y, x, c) = map.at(b.y + y, b.x + x, c);
  return out;
}

Image resize_bilinear(const Image& img, int h, int w) {
  if (h <= 0 || w <= 0 || img.empty()) throw ValidationError("resize to empty image");
  if (h == img.height && w == img.width) return img;
  Image out(h, w);
  bilinear_kernel(
      img.height, img.width, h, w, Image::kChannels, [&](int y, int x, int c) { return img.at(y, x, c); },
      [&](int y, int x, int c, float v) { out.at(y, x, c) = v; });
  return out;
}

ProbMap resize_bilinear(const ProbMap& map, int h, int w) {
  if (h <= 0 || w <= 0 || map.data.empty()) throw ValidationError("resize to empty probability map");
  ProbMap out(h, w, map.channels);
  if (h == map.height && w == map.width) {
    out = map;
  } else {
    bilinear_kernel(
        map.height, map.width, h, w, map.channels, [&](int y, int x, int c) { return map.at(y, x, c); },
        [&](int y, int x, int c, float v) { out.at(y, x, c) = v; });
  }
  for (std::size_t i = 0; i < out.data.size(); i += static_cast<std::size_t>(out.channels)) {
    float s = 0.0f;
    for (int c = 0; c < out.channels; ++c) s += out.data[i + static_cast<std::size_t>(c)];
    if (s > 0.0f)
      for (int c = 0; c < out.channels; ++c) out.data[i + static_cast<std::size_t>(c)] /= s;
  }
  return out;
}

LabelMask resize_nearest(const LabelMask& mask, int h, int w) {
  if (h <= 0 || w <= 0 || mask.data.empty()) throw ValidationError("resize to empty mask");
  LabelMask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(static_cast<int>(std::floor((y + 0.5) * mask.height / h)), mask.height - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(static_cast<int>(std::floor((x + 0.5) * mask.width / w)), mask.width - 1);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

LabelMask flip_horizontal(const LabelMask& mask) {
  LabelMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, mask.width - 1 - x);
  return out;
}

void quantize_8bit(Image& img) {
  for (float& v : img.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

}  // namespace dlseg
