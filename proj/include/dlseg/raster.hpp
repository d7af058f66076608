#pragma once

// Plain value-type rasters shared by every module: RGB images, label masks,
// per-pixel class probability maps and integer pixel boxes.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dlseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// H x W x 3 image, interleaved RGB, values in [0,1].
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  /// Mean Rec.601 luma over all pixels.
  double mean_luminance() const;

  bool operator==(const Image&) const = default;
};

/// H x W class-id grid; kIgnoreLabel marks unscored pixels.
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  LabelMask() = default;
  LabelMask(int h, int w, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const LabelMask& o) const { return height == o.height && width == o.width; }

  bool operator==(const LabelMask&) const = default;
};

/// H x W x C per-pixel class distribution, interleaved by pixel.
struct ProbMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ProbMap() = default;
  ProbMap(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  std::span<const float> pixel(int y, int x) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * channels, static_cast<std::size_t>(channels)};
  }

  /// Per-pixel argmax; ties resolve to the lowest channel.
  LabelMask argmax() const;

  /// Largest deviation of any pixel's channel sum from 1, or -1 if a value is negative.
  double simplex_error() const;
};

/// Integer pixel rectangle, (x, y) is the top-left corner.
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long area() const { return static_cast<long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool inside(int img_h, int img_w) const { return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= img_w && y + h <= img_h; }

  auto operator<=>(const Box&) const = default;
};

/// Intersect a box with [0,w) x [0,h); the result may be empty (w or h == 0).
Box clamp_box(const Box& b, int img_h, int img_w);

/// Grow every side by `fraction` of the box's own extent, then clamp to the image.
Box expand_box(const Box& b, double fraction, int img_h, int img_w);

Image crop(const Image& img, const Box& b);
LabelMask crop(const LabelMask& mask, const Box& b);
ProbMap crop(const ProbMap& map, const Box& b);

/// Half-pixel-centred bilinear resize (the align_corners=false convention).
Image resize_bilinear(const Image& img, int h, int w);

/// Bilinear resize followed by per-pixel renormalisation onto the simplex.
ProbMap resize_bilinear(const ProbMap& map, int h, int w);

/// Half-pixel-centred nearest neighbour; exact inverse pairs at integer factors.
LabelMask resize_nearest(const LabelMask& mask, int h, int w);

Image flip_horizontal(const Image& img);
LabelMask flip_horizontal(const LabelMask& mask);

/// Round every channel to the nearest multiple of 1/255.
void quantize_8bit(Image& img);

}  // namespace dlseg
