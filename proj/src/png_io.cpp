#include "dlseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "dlseg/errors.hpp"

namespace dlseg {
namespace {

struct PngReader {
  png_image image{};

  explicit PngReader(const std::filesystem::path& path) {
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
      throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  ~PngReader() { png_image_free(&image); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  std::vector<png_byte> finish(png_uint_32 format, const std::filesystem::path& path) {
    image.format = format;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
      throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    return buf;
  }
};

void write(const std::filesystem::path& path, int h, int w, png_uint_32 format, const std::vector<png_byte>& buf) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  PngReader r(path);
  if (r.image.format & PNG_FORMAT_FLAG_LINEAR) throw IoError("16-bit PNG not supported: " + path.string());
  const int h = static_cast<int>(r.image.height);
  const int w = static_cast<int>(r.image.width);
  auto buf = r.finish(PNG_FORMAT_RGB, path);
  Image img(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image& img) {
  std::vector<png_byte> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
  write(path, img.height, img.width, PNG_FORMAT_RGB, buf);
}

LabelMask read_png_gray(const std::filesystem::path& path) {
  PngReader r(path);
  if (r.image.format != PNG_FORMAT_GRAY)
    throw ValidationError("label PNG must be 8-bit single-channel: " + path.string());
  const int h = static_cast<int>(r.image.height);
  const int w = static_cast<int>(r.image.width);
  auto buf = r.finish(PNG_FORMAT_GRAY, path);
  LabelMask mask(h, w);
  std::memcpy(mask.data.data(), buf.data(), buf.size());
  return mask;
}

void write_png_gray(const std::filesystem::path& path, const LabelMask& mask) {
  std::vector<png_byte> buf(mask.data.begin(), mask.data.end());
  write(path, mask.height, mask.width, PNG_FORMAT_GRAY, buf);
}

}  // namespace dlseg
