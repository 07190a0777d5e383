#include "mmda/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "mmda/error.hpp"

namespace mmda {

namespace {

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

bool Image::valid() const {
  if (height <= 0 || width <= 0) return false;
  if (pixels.size() != static_cast<std::size_t>(kChannels) * height * width) return false;
  return std::all_of(pixels.begin(), pixels.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

Image resize_bilinear(const Image& src, int height, int width) {
  if (height <= 0 || width <= 0) throw Error("resize_bilinear: target size must be positive");
  if (height == src.height && width == src.width) return src;
  Image dst(height, width);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = (1.0 - wx) * src.at(c, y0, x0) + wx * src.at(c, y0, x1);
        const double bottom = (1.0 - wx) * src.at(c, y1, x0) + wx * src.at(c, y1, x1);
        dst.at(c, y, x) = static_cast<float>(std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0));
      }
    }
  }
  return dst;
}

Image flip_horizontal(const Image& src) {
  Image dst(src.height, src.width);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) dst.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  return dst;
}

Image crop(const Image& src, int y, int x, int h, int w) {
  if (y < 0 || x < 0 || h <= 0 || w <= 0 || y + h > src.height || x + w > src.width)
    throw Error("crop: window outside the image");
  Image dst(h, w);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) dst.at(c, yy, xx) = src.at(c, y + yy, x + xx);
  return dst;
}

std::uint64_t checksum(const Image& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int shift = 0; shift < 32; shift += 8) {
    mix(static_cast<std::uint8_t>(image.height >> shift));
    mix(static_cast<std::uint8_t>(image.width >> shift));
  }
  for (float v : image.pixels) mix(quantize(v));
  return h;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (!image.valid()) throw Error("write_png: invalid image for " + path.string());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("write_png: cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_png: libpng initialization failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_png: libpng error while writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = quantize(image.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw DataError("write_png: flush failed for " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("read_png: cannot open " + path.string());
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("read_png: not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png: libpng initialization failed");
  }
  Image image;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_png: libpng error while reading " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize every supported variant to 8-bit RGB.
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  image = Image(height, width);
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(c, y, x) = static_cast<float>(row[static_cast<std::size_t>(x) * 3 + c]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

}  // namespace mmda
