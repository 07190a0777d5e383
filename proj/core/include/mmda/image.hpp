#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmda {

/// Three-channel raster in planar (CHW) layout with values in [0, 1].
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(kChannels) * h * w, fill) {}

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  float& at(int c, int y, int x) { return pixels[index(c, y, x)]; }
  float at(int c, int y, int x) const { return pixels[index(c, y, x)]; }

  /// Shape consistent, every value finite and inside [0, 1].
  bool valid() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Bilinear resampling with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& src, int height, int width);

/// Mirror around the vertical axis. Applying it twice is the identity.
Image flip_horizontal(const Image& src);

/// Copy of the window [y, y+h) x [x, x+w). The window must lie inside src.
Image crop(const Image& src, int y, int x, int h, int w);

/// 64-bit FNV-1a over the quantized pixel bytes; stable across runs.
std::uint64_t checksum(const Image& image);

/// 8-bit RGB PNG I/O. Values are quantized to k/255 on write.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace mmda
