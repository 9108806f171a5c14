#pragma once

#include <cstdint>
#include <vector>

namespace tsh {

/// Row-major 8-bit grayscale image.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Frame() = default;
  Frame(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Frame&) const = default;
};

/// Row-major single-channel float image used by the numeric stages.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  /// Clamp-to-edge access.
  float clamped(int x, int y) const;
};

Plane to_plane(const Frame& frame);

/// Bilinear sample with coordinates clamped to the image.
float sample_bilinear(const Plane& p, double x, double y);

/// Pixel-center aligned bilinear resize.
Plane resize_bilinear(const Plane& src, int width, int height);

/// Separable Gaussian blur, radius ceil(3 sigma), clamped borders.
/// sigma <= 0 returns the input unchanged.
Plane gaussian_blur(const Plane& src, double sigma);

/// Maps a point between two resolutions of the same image using the
/// pixel-center convention of resize_bilinear.
inline double rescale_coord(double c, int from_size, int to_size) {
  return (c + 0.5) * static_cast<double>(to_size) / from_size - 0.5;
}

/// Circular shift: out(x, y) = in(x - dx, y - dy) modulo the frame size.
Frame shift_circular(const Frame& in, int dx, int dy);

}  // namespace tsh
