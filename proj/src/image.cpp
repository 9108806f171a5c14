#include "tsh/image.hpp"

#include <algorithm>
#include <cmath>

namespace tsh {

float Plane::clamped(int x, int y) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return at(x, y);
}

Plane to_plane(const Frame& frame) {
  Plane p(frame.width, frame.height);
  std::transform(frame.data.begin(), frame.data.end(), p.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v); });
  return p;
}

float sample_bilinear(const Plane& p, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(p.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(p.height - 1));
  const int x0 = std::min(static_cast<int>(x), p.width - 1);
  const int y0 = std::min(static_cast<int>(y), p.height - 1);
  const int x1 = std::min(x0 + 1, p.width - 1);
  const int y1 = std::min(y0 + 1, p.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = p.at(x0, y0) * (1 - fx) + p.at(x1, y0) * fx;
  const double bottom = p.at(x0, y1) * (1 - fx) + p.at(x1, y1) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

Plane resize_bilinear(const Plane& src, int width, int height) {
  if (width == src.width && height == src.height) return src;
  Plane dst(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < width; ++x) {
      dst.at(x, y) = sample_bilinear(src, (x + 0.5) * sx - 0.5, fy);
    }
  }
  return dst;
}

Plane gaussian_blur(const Plane& src, double sigma) {
  if (sigma <= 0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = static_cast<float>(std::exp(-k * k / (2 * sigma * sigma)));
    sum += kernel[k + radius];
  }
  for (auto& k : kernel) k = static_cast<float>(k / sum);

  Plane tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * src.clamped(x + k, y);
      tmp.at(x, y) = acc;
    }
  }
  Plane dst(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.clamped(x, y + k);
      dst.at(x, y) = acc;
    }
  }
  return dst;
}

Frame shift_circular(const Frame& in, int dx, int dy) {
  Frame out(in.width, in.height);
  for (int y = 0; y < in.height; ++y) {
    const int sy = ((y - dy) % in.height + in.height) % in.height;
    for (int x = 0; x < in.width; ++x) {
      const int sx = ((x - dx) % in.width + in.width) % in.width;
      out.at(x, y) = in.at(sx, sy);
    }
  }
  return out;
}

}  // namespace tsh
