#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "tsh/image.hpp"

namespace tsh {

struct FlowParams {
  int pyramid_levels = 3;  // coarser levels below full resolution
  double pyramid_scale = 0.5;
  int window_size = 15;
  int iterations = 3;
  int poly_n = 5;  // polynomial neighborhood is poly_n x poly_n
  double poly_sigma = 1.1;

  void validate() const;
  nlohmann::json to_json() const;
  static FlowParams from_json(const nlohmann::json& j);
};

/// Per-pixel displacement prev -> next in pixels; y grows downward.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w), height(h), u(static_cast<std::size_t>(w) * h, 0.f),
        v(static_cast<std::size_t>(w) * h, 0.f) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  /// Bilinear lookup with clamped coordinates.
  std::array<float, 2> sample(double x, double y) const;

  bool operator==(const FlowField&) const = default;
};

struct FlowResult {
  FlowField field;
  bool degenerate = false;  // an input frame had constant intensity
};

/// Quadratic polynomial expansion of one image at every pyramid level.
/// Building it once per frame lets consecutive pairs share the work.
class FlowPyramid {
public:
  struct Level {
    int width = 0;
    int height = 0;
    // Per pixel: b_x, b_y, a_xx, a_yy, a_xy of
    // f(x, y) ~ c + b_x x + b_y y + a_xx x^2 + a_yy y^2 + a_xy x y.
    std::vector<std::array<float, 5>> coeffs;
  };

  FlowPyramid(const Plane& image, const FlowParams& params);

  const std::vector<Level>& levels() const { return levels_; }
  bool constant() const { return constant_; }
  int width() const { return levels_.front().width; }
  int height() const { return levels_.front().height; }

private:
  std::vector<Level> levels_;
  bool constant_ = false;
};

/// Polynomial expansion of a single image (exposed for testing).
FlowPyramid::Level polynomial_expansion(const Plane& image, int poly_n, double poly_sigma);

FlowResult compute_flow(const FlowPyramid& prev, const FlowPyramid& next, const FlowParams& params);
FlowResult compute_flow(const Plane& prev, const Plane& next, const FlowParams& params);
FlowResult compute_flow(const Frame& prev, const Frame& next, const FlowParams& params = {});

/// Component-wise median over the clamped (2r+1)^2 neighborhood.
FlowField median_filter_flow(const FlowField& field, int radius = 1);

/// 16-byte header ("TSHFLOW1", u32 width, u32 height), then u-plane and
/// v-plane as little-endian f32.
void write_flow_cache(const std::filesystem::path& path, const FlowField& field);
FlowField read_flow_cache(const std::filesystem::path& path);

}  // namespace tsh
