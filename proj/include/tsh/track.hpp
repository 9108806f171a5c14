#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/flow.hpp"
#include "tsh/image.hpp"
#include "tsh/media.hpp"

namespace tsh {

struct TrackParams {
  int M = 8;  // sampling step in pixels, at every scale
  int D = 5;  // points per trajectory
  int n_scales = 3;
  double scale_factor = 0.70710678118654752;
  double structure_threshold = 0.001;  // fraction of the frame's max min-eigenvalue
  double static_variance_min = 0.5;    // px^2, on v_x + v_y
  // A step is erroneous when longer than max(max_step_fraction * l, max_step_px).
  double max_step_fraction = 0.7;
  double max_step_px = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrackParams from_json(const nlohmann::json& j);
};

struct Point2 {
  float x = 0;
  float y = 0;
  bool operator==(const Point2&) const = default;
};

struct Trajectory {
  std::string clip_id;
  int scale_index = 0;
  int start_frame = 0;
  std::vector<Point2> points;  // full-resolution pixel coordinates

  int end_frame() const { return start_frame + static_cast<int>(points.size()) - 1; }
  bool operator==(const Trajectory&) const = default;
};

/// Trajectories of one clip together with the clip geometry the descriptor
/// stage needs.
struct ClipTrajectories {
  std::string clip_id;
  int width = 0;
  int height = 0;
  int frames = 0;
  double fps = 0;
  std::vector<Trajectory> trajectories;
  bool operator==(const ClipTrajectories&) const = default;
};

/// Smaller eigenvalue of the gradient autocorrelation matrix summed over a
/// 3x3 window (Sobel gradients), per pixel.
Plane min_eigen_map(const Plane& image);

/// Step-M lattice offset by M/2, minus positions whose structure measure is
/// below structure_threshold times the frame maximum. Coordinates are in the
/// frame's own resolution.
std::vector<Point2> sample_points(const Plane& frame, const TrackParams& params);
std::vector<Point2> sample_points(const Frame& frame, const TrackParams& params);

/// Integrates the point through flows[0..D-2]. Returns nullopt when a point
/// leaves [0, W-1] x [0, H-1]; throws ValidationError when the start is
/// already outside or fewer than D-1 flows are given.
std::optional<std::vector<Point2>> track_point(Point2 start, const std::vector<const FlowField*>& flows,
                                               int D);
std::optional<std::vector<Point2>> track_point(Point2 start, const std::vector<FlowField>& flows, int D);

bool is_static(const Trajectory& t, const TrackParams& params);
bool is_erroneous(const Trajectory& t, const TrackParams& params);
std::vector<Trajectory> prune(const std::vector<Trajectory>& trajs, const TrackParams& params);

ClipTrajectories extract_trajectories(const VideoClip& clip, const TrackParams& params,
                                      const FlowParams& flow_params);

/// JSON header line, then per trajectory: u8 scale, u32 start frame,
/// D x (f32 x, f32 y).
void write_trajectory_cache(const std::filesystem::path& path, const ClipTrajectories& ct,
                            const std::string& config_hash);
/// Throws CacheMismatch when the stored hash differs from `expected_hash`
/// (an empty expectation accepts any hash).
ClipTrajectories read_trajectory_cache(const std::filesystem::path& path,
                                       const std::string& expected_hash = {});

}  // namespace tsh
