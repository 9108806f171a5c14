#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/track.hpp"

namespace tsh {

struct TrajectoryFeatures {
  double m_x = 0, m_y = 0;  // mean position
  double v_x = 0, v_y = 0;  // population variance
  double l = 0;             // summed step length
};

TrajectoryFeatures trajectory_features(const Trajectory& traj);

struct DescriptorParams {
  int N = 2;
  double snippet_seconds = 1.0;
  // Interior edges on l / frame diagonal and v / diagonal^2.
  std::vector<double> bin_edges_l = default_edges();
  std::vector<double> bin_edges_v = default_edges();
  int stride_frames = 1;

  static std::vector<double> default_edges() { return {1e-4, 2.5e-4, 6.3e-4, 1.6e-3, 4e-3, 1e-2, 2.5e-2}; }
  int dim() const { return 8 * 3 * N * N; }
  void validate() const;
  nlohmann::json to_json() const;
  static DescriptorParams from_json(const nlohmann::json& j);
  /// Hash of every field that changes the descriptor values.
  std::string fingerprint() const;
};

/// round-half-up(seconds * fps), at least 2.
int snippet_frames(double seconds, double fps);

struct SnippetHistogram {
  std::string clip_id;
  int center_frame = 0;
  // Blocks l, v_x, v_y; within each, cells row-major (row from y), 8 bins per cell.
  std::vector<float> values;
  bool operator==(const SnippetHistogram&) const = default;
};

/// Precomputed per-trajectory data for the histogram stage.
struct BinnedTrajectory {
  int end_frame = 0;
  int cell = -1;  // -1: center outside the frame
  int bin_l = 0, bin_x = 0, bin_y = 0;
};

int bin_index(double value, const std::vector<double>& edges);
/// Cell index i*N + j for a center, or -1 outside [0,W] x [0,H].
int grid_cell(double m_x, double m_y, int width, int height, int N);
BinnedTrajectory bin_trajectory(const Trajectory& traj, int width, int height, const DescriptorParams& params);

/// Histogram over trajectories whose end frame t satisfies
/// s - S/2 <= t <= s + S/2 (floor division), S = snippet_len frames.
SnippetHistogram snippet_histogram(std::span<const BinnedTrajectory> trajs, int s, int snippet_len,
                                   const DescriptorParams& params, const std::string& clip_id = {});
SnippetHistogram snippet_histogram(const std::vector<Trajectory>& trajs, int s, int width, int height,
                                   int snippet_len, const DescriptorParams& params);

/// First and last valid snippet centers, ceil(S/2) and V - ceil(S/2) - 1.
std::vector<int> snippet_centers(int V, int snippet_len, int stride);

/// One histogram per valid center; empty (with a warning) when the clip is
/// shorter than a snippet.
std::vector<SnippetHistogram> sliding_snippets(const ClipTrajectories& ct, const DescriptorParams& params);

struct ClipDescriptors {
  std::string clip_id;
  std::string fingerprint;
  int snippet_len = 0;
  std::vector<SnippetHistogram> snippets;
};

/// JSON header line (params, fingerprint, hash), then per snippet
/// u32 center, u32 dim, dim x f32.
void write_descriptor_cache(const std::filesystem::path& path, const ClipDescriptors& cd,
                            const DescriptorParams& params, const std::string& config_hash);
ClipDescriptors read_descriptor_cache(const std::filesystem::path& path, const std::string& expected_hash = {});

}  // namespace tsh
