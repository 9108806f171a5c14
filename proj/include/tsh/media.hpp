#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsh/image.hpp"

namespace tsh {

enum class Label { usual, unusual, unlabeled };
enum class Split { train, validation, test };

std::string to_string(Label label);
std::string to_string(Split split);
Label parse_label(const std::string& s);
Split parse_split(const std::string& s);

/// A weakly labeled grayscale frame sequence. Immutable once validated.
struct VideoClip {
  std::string id;
  std::vector<Frame> frames;
  double fps = 0;
  Label label = Label::unlabeled;
  Split split = Split::train;

  int length() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  /// Throws ValidationError / DimensionMismatch on invariant violations.
  void validate() const;
};

struct ManifestEntry {
  std::string id;
  std::string pattern;  // printf-style, exactly one %d conversion
  double fps = 0;
  Label label = Label::unlabeled;
  Split split = Split::train;
  std::optional<int> frame_count;  // when set, exactly these frames must exist
  int first_index = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> clips;
  std::filesystem::path base_dir;  // relative patterns resolve against this

  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Expands the single %d conversion of `pattern` with `index`.
std::string format_frame_path(const std::string& pattern, int index);

VideoClip load_clip(const ManifestEntry& entry, const std::filesystem::path& base_dir = {});

/// Writes every frame to dir/pattern and returns the manifest entry that
/// loads it back (pattern relative to `relative_to`).
ManifestEntry save_clip(const VideoClip& clip, const std::filesystem::path& dir,
                        const std::filesystem::path& relative_to,
                        const std::string& pattern = "frame_%04d.pgm");

// ---------------------------------------------------------------------------
// Synthetic clips

/// Smooth periodic value noise; periodic in x with period `period_x` pixels
/// and in y with `period_y` when both are multiples of `cell`.
class PeriodicNoise {
public:
  PeriodicNoise(std::uint64_t seed, double period_x, double period_y, double cell);

  /// Intensity in [0, 1].
  double sample(double x, double y) const;

private:
  double octave(int o, double x, double y) const;

  int cells_x_;
  int cells_y_;
  double cell_;
  std::vector<std::vector<float>> grids_;  // one per octave
};

/// Frame whose content is the periodic texture translated by (dx, dy).
/// Integer shifts equal shift_circular of the unshifted frame when W and H
/// are multiples of `cell`.
Frame texture_frame(const PeriodicNoise& noise, int width, int height, double dx, double dy,
                    double contrast = 160.0, double offset = 48.0);

enum class SynthKind { smooth, jolt };
std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& s);

struct SynthParams {
  int blob_count = 4;  // one per region of a 2x2 layout
  double min_radius = 12;
  double max_radius = 13;
  double smooth_speed_min = 0.6;  // px/frame, <= 1.5
  double smooth_speed_max = 1.2;
  double jolt_speed_min = 6.0;  // px/frame, >= 6
  double jolt_speed_max = 8.0;
  double jolt_seconds = 0.5;
  double texture_cell = 4.0;
  std::uint8_t background = 96;
};

/// Ground-truth unusual interval: motion steps k -> k+1 for k in [start, end)
/// are fast.
struct JoltInterval {
  int start_frame = 0;
  int end_frame = 0;  // exclusive
  int center() const { return (start_frame + end_frame) / 2; }
  bool operator==(const JoltInterval&) const = default;
};

struct SynthMeta {
  std::string id;
  SynthKind kind = SynthKind::smooth;
  std::optional<JoltInterval> jolt;

  bool operator==(const SynthMeta&) const = default;
};

struct SynthClip {
  VideoClip clip;
  SynthMeta meta;
};

/// Deterministic in all arguments. Throws ValidationError when the clip is
/// too short to hold a jolt window (V < 3 * jolt frames) or sizes are invalid.
SynthClip synth_clip(SynthKind kind, std::uint64_t seed, int frames, int width, int height,
                     double fps, const SynthParams& params = {});

/// Frames of the fixed periodic texture moving at a constant (vx, vy) px/frame.
VideoClip translating_clip(std::uint64_t seed, int frames, int width, int height, double fps,
                           double vx, double vy);

/// Sidecar JSON {"id","kind","jolt_start_frame","jolt_end_frame"}; smooth clips
/// store -1 for both frames.
void save_synth_sidecar(const std::filesystem::path& path, const SynthMeta& meta);
SynthMeta load_synth_sidecar(const std::filesystem::path& path);

}  // namespace tsh
