#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsh/config.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/discover.hpp"
#include "tsh/media.hpp"
#include "tsh/track.hpp"

namespace tsh {

struct SynthDatasetOptions {
  int frames = 90;
  int width = 160;
  int height = 120;
  double fps = 30;
  double train_fraction = 0.6;
  SynthParams params;
};

/// `per_class` smooth (usual) and jolt (unusual) clips with ids smooth_NNN /
/// jolt_NNN and a seeded balanced train/test split.
std::vector<SynthClip> synth_clips(int per_class, std::uint64_t seed, const SynthDatasetOptions& opt = {});

/// Writes frames, per-clip sidecars and manifest.json under `out_dir`.
DatasetManifest write_synth_dataset(const std::filesystem::path& out_dir, int per_class, std::uint64_t seed,
                                    const SynthDatasetOptions& opt = {});

std::vector<ClipTrajectories> extract_all(const std::vector<const VideoClip*>& clips, const TrackParams& track,
                                          const FlowParams& flow, unsigned workers = 0);

struct StageStats {
  int computed = 0;
  int cached = 0;
};

std::filesystem::path stage_path(const RunConfig& cfg, const std::string& stage, const std::string& hash,
                                 const std::string& clip_id);

/// Trajectories for every manifest clip, reusing cache/extract/<hash>/<clip>.bin.
std::vector<ClipTrajectories> extract_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                              StageStats* stats = nullptr);
/// Descriptors for every manifest clip, reusing cache/describe/<hash>/<clip>.bin.
/// Requires the extract stage's cache.
std::vector<ClipDescriptors> describe_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                              StageStats* stats = nullptr);

/// Snippets of clips whose split is in `splits`, tagged with the clip label.
std::vector<LabeledSnippet> labeled_pool(const std::vector<ClipDescriptors>& descs, const DatasetManifest& manifest,
                                         std::initializer_list<Split> splits);

}  // namespace tsh
