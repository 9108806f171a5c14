#include "tsh/pipeline.hpp"

#include <cstdio>
#include <map>

#include <spdlog/spdlog.h>

#include "tsh/error.hpp"
#include "tsh/evalkit.hpp"
#include "tsh/parallel.hpp"
#include "tsh/rng.hpp"

namespace fs = std::filesystem;

namespace tsh {

namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", prefix, i);
  return buf;
}

}  // namespace

std::vector<SynthClip> synth_clips(int per_class, std::uint64_t seed, const SynthDatasetOptions& opt) {
  if (per_class < 0) throw ValidationError("synth: count must be >= 0");
  std::vector<SynthClip> out;
  std::vector<Label> labels;
  for (int kind = 0; kind < 2; ++kind) {
    for (int i = 0; i < per_class; ++i) {
      const auto k = kind == 0 ? SynthKind::smooth : SynthKind::jolt;
      auto sc = synth_clip(k, derive_seed(seed, static_cast<std::uint64_t>(kind * 1000003 + i)), opt.frames, opt.width,
                           opt.height, opt.fps, opt.params);
      sc.clip.id = numbered(kind == 0 ? "smooth" : "jolt", i);
      sc.meta.id = sc.clip.id;
      labels.push_back(sc.clip.label);
      out.push_back(std::move(sc));
    }
  }
  if (!out.empty()) {
    const auto splits = balanced_split(labels, opt.train_fraction, derive_seed(seed, 0x51));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].clip.split = splits[i];
  }
  return out;
}

DatasetManifest write_synth_dataset(const fs::path& out_dir, int per_class, std::uint64_t seed,
                                    const SynthDatasetOptions& opt) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (per_class == 0) spdlog::warn("synth: count is 0, writing an empty manifest");
  const auto clips = synth_clips(per_class, seed, opt);
  DatasetManifest m;
  m.base_dir = out_dir;
  for (const auto& sc : clips) {
    const fs::path dir = out_dir / "clips" / sc.clip.id;
    m.clips.push_back(save_clip(sc.clip, dir, out_dir));
    save_synth_sidecar(dir / "meta.json", sc.meta);
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

std::vector<ClipTrajectories> extract_all(const std::vector<const VideoClip*>& clips, const TrackParams& track,
                                          const FlowParams& flow, unsigned workers) {
  std::vector<ClipTrajectories> out(clips.size());
  parallel_for(clips.size(), workers, [&](std::size_t i) { out[i] = extract_trajectories(*clips[i], track, flow); });
  return out;
}

fs::path stage_path(const RunConfig& cfg, const std::string& stage, const std::string& hash,
                    const std::string& clip_id) {
  return cfg.cache_dir / stage / hash / (clip_id + ".bin");
}

std::vector<ClipTrajectories> extract_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                              StageStats* stats) {
  const std::string hash = cfg.extract_hash();
  std::vector<ClipTrajectories> out(manifest.clips.size());
  std::vector<char> cached(manifest.clips.size(), 0);
  parallel_for(manifest.clips.size(), cfg.workers, [&](std::size_t i) {
    const auto& e = manifest.clips[i];
    const auto path = stage_path(cfg, "extract", hash, e.id);
    if (fs::exists(path)) {
      out[i] = read_trajectory_cache(path, hash);
      cached[i] = 1;
      return;
    }
    const auto clip = load_clip(e, manifest.base_dir);
    out[i] = extract_trajectories(clip, cfg.track, cfg.flow);
    write_trajectory_cache(path, out[i], hash);
  });
  if (stats) {
    for (char c : cached) (c ? stats->cached : stats->computed)++;
  }
  return out;
}

std::vector<ClipDescriptors> describe_dataset(const DatasetManifest& manifest, const RunConfig& cfg,
                                              StageStats* stats) {
  const std::string ehash = cfg.extract_hash(), dhash = cfg.describe_hash();
  const std::string fp = cfg.descriptor.fingerprint();
  std::vector<ClipDescriptors> out(manifest.clips.size());
  std::vector<char> cached(manifest.clips.size(), 0);
  parallel_for(manifest.clips.size(), cfg.workers, [&](std::size_t i) {
    const auto& e = manifest.clips[i];
    const auto path = stage_path(cfg, "describe", dhash, e.id);
    if (fs::exists(path)) {
      out[i] = read_descriptor_cache(path, dhash);
      cached[i] = 1;
      return;
    }
    const auto tpath = stage_path(cfg, "extract", ehash, e.id);
    if (!fs::exists(tpath)) throw IoError("missing trajectories for clip " + e.id + "; run extract first");
    const auto ct = read_trajectory_cache(tpath, ehash);
    ClipDescriptors cd;
    cd.clip_id = e.id;
    cd.fingerprint = fp;
    cd.snippet_len = snippet_frames(cfg.descriptor.snippet_seconds, ct.fps);
    cd.snippets = sliding_snippets(ct, cfg.descriptor);
    write_descriptor_cache(path, cd, cfg.descriptor, dhash);
    out[i] = std::move(cd);
  });
  if (stats) {
    for (char c : cached) (c ? stats->cached : stats->computed)++;
  }
  return out;
}

std::vector<LabeledSnippet> labeled_pool(const std::vector<ClipDescriptors>& descs, const DatasetManifest& manifest,
                                         std::initializer_list<Split> splits) {
  if (descs.size() != manifest.clips.size()) throw DimensionMismatch("labeled_pool: one descriptor set per clip");
  std::vector<LabeledSnippet> pool;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    const auto& e = manifest.clips[i];
    if (std::find(splits.begin(), splits.end(), e.split) == splits.end()) continue;
    for (const auto& s : descs[i].snippets) pool.push_back({&s, e.label});
  }
  return pool;
}

}  // namespace tsh
