#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "support.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/error.hpp"
#include "tsh/image_io.hpp"
#include "tsh/media.hpp"
#include "tsh/track.hpp"

using namespace tsh;
using tsh::testing::TempDir;

namespace {

Frame noise_frame(int w, int h, std::uint64_t seed) {
  Frame f(w, h);
  std::uint64_t s = seed * 2654435761u + 1;
  for (auto& px : f.data) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    px = static_cast<std::uint8_t>(s >> 56);
  }
  return f;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("60 PGM frames at 30 fps load as a 60-frame unusual clip") {
  TempDir dir("media_load");
  for (int i = 0; i < 60; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "f%03d.pgm", i);
    write_pgm(dir / name, noise_frame(32, 24, i));
  }
  ManifestEntry e{"c", "f%03d.pgm", 30.0, Label::unusual, Split::train, std::nullopt, 0};
  const auto clip = load_clip(e, dir.path());
  CHECK(clip.length() == 60);
  CHECK(clip.fps == 30.0);
  CHECK(clip.label == Label::unusual);
  CHECK(clip.width() == 32);
  CHECK(clip.frames[17] == noise_frame(32, 24, 17));
}

TEST_CASE("a frame with different dimensions is a dimension mismatch") {
  TempDir dir("media_dims");
  for (int i = 0; i < 20; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "f%03d.pgm", i);
    write_pgm(dir / name, i == 17 ? noise_frame(40, 24, i) : noise_frame(32, 24, i));
  }
  ManifestEntry e{"c", "f%03d.pgm", 30.0, Label::usual, Split::train, std::nullopt, 0};
  CHECK_THROWS_AS(load_clip(e, dir.path()), DimensionMismatch);
}

TEST_CASE("fps of zero is rejected") {
  TempDir dir("media_fps");
  write_pgm(dir / "f000.pgm", noise_frame(32, 24, 0));
  ManifestEntry e{"c", "f%03d.pgm", 0.0, Label::usual, Split::train, std::nullopt, 0};
  CHECK_THROWS_AS(load_clip(e, dir.path()), ValidationError);

  const auto mpath = dir / "manifest.json";
  std::ofstream(mpath) << R"([{"id":"c","pattern":"f%03d.pgm","fps":0,"label":"usual","split":"train"}])";
  CHECK_THROWS_AS(load_manifest(mpath), ValidationError);
}

TEST_CASE("missing frames and duplicate ids are reported") {
  TempDir dir("media_missing");
  ManifestEntry e{"c", "f%03d.pgm", 25.0, Label::usual, Split::train, 5, 0};
  CHECK_THROWS_AS(load_clip(e, dir.path()), IoError);

  const auto mpath = dir / "manifest.json";
  std::ofstream(mpath) << R"([{"id":"a","pattern":"x%d.pgm","fps":30},{"id":"a","pattern":"y%d.pgm","fps":30}])";
  CHECK_THROWS_AS(load_manifest(mpath), ValidationError);
}

TEST_CASE("save then load reproduces frames bit-exactly, for PGM and PNG") {
  TempDir dir("media_roundtrip");
  VideoClip clip;
  clip.id = "rt";
  clip.fps = 24;
  clip.label = Label::usual;
  clip.split = Split::test;
  for (int i = 0; i < 6; ++i) clip.frames.push_back(noise_frame(20, 18, i + 7));
  for (const std::string ext : {"pgm", "png"}) {
    const auto e = save_clip(clip, dir / ext, dir.path(), "frame_%04d." + ext);
    const auto back = load_clip(e, dir.path());
    CHECK(back.frames == clip.frames);
    CHECK(back.fps == clip.fps);
    CHECK(back.split == Split::test);
  }
}

TEST_CASE("manifest round trip keeps every field") {
  TempDir dir("media_manifest");
  DatasetManifest m;
  m.clips.push_back({"a", "a/f%04d.pgm", 30, Label::unusual, Split::train, 90, 0});
  m.clips.push_back({"b", "b/f%04d.png", 12.5, Label::usual, Split::validation, std::nullopt, 1});
  save_manifest(dir / "m.json", m);
  const auto back = load_manifest(dir / "m.json");
  REQUIRE(back.clips.size() == 2);
  CHECK(back.clips[0] == m.clips[0]);
  CHECK(back.clips[1] == m.clips[1]);
  CHECK(back.base_dir == dir.path());
}

TEST_CASE("frame patterns need exactly one integer conversion") {
  CHECK(format_frame_path("f_%04d.pgm", 7) == "f_0007.pgm");
  CHECK(format_frame_path("%d.png", 12) == "12.png");
  CHECK_THROWS_AS(format_frame_path("plain.pgm", 1), ValidationError);
  CHECK_THROWS_AS(format_frame_path("%d_%d.pgm", 1), ValidationError);
}

TEST_CASE("synth_clip is a pure function of its arguments") {
  const auto a = synth_clip(SynthKind::jolt, 1, 90, 160, 120, 30);
  const auto b = synth_clip(SynthKind::jolt, 1, 90, 160, 120, 30);
  CHECK(a.clip.frames == b.clip.frames);
  CHECK(a.meta == b.meta);
  const auto c = synth_clip(SynthKind::jolt, 2, 90, 160, 120, 30);
  CHECK_FALSE(a.clip.frames == c.clip.frames);
}

TEST_CASE("jolt interval lies inside the clip and lasts about half a second") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sc = synth_clip(SynthKind::jolt, seed, 60, 64, 48, 30);
    REQUIRE(sc.meta.jolt.has_value());
    CHECK(sc.meta.jolt->start_frame >= 0);
    CHECK(sc.meta.jolt->end_frame <= 60);
    CHECK(sc.meta.jolt->end_frame - sc.meta.jolt->start_frame == 15);
    CHECK(sc.clip.label == Label::unusual);
  }
  const auto s = synth_clip(SynthKind::smooth, 3, 60, 64, 48, 30);
  CHECK_FALSE(s.meta.jolt.has_value());
  CHECK(s.clip.label == Label::usual);
}

TEST_CASE("too few frames for a jolt window is an error") {
  CHECK_THROWS_AS(synth_clip(SynthKind::jolt, 0, 20, 64, 48, 30), ValidationError);
  CHECK_NOTHROW(synth_clip(SynthKind::smooth, 0, 20, 64, 48, 30));
  CHECK_THROWS_AS(synth_clip(SynthKind::smooth, 0, 20, 8, 48, 30), ValidationError);
}

TEST_CASE("sidecar round trip, smooth clips store -1") {
  TempDir dir("media_sidecar");
  const auto j = synth_clip(SynthKind::jolt, 4, 90, 64, 48, 30).meta;
  save_synth_sidecar(dir / "j.json", j);
  CHECK(load_synth_sidecar(dir / "j.json") == j);
  SynthMeta s{"s", SynthKind::smooth, std::nullopt};
  save_synth_sidecar(dir / "s.json", s);
  std::ifstream in(dir / "s.json");
  const auto raw = nlohmann::json::parse(in);
  CHECK(raw["jolt_start_frame"] == -1);
  CHECK(raw["jolt_end_frame"] == -1);
  CHECK(raw["kind"] == "smooth");
  CHECK(load_synth_sidecar(dir / "s.json") == s);
}

TEST_CASE("texture shifted by an integer equals the circular shift") {
  PeriodicNoise noise(9, 64, 48, 4);
  const auto f0 = texture_frame(noise, 64, 48, 0, 0);
  const auto f1 = texture_frame(noise, 64, 48, 3, -2);
  CHECK(f1 == shift_circular(f0, 3, -2));
}

TEST_CASE("smooth synth clip: tracked steps stay at or below 1.5 px") {
  const auto sc = synth_clip(SynthKind::smooth, 1, 60, 160, 120, 30);
  const auto ct = extract_trajectories(sc.clip, {}, {});
  REQUIRE_FALSE(ct.trajectories.empty());
  std::vector<double> steps;
  for (const auto& t : ct.trajectories) {
    for (std::size_t k = 1; k < t.points.size(); ++k) {
      steps.push_back(std::hypot(t.points[k].x - t.points[k - 1].x, t.points[k].y - t.points[k - 1].y));
    }
  }
  const double worst = *std::max_element(steps.begin(), steps.end());
  INFO("max step " << worst);
  CHECK(worst <= 1.5);
}

TEST_CASE("jolt synth clip: lengths inside the jolt are at least 4x the calm median") {
  const auto sc = synth_clip(SynthKind::jolt, 1, 90, 160, 120, 30);
  const auto ct = extract_trajectories(sc.clip, {}, {});
  const auto& jw = *sc.meta.jolt;
  std::vector<double> inside, outside;
  for (const auto& t : ct.trajectories) {
    const double l = trajectory_features(t).l;
    const int end = t.end_frame();
    if (end > jw.start_frame && end <= jw.end_frame) inside.push_back(l);
    if (t.start_frame > jw.end_frame || end < jw.start_frame) outside.push_back(l);
  }
  REQUIRE(inside.size() > 10);
  REQUIRE(outside.size() > 10);
  const double mi = median(inside), mo = median(outside);
  INFO("inside " << mi << " outside " << mo);
  CHECK(mi >= 4 * mo);
}
