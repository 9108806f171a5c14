#include <doctest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"
#include "tsh/binio.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/error.hpp"
#include "tsh/media.hpp"
#include "tsh/track.hpp"

using namespace tsh;

namespace {

Plane noise_plane(int w, int h, std::uint64_t seed) {
  Plane p(w, h);
  for (auto& v : p.data) {
    seed = seed * 6364136223846793005ULL + 1442695040888963407ULL;
    v = static_cast<float>(seed >> 56);
  }
  return p;
}

FlowField constant_flow(int w, int h, float u, float v) {
  FlowField f(w, h);
  std::fill(f.u.begin(), f.u.end(), u);
  std::fill(f.v.begin(), f.v.end(), v);
  return f;
}

Trajectory line(std::vector<std::pair<float, float>> pts) {
  Trajectory t;
  for (auto [x, y] : pts) t.points.push_back({x, y});
  return t;
}

}  // namespace

TEST_CASE("step-8 lattice on a 64x64 noise frame has 64 positions") {
  TrackParams p;
  p.structure_threshold = 0;
  const auto pts = sample_points(noise_plane(64, 64, 3), p);
  CHECK(pts.size() == 64);
  CHECK(pts.front() == Point2{4, 4});
  CHECK(pts.back() == Point2{60, 60});
  // the default threshold keeps (almost) every point of pure noise
  CHECK(sample_points(noise_plane(64, 64, 3), TrackParams{}).size() >= 60);
}

TEST_CASE("constant frame yields no sample points") {
  CHECK(sample_points(Plane(64, 48, 120.f), TrackParams{}).empty());
  CHECK(sample_points(Frame(64, 48, 7), TrackParams{}).empty());
}

TEST_CASE("texture in the left half only keeps points on the left") {
  Plane p = noise_plane(64, 64, 9);
  for (int y = 0; y < 64; ++y) {
    for (int x = 32; x < 64; ++x) p.at(x, y) = 100.f;
  }
  const auto pts = sample_points(p, TrackParams{});
  REQUIRE_FALSE(pts.empty());
  for (const auto& q : pts) CHECK(q.x < 32);
}

TEST_CASE("min-eigen map is zero on constant images and positive on noise") {
  const auto flat = min_eigen_map(Plane(20, 20, 5.f));
  for (float v : flat.data) CHECK(v == doctest::Approx(0.0));
  const auto tex = min_eigen_map(noise_plane(20, 20, 1));
  CHECK(tex.at(10, 10) > 0);
}

TEST_CASE("constant flow (2,0) integrates to evenly spaced points") {
  const std::vector<FlowField> flows(4, constant_flow(40, 30, 2, 0));
  const auto pts = track_point({10, 10}, flows, 5);
  REQUIRE(pts.has_value());
  const std::vector<Point2> want{{10, 10}, {12, 10}, {14, 10}, {16, 10}, {18, 10}};
  CHECK(*pts == want);
}

TEST_CASE("zero flow gives five identical points, later pruned as static") {
  const std::vector<FlowField> flows(4, constant_flow(40, 30, 0, 0));
  const auto pts = track_point({10, 10}, flows, 5);
  REQUIRE(pts.has_value());
  for (const auto& q : *pts) CHECK(q == Point2{10, 10});
  Trajectory t;
  t.points = *pts;
  CHECK(is_static(t, TrackParams{}));
  CHECK(prune({t}, TrackParams{}).empty());
}

TEST_CASE("a point leaving the frame is discarded") {
  const std::vector<FlowField> flows(4, constant_flow(40, 30, 3, 0));
  CHECK_FALSE(track_point({39, 10}, flows, 5).has_value());
  CHECK_THROWS_AS(track_point({40.5f, 10}, flows, 5), ValidationError);
  CHECK_THROWS_AS(track_point({-1, 10}, flows, 5), ValidationError);
  const std::vector<FlowField> two(2, constant_flow(40, 30, 0, 1));
  CHECK_THROWS_AS(track_point({5, 5}, two, 5), ValidationError);
}

TEST_CASE("flow lookup is bilinear at sub-pixel positions") {
  FlowField f(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) f.u[f.index(x, y)] = static_cast<float>(x);
  }
  const std::vector<FlowField> flows(1, f);
  const auto pts = track_point({1.25f, 1}, flows, 2);
  REQUIRE(pts.has_value());
  CHECK((*pts)[1].x == doctest::Approx(2.5));
}

TEST_CASE("pruning rules") {
  TrackParams p;
  SUBCASE("identical points are removed") {
    CHECK(prune({line({{5, 5}, {5, 5}, {5, 5}, {5, 5}, {5, 5}})}, p).empty());
  }
  SUBCASE("one 40 px step with max_step_px 20 is removed") {
    p.max_step_px = 20;
    const auto t = line({{0, 0}, {1, 0}, {41, 0}, {42, 0}, {43, 0}});
    CHECK(is_erroneous(t, p));
    CHECK(prune({t}, p).empty());
  }
  SUBCASE("constant 2 px/frame is kept") {
    const auto t = line({{0, 0}, {2, 0}, {4, 0}, {6, 0}, {8, 0}});
    CHECK_FALSE(is_static(t, p));
    CHECK_FALSE(is_erroneous(t, p));
    CHECK(prune({t}, p).size() == 1);
  }
  SUBCASE("fast uniform motion above the floor is not erroneous") {
    const auto t = line({{0, 0}, {12, 0}, {24, 0}, {36, 0}, {48, 0}});
    CHECK_FALSE(is_erroneous(t, p));
  }
}

TEST_CASE("track parameters are validated") {
  TrackParams p;
  p.D = 1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.M = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.scale_factor = 1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  CHECK(TrackParams::from_json(TrackParams{}.to_json()).to_json() == TrackParams{}.to_json());
}

TEST_CASE("one-frame clip has no trajectories") {
  VideoClip c;
  c.id = "one";
  c.fps = 30;
  c.frames.push_back(synth_clip(SynthKind::smooth, 0, 1, 64, 48, 30).clip.frames[0]);
  CHECK(extract_trajectories(c, {}, {}).trajectories.empty());
}

TEST_CASE("smooth clip: every trajectory has D in-bounds points and passes pruning") {
  const auto sc = synth_clip(SynthKind::smooth, 5, 40, 160, 120, 30);
  TrackParams p;
  const auto ct = extract_trajectories(sc.clip, p, {});
  REQUIRE_FALSE(ct.trajectories.empty());
  CHECK(ct.width == 160);
  CHECK(ct.frames == 40);
  for (const auto& t : ct.trajectories) {
    REQUIRE(t.points.size() == static_cast<std::size_t>(p.D));
    CHECK(t.end_frame() < 40);
    for (const auto& q : t.points) {
      CHECK(q.x >= 0);
      CHECK(q.x < 160);
      CHECK(q.y >= 0);
      CHECK(q.y < 120);
    }
    CHECK_FALSE(is_static(t, p));
    CHECK_FALSE(is_erroneous(t, p));
    for (std::size_t k = 1; k < t.points.size(); ++k) {
      CHECK(std::hypot(t.points[k].x - t.points[k - 1].x, t.points[k].y - t.points[k - 1].y) <= p.max_step_px);
    }
  }
}

TEST_CASE("new seeds at full scale keep more than M/2 from active tracks") {
  const auto sc = synth_clip(SynthKind::smooth, 6, 30, 160, 120, 30);
  TrackParams p;
  const auto ct = extract_trajectories(sc.clip, p, {});
  std::size_t checked = 0;
  for (const auto& fresh : ct.trajectories) {
    if (fresh.scale_index != 0) continue;
    const int t = fresh.start_frame;
    for (const auto& old : ct.trajectories) {
      // a track whose last point is frame t has finished before seeding at t
      if (old.scale_index != 0 || old.start_frame >= t || old.end_frame() <= t) continue;
      const auto& q = old.points[t - old.start_frame];
      const double d = std::hypot(q.x - fresh.points[0].x, q.y - fresh.points[0].y);
      CHECK(d > p.M / 2.0 - 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("constant-velocity texture: every trajectory length within 5% of (D-1)|w|") {
  const auto clip = translating_clip(3, 20, 160, 120, 30, 2.0, 0.0);
  TrackParams p;
  const auto ct = extract_trajectories(clip, p, {});
  REQUIRE(ct.trajectories.size() > 100);
  const double want = (p.D - 1) * 2.0;
  std::size_t bad = 0;
  for (const auto& t : ct.trajectories) bad += std::abs(trajectory_features(t).l - want) > 0.05 * want;
  CHECK(bad == 0);
}

TEST_CASE("trajectory cache round trip and hash check") {
  tsh::testing::TempDir dir("track_cache");
  ClipTrajectories ct;
  ct.clip_id = "c1";
  ct.width = 64;
  ct.height = 48;
  ct.frames = 30;
  ct.fps = 25;
  for (int i = 0; i < 3; ++i) {
    Trajectory t = line({{1.5f + i, 2}, {2.5f, 3}, {3.5f, 4}, {4.5f, 5}, {5.5f, 6.25f}});
    t.clip_id = "c1";
    t.scale_index = i;
    t.start_frame = 7 * i;
    ct.trajectories.push_back(t);
  }
  const auto path = dir / "c1.bin";
  write_trajectory_cache(path, ct, "abc");
  CHECK(read_trajectory_cache(path, "abc") == ct);
  CHECK(read_trajectory_cache(path) == ct);
  CHECK_THROWS_AS(read_trajectory_cache(path, "other"), CacheMismatch);

  // header line, then 3 records of u8 + u32 + 5 x (f32, f32)
  const auto bytes = binio::read_all(path);
  const auto nl = bytes.find('\n');
  CHECK(bytes.size() - nl - 1 == 3 * (1 + 4 + 5 * 8));
}
