#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/error.hpp"

using namespace tsh;

namespace {

Trajectory make(std::vector<std::pair<float, float>> pts, int start = 0) {
  Trajectory t;
  t.start_frame = start;
  for (auto [x, y] : pts) t.points.push_back({x, y});
  return t;
}

// Random D=5 trajectory ending at `end`, centered somewhere in a W x H frame.
Trajectory random_traj(std::mt19937_64& g, int end, double W, double H) {
  std::uniform_real_distribution<double> cx(0, W), cy(0, H), step(-4, 4);
  Trajectory t;
  t.start_frame = end - 4;
  double x = cx(g), y = cy(g);
  for (int k = 0; k < 5; ++k) {
    t.points.push_back({static_cast<float>(x), static_cast<float>(y)});
    x += step(g);
    y += step(g);
  }
  return t;
}

double total(const SnippetHistogram& h) { return std::accumulate(h.values.begin(), h.values.end(), 0.0); }

}  // namespace

TEST_CASE("features of a horizontal line") {
  const auto f = trajectory_features(make({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}}));
  CHECK(f.m_x == 2);
  CHECK(f.v_x == 2);
  CHECK(f.m_y == 0);
  CHECK(f.v_y == 0);
  CHECK(f.l == 4);
}

TEST_CASE("features of five identical points") {
  const auto f = trajectory_features(make({{7, 7}, {7, 7}, {7, 7}, {7, 7}, {7, 7}}));
  CHECK(f.v_x == 0);
  CHECK(f.v_y == 0);
  CHECK(f.l == 0);
  CHECK(f.m_x == 7);
}

TEST_CASE("features of a vertical line mirror the horizontal one") {
  const auto f = trajectory_features(make({{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}}));
  CHECK(f.v_y == 2);
  CHECK(f.v_x == 0);
  CHECK(f.l == 4);
}

TEST_CASE("doubling point spacing doubles l and quadruples variances") {
  std::mt19937_64 g(4);
  for (int i = 0; i < 50; ++i) {
    auto t = random_traj(g, 10, 100, 100);
    auto t2 = t;
    for (auto& p : t2.points) {
      p.x *= 2;
      p.y *= 2;
    }
    const auto a = trajectory_features(t), b = trajectory_features(t2);
    CHECK(b.l == doctest::Approx(2 * a.l).epsilon(1e-6));
    CHECK(b.v_x == doctest::Approx(4 * a.v_x).epsilon(1e-6));
    CHECK(b.v_y == doctest::Approx(4 * a.v_y).epsilon(1e-6));
  }
}

TEST_CASE("snippet length in frames rounds half up") {
  CHECK(snippet_frames(1.0, 30) == 30);
  CHECK(snippet_frames(0.5, 25) == 13);
  CHECK(snippet_frames(2.0, 30) == 60);
  CHECK(snippet_frames(0.01, 30) == 2);
}

TEST_CASE("histogram dimension is 8 * 3 * N^2") {
  for (int N : {1, 2, 3, 4}) {
    DescriptorParams p;
    p.N = N;
    const auto h = snippet_histogram(std::vector<Trajectory>{}, 15, 160, 120, 30, p);
    CHECK(h.values.size() == static_cast<std::size_t>(8 * 3 * N * N));
    CHECK(total(h) == 0);
  }
  CHECK(DescriptorParams{}.dim() == 96);
}

TEST_CASE("one trajectory in cell [1,1] puts one count in each block of that cell") {
  DescriptorParams p;
  const auto t = make({{10, 10}, {11, 10}, {12, 10}, {13, 10}, {14, 10}}, 10);
  const auto h = snippet_histogram(std::vector<Trajectory>{t}, 15, 160, 120, 30, p);
  CHECK(total(h) == 3);
  const int cell_block = 4 * 8;
  for (int block = 0; block < 3; ++block) {
    double in_cell = 0;
    for (int b = 0; b < 8; ++b) in_cell += h.values[block * cell_block + b];
    CHECK(in_cell == 1);
  }
  // l = 4 px over a 200 px diagonal -> 0.02, inside [1e-2, 2.5e-2): bin 6
  CHECK(h.values[6] == 1);
}

TEST_CASE("bin_index: edges belong to the upper bin") {
  const auto e = DescriptorParams::default_edges();
  CHECK(bin_index(0, e) == 0);
  CHECK(bin_index(1e-4, e) == 1);
  CHECK(bin_index(2e-4, e) == 1);
  CHECK(bin_index(2.5e-2, e) == 7);
  CHECK(bin_index(10, e) == 7);
}

TEST_CASE("grid cells: interior boundary goes up, far edge clamps, outside is -1") {
  CHECK(grid_cell(0, 0, 100, 80, 2) == 0);
  CHECK(grid_cell(49.9, 10, 100, 80, 2) == 0);
  CHECK(grid_cell(50, 10, 100, 80, 2) == 1);
  CHECK(grid_cell(10, 40, 100, 80, 2) == 2);
  CHECK(grid_cell(100, 80, 100, 80, 2) == 3);
  CHECK(grid_cell(-0.1, 5, 100, 80, 2) == -1);
  CHECK(grid_cell(5, 80.5, 100, 80, 2) == -1);
}

TEST_CASE("mass equals 3 x trajectories ending in the window with in-frame centers") {
  std::mt19937_64 g(11);
  DescriptorParams p;
  const int W = 160, H = 120, S = 30;
  std::vector<Trajectory> trajs;
  std::uniform_int_distribution<int> end(4, 89);
  for (int i = 0; i < 600; ++i) trajs.push_back(random_traj(g, end(g), W + 20, H + 20));
  for (int s = 15; s < 75; s += 7) {
    int count = 0;
    for (const auto& t : trajs) {
      const auto f = trajectory_features(t);
      const bool in_window = std::abs(t.end_frame() - s) <= S / 2;
      const bool in_frame = f.m_x >= 0 && f.m_x <= W && f.m_y >= 0 && f.m_y <= H;
      count += in_window && in_frame;
    }
    CHECK(total(snippet_histogram(trajs, s, W, H, S, p)) == 3 * count);
  }
}

TEST_CASE("shuffling the trajectory list leaves the histogram unchanged") {
  std::mt19937_64 g(12);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 200; ++i) trajs.push_back(random_traj(g, 20 + i % 20, 160, 120));
  const auto a = snippet_histogram(trajs, 30, 160, 120, 30, DescriptorParams{});
  std::shuffle(trajs.begin(), trajs.end(), g);
  CHECK(snippet_histogram(trajs, 30, 160, 120, 30, DescriptorParams{}) == a);
}

TEST_CASE("moving one center between cells moves exactly 3 counts") {
  DescriptorParams p;
  auto t = make({{10, 10}, {12, 10}, {14, 11}, {16, 11}, {18, 12}}, 26);
  const auto a = snippet_histogram(std::vector<Trajectory>{t}, 30, 160, 120, 30, p);
  for (auto& q : t.points) q.x += 100;  // cell [1,1] -> [1,2]
  const auto b = snippet_histogram(std::vector<Trajectory>{t}, 30, 160, 120, 30, p);
  double moved = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) moved += std::abs(a.values[i] - b.values[i]);
  CHECK(moved == 6);  // 3 counts left cell [1,1], 3 arrived in [1,2]
  for (int block = 0; block < 3; ++block) {
    double c0 = 0, c1 = 0;
    for (int k = 0; k < 8; ++k) {
      c0 += b.values[block * 32 + k];
      c1 += b.values[block * 32 + 8 + k];
    }
    CHECK(c0 == 0);
    CHECK(c1 == 1);
  }
}

TEST_CASE("trajectories ending outside the window never contribute") {
  DescriptorParams p;
  const int S = 30, s = 40;
  std::vector<Trajectory> trajs;
  for (int end : {s - S / 2 - 1, s + S / 2 + 1, 0, 89}) {
    trajs.push_back(make({{20, 20}, {21, 20}, {22, 20}, {23, 20}, {24, 20}}, end - 4));
  }
  CHECK(total(snippet_histogram(trajs, s, 160, 120, S, p)) == 0);
  trajs.push_back(make({{20, 20}, {21, 20}, {22, 20}, {23, 20}, {24, 20}}, s + S / 2 - 4));
  trajs.push_back(make({{20, 20}, {21, 20}, {22, 20}, {23, 20}, {24, 20}}, s - S / 2 - 4));
  CHECK(total(snippet_histogram(trajs, s, 160, 120, S, p)) == 6);
}

TEST_CASE("sliding window centers") {
  const auto c = snippet_centers(60, 30, 1);
  CHECK(c.size() == 30);
  CHECK(c.front() == 15);
  CHECK(c.back() == 44);
  CHECK(snippet_centers(10, 30, 1).empty());
  // stride = S gives floor((V - S) / S) + 1 non-overlapping snippets
  for (int V : {61, 100, 130}) {
    CAPTURE(V);
    CHECK(snippet_centers(V, 30, 30).size() == static_cast<std::size_t>((V - 30) / 30 + 1));
  }
  const auto odd = snippet_centers(40, 13, 1);
  CHECK(odd.front() == 7);
  CHECK(odd.back() == 40 - 7 - 1);
}

TEST_CASE("sliding_snippets on a short clip is empty") {
  ClipTrajectories ct;
  ct.clip_id = "short";
  ct.width = 64;
  ct.height = 48;
  ct.frames = 10;
  ct.fps = 30;
  CHECK(sliding_snippets(ct, DescriptorParams{}).empty());
}

TEST_CASE("sliding_snippets agrees with direct histograms") {
  std::mt19937_64 g(13);
  ClipTrajectories ct;
  ct.clip_id = "c";
  ct.width = 160;
  ct.height = 120;
  ct.frames = 60;
  ct.fps = 30;
  for (int i = 0; i < 300; ++i) ct.trajectories.push_back(random_traj(g, 4 + i % 56, 160, 120));
  std::sort(ct.trajectories.begin(), ct.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.end_frame() < b.end_frame(); });
  DescriptorParams p;
  const auto sn = sliding_snippets(ct, p);
  REQUIRE(sn.size() == 30);
  for (const auto& h : sn) {
    auto direct = snippet_histogram(ct.trajectories, h.center_frame, 160, 120, 30, p);
    CHECK(direct.values == h.values);
    CHECK(h.clip_id == "c");
  }
}

TEST_CASE("descriptor params validation and fingerprint") {
  DescriptorParams p;
  CHECK_NOTHROW(p.validate());
  p.N = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.snippet_seconds = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.bin_edges_l = {1, 2, 3, 3, 4, 5, 6};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.bin_edges_v = {1, 2, 3};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.bin_edges_v = {-1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(p.validate(), ValidationError);

  DescriptorParams q;
  q.bin_edges_l[0] = 2e-4;
  CHECK(q.fingerprint() != DescriptorParams{}.fingerprint());
  CHECK(DescriptorParams::from_json(q.to_json()).fingerprint() == q.fingerprint());
}

TEST_CASE("descriptor cache round trip") {
  tsh::testing::TempDir dir("desc_cache");
  ClipDescriptors cd;
  cd.clip_id = "c";
  cd.fingerprint = DescriptorParams{}.fingerprint();
  cd.snippet_len = 30;
  for (int s = 15; s < 20; ++s) {
    SnippetHistogram h;
    h.clip_id = "c";
    h.center_frame = s;
    h.values.assign(96, 0.f);
    h.values[s] = 3.f;
    cd.snippets.push_back(h);
  }
  write_descriptor_cache(dir / "c.bin", cd, DescriptorParams{}, "h1");
  const auto back = read_descriptor_cache(dir / "c.bin", "h1");
  CHECK(back.clip_id == "c");
  CHECK(back.snippet_len == 30);
  CHECK(back.fingerprint == cd.fingerprint);
  CHECK(back.snippets == cd.snippets);
  CHECK_THROWS_AS(read_descriptor_cache(dir / "c.bin", "h2"), CacheMismatch);
}
