#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "tsh/error.hpp"
#include "tsh/flow.hpp"
#include "tsh/media.hpp"

using namespace tsh;

namespace {

constexpr int kW = 96, kH = 64, kBorder = 12;

Frame texture(std::uint64_t seed, double dx = 0, double dy = 0) {
  PeriodicNoise noise(seed, kW, kH, 8);
  return texture_frame(noise, kW, kH, dx, dy);
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

template <typename Fn>
std::vector<double> interior(const FlowField& f, Fn fn) {
  std::vector<double> out;
  for (int y = kBorder; y < f.height - kBorder; ++y) {
    for (int x = kBorder; x < f.width - kBorder; ++x) out.push_back(fn(f, f.index(x, y)));
  }
  return out;
}

}  // namespace

TEST_CASE("identical textured frames give zero flow") {
  const auto f = texture(1);
  const auto r = compute_flow(f, f);
  CHECK_FALSE(r.degenerate);
  float worst = 0;
  for (std::size_t i = 0; i < r.field.u.size(); ++i) {
    worst = std::max({worst, std::abs(r.field.u[i]), std::abs(r.field.v[i])});
  }
  CHECK(worst < 1e-3f);
}

TEST_CASE("circular shift by (3, 0) is recovered") {
  const auto a = texture(2);
  const auto b = shift_circular(a, 3, 0);
  const auto r = median_filter_flow(compute_flow(a, b).field);
  const double mu = median(interior(r, [](const FlowField& f, std::size_t i) { return double(f.u[i]); }));
  const double mv = median(interior(r, [](const FlowField& f, std::size_t i) { return double(f.v[i]); }));
  CHECK(mu >= 2.75);
  CHECK(mu <= 3.25);
  CHECK(mv >= -0.25);
  CHECK(mv <= 0.25);
}

TEST_CASE("constant frames give an all-zero degenerate field") {
  const Frame a(kW, kH, 90), b(kW, kH, 140);
  const auto r = compute_flow(a, b);
  CHECK(r.degenerate);
  CHECK(std::all_of(r.field.u.begin(), r.field.u.end(), [](float x) { return x == 0.f; }));
  CHECK(std::all_of(r.field.v.begin(), r.field.v.end(), [](float x) { return x == 0.f; }));
}

TEST_CASE("frames of different size are rejected") {
  CHECK_THROWS_AS(compute_flow(Frame(32, 32, 1), Frame(32, 30, 1)), DimensionMismatch);
}

TEST_CASE("flow parameters are validated") {
  FlowParams p;
  p.window_size = 4;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.poly_n = 1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.pyramid_scale = 1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  CHECK(FlowParams::from_json(FlowParams{}.to_json()).to_json() == FlowParams{}.to_json());
}

TEST_CASE("integer shifts up to 4 px on periodic texture") {
  for (int s = 1; s <= 4; ++s) {
    const auto a = texture(10 + s);
    const auto b = shift_circular(a, s, -s / 2);
    const auto r = median_filter_flow(compute_flow(a, b).field);
    const double epe = median(interior(r, [&](const FlowField& f, std::size_t i) {
      return std::hypot(f.u[i] - s, f.v[i] + s / 2);
    }));
    CAPTURE(s);
    CHECK(epe <= 0.3);
  }
}

TEST_CASE("translation equivariance on periodic texture") {
  const auto a = texture(21);
  const auto b = texture(21, 1.5, 0.75);
  const auto base = compute_flow(a, b).field;
  const int dx = 8, dy = 8;
  const auto moved = compute_flow(shift_circular(a, dx, dy), shift_circular(b, dx, dy)).field;
  double worst = 0;
  for (int y = kBorder + dy; y < kH - kBorder; ++y) {
    for (int x = kBorder + dx; x < kW - kBorder; ++x) {
      const auto i = moved.index(x, y), j = base.index(x - dx, y - dy);
      worst = std::max({worst, double(std::abs(moved.u[i] - base.u[j])), double(std::abs(moved.v[i] - base.v[j]))});
    }
  }
  CHECK(worst <= 0.1);
}

TEST_CASE("forward and backward flow are close to opposite") {
  const auto a = texture(31);
  const auto b = texture(31, 1.2, -0.6);
  const auto fwd = compute_flow(a, b).field, bwd = compute_flow(b, a).field;
  std::vector<double> err;
  for (int y = kBorder; y < kH - kBorder; ++y) {
    for (int x = kBorder; x < kW - kBorder; ++x) {
      const auto i = fwd.index(x, y);
      err.push_back(std::hypot(fwd.u[i] + bwd.u[i], fwd.v[i] + bwd.v[i]));
    }
  }
  CHECK(median(err) <= 0.5);
}

TEST_CASE("median filter: constant field is unchanged") {
  FlowField f(9, 7);
  std::fill(f.u.begin(), f.u.end(), 1.5f);
  std::fill(f.v.begin(), f.v.end(), -2.f);
  CHECK(median_filter_flow(f, 1) == f);
  CHECK(median_filter_flow(median_filter_flow(f, 2), 2) == f);
}

TEST_CASE("median filter removes a single outlier") {
  FlowField f(5, 5);
  std::fill(f.u.begin(), f.u.end(), 1.f);
  f.u[f.index(2, 2)] = 10.f;
  f.v[f.index(2, 2)] = 10.f;
  const auto g = median_filter_flow(f, 1);
  CHECK(g.u[g.index(2, 2)] == 1.f);
  CHECK(g.v[g.index(2, 2)] == 0.f);
}

TEST_CASE("median filter on a 1x1 field is the identity") {
  FlowField f(1, 1);
  f.u[0] = 3.f;
  f.v[0] = -4.f;
  CHECK(median_filter_flow(f, 1) == f);
}

TEST_CASE("median filter output stays inside the input range") {
  FlowField f(13, 11);
  std::uint64_t s = 5;
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    s = s * 6364136223846793005ULL + 1;
    f.u[i] = static_cast<float>((s >> 40) % 1000) / 100.f - 5.f;
    f.v[i] = static_cast<float>((s >> 20) % 1000) / 50.f;
  }
  const auto g = median_filter_flow(f, 2);
  const auto [ulo, uhi] = std::minmax_element(f.u.begin(), f.u.end());
  const auto [vlo, vhi] = std::minmax_element(f.v.begin(), f.v.end());
  for (std::size_t i = 0; i < g.u.size(); ++i) {
    CHECK(g.u[i] >= *ulo);
    CHECK(g.u[i] <= *uhi);
    CHECK(g.v[i] >= *vlo);
    CHECK(g.v[i] <= *vhi);
  }
}

TEST_CASE("bilinear flow sampling") {
  FlowField f(2, 2);
  f.u = {0, 2, 4, 6};
  f.v = {1, 1, 1, 1};
  const auto s = f.sample(0.5, 0.5);
  CHECK(s[0] == doctest::Approx(3.0));
  CHECK(s[1] == doctest::Approx(1.0));
  CHECK(f.sample(-3, -3)[0] == doctest::Approx(0.0));
}

TEST_CASE("flow cache round trip") {
  tsh::testing::TempDir dir("flow_cache");
  const auto r = compute_flow(texture(3), texture(3, 1, 0)).field;
  write_flow_cache(dir / "f.bin", r);
  CHECK(std::filesystem::file_size(dir / "f.bin") == 16 + 8 * r.u.size());
  CHECK(read_flow_cache(dir / "f.bin") == r);
}
