#include "tsh/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"

namespace tsh {

void FlowParams::validate() const {
  if (pyramid_levels < 0) throw ValidationError("flow: pyramid_levels must be >= 0");
  if (!(pyramid_scale > 0 && pyramid_scale < 1)) throw ValidationError("flow: pyramid_scale must be in (0,1)");
  if (window_size < 3 || window_size % 2 == 0) throw ValidationError("flow: window_size must be odd and >= 3");
  if (poly_n < 3 || poly_n % 2 == 0) throw ValidationError("flow: poly_n must be odd and >= 3");
  if (iterations < 1) throw ValidationError("flow: iterations must be >= 1");
  if (!(poly_sigma > 0)) throw ValidationError("flow: poly_sigma must be > 0");
}

nlohmann::json FlowParams::to_json() const {
  return {{"pyramid_levels", pyramid_levels}, {"pyramid_scale", pyramid_scale},
          {"window_size", window_size},       {"iterations", iterations},
          {"poly_n", poly_n},                 {"poly_sigma", poly_sigma}};
}

FlowParams FlowParams::from_json(const nlohmann::json& j) {
  FlowParams p;
  p.pyramid_levels = j.value("pyramid_levels", p.pyramid_levels);
  p.pyramid_scale = j.value("pyramid_scale", p.pyramid_scale);
  p.window_size = j.value("window_size", p.window_size);
  p.iterations = j.value("iterations", p.iterations);
  p.poly_n = j.value("poly_n", p.poly_n);
  p.poly_sigma = j.value("poly_sigma", p.poly_sigma);
  return p;
}

std::array<float, 2> FlowField::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(x), width - 1);
  const int y0 = std::min(static_cast<int>(y), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
  const auto i00 = index(x0, y0), i10 = index(x1, y0), i01 = index(x0, y1), i11 = index(x1, y1);
  return {static_cast<float>(w00 * u[i00] + w10 * u[i10] + w01 * u[i01] + w11 * u[i11]),
          static_cast<float>(w00 * v[i00] + w10 * v[i10] + w01 * v[i01] + w11 * v[i11])};
}

// ---------------------------------------------------------------------------
// Polynomial expansion

namespace {

using Mat6 = std::array<std::array<double, 6>, 6>;

Mat6 invert6(Mat6 a) {
  Mat6 inv{};
  for (int i = 0; i < 6; ++i) inv[i][i] = 1;
  for (int c = 0; c < 6; ++c) {
    int pivot = c;
    for (int r = c + 1; r < 6; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    }
    std::swap(a[c], a[pivot]);
    std::swap(inv[c], inv[pivot]);
    const double d = a[c][c];
    for (int k = 0; k < 6; ++k) {
      a[c][k] /= d;
      inv[c][k] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == c) continue;
      const double f = a[r][c];
      if (f == 0) continue;
      for (int k = 0; k < 6; ++k) {
        a[r][k] -= f * a[c][k];
        inv[r][k] -= f * inv[c][k];
      }
    }
  }
  return inv;
}

bool is_constant(const Plane& p) {
  return std::all_of(p.data.begin(), p.data.end(), [&](float v) { return v == p.data.front(); });
}

}  // namespace

FlowPyramid::Level polynomial_expansion(const Plane& image, int poly_n, double poly_sigma) {
  const int n = poly_n / 2;
  const int w = image.width;
  const int h = image.height;

  std::vector<double> g(2 * n + 1);
  double gsum = 0;
  for (int k = -n; k <= n; ++k) {
    g[k + n] = std::exp(-k * k / (2 * poly_sigma * poly_sigma));
    gsum += g[k + n];
  }
  for (auto& v : g) v /= gsum;

  // Weighted Gram matrix of the basis {1, x, y, x^2, y^2, xy}.
  Mat6 gram{};
  for (int dy = -n; dy <= n; ++dy) {
    for (int dx = -n; dx <= n; ++dx) {
      const double wgt = g[dx + n] * g[dy + n];
      const double basis[6] = {1.0, double(dx), double(dy), double(dx * dx), double(dy * dy), double(dx * dy)};
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) gram[i][j] += wgt * basis[i] * basis[j];
    }
  }
  const Mat6 ginv = invert6(gram);

  // Only these entries of the inverse Gram matrix are nonzero for the
  // symmetric window.
  const double i11 = ginv[1][1], i22 = ginv[2][2], i55 = ginv[5][5];
  const double i30 = ginv[3][0], i33 = ginv[3][3], i34 = ginv[3][4];
  const double i40 = ginv[4][0], i43 = ginv[4][3], i44 = ginv[4][4];

  // Vertical moments V_j(x, y) = sum_dy g(dy) dy^j f(x, y + dy), j = 0..2,
  // stored with n columns of replicated padding on each side.
  const int pw = w + 2 * n;
  std::vector<float> v0(static_cast<std::size_t>(pw) * h), v1(v0.size()), v2(v0.size());
  std::vector<const float*> rows(2 * n + 1);
  for (int y = 0; y < h; ++y) {
    for (int k = -n; k <= n; ++k) rows[k + n] = &image.data[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w];
    float* o0 = &v0[static_cast<std::size_t>(y) * pw + n];
    float* o1 = &v1[static_cast<std::size_t>(y) * pw + n];
    float* o2 = &v2[static_cast<std::size_t>(y) * pw + n];
    for (int x = 0; x < w; ++x) {
      const float c = rows[n][x];
      o0[x] = static_cast<float>(g[n]) * c;
      o1[x] = 0.f;
      o2[x] = 0.f;
    }
    for (int k = 1; k <= n; ++k) {
      const float gk = static_cast<float>(g[n + k]);
      const float* up = rows[n - k];
      const float* dn = rows[n + k];
      const float kk = static_cast<float>(k);
      for (int x = 0; x < w; ++x) {
        const float sum = dn[x] + up[x];
        const float dif = dn[x] - up[x];
        o0[x] += gk * sum;
        o1[x] += gk * kk * dif;
        o2[x] += gk * kk * kk * sum;
      }
    }
    for (int k = 1; k <= n; ++k) {
      o0[-k] = o0[0];
      o1[-k] = o1[0];
      o2[-k] = o2[0];
      o0[w - 1 + k] = o0[w - 1];
      o1[w - 1 + k] = o1[w - 1];
      o2[w - 1 + k] = o2[w - 1];
    }
  }

  FlowPyramid::Level level;
  level.width = w;
  level.height = h;
  level.coeffs.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const float* r0 = &v0[static_cast<std::size_t>(y) * pw + n];
    const float* r1 = &v1[static_cast<std::size_t>(y) * pw + n];
    const float* r2 = &v2[static_cast<std::size_t>(y) * pw + n];
    for (int x = 0; x < w; ++x) {
      // moments against {1, x, y, x^2, y^2, xy}
      double m0 = g[n] * r0[x], m1 = 0, m2 = g[n] * r1[x], m3 = 0, m4 = g[n] * r2[x], m5 = 0;
      for (int k = 1; k <= n; ++k) {
        const double gk = g[n + k];
        const double s0 = r0[x + k] + r0[x - k];
        const double d0 = r0[x + k] - r0[x - k];
        m0 += gk * s0;
        m1 += gk * k * d0;
        m3 += gk * k * k * s0;
        m2 += gk * (r1[x + k] + r1[x - k]);
        m5 += gk * k * (r1[x + k] - r1[x - k]);
        m4 += gk * (r2[x + k] + r2[x - k]);
      }
      auto& c = level.coeffs[static_cast<std::size_t>(y) * w + x];
      c[0] = static_cast<float>(i11 * m1);
      c[1] = static_cast<float>(i22 * m2);
      c[2] = static_cast<float>(i30 * m0 + i33 * m3 + i34 * m4);
      c[3] = static_cast<float>(i40 * m0 + i43 * m3 + i44 * m4);
      c[4] = static_cast<float>(i55 * m5);
    }
  }
  return level;
}

FlowPyramid::FlowPyramid(const Plane& image, const FlowParams& params) {
  params.validate();
  constant_ = is_constant(image);
  constexpr int kMinLevelSize = 16;
  // Each level is blurred from the previous one, so the Gaussian stays small.
  const double step_sigma = (1.0 / params.pyramid_scale - 1.0) * 0.5;
  Plane current = image;
  double scale = 1.0;
  for (int k = 0; k <= params.pyramid_levels; ++k) {
    if (k > 0) {
      scale *= params.pyramid_scale;
      const int w = static_cast<int>(std::lround(image.width * scale));
      const int h = static_cast<int>(std::lround(image.height * scale));
      if (w < kMinLevelSize || h < kMinLevelSize) break;
      current = resize_bilinear(gaussian_blur(current, step_sigma), w, h);
    }
    levels_.push_back(polynomial_expansion(current, params.poly_n, params.poly_sigma));
  }
}

// ---------------------------------------------------------------------------
// Displacement estimation

namespace {

// Planar g11, g12, g22, h1, h2 per pixel.
struct Moments {
  std::array<std::vector<float>, 5> c;
  explicit Moments(std::size_t n) {
    for (auto& v : c) v.assign(n, 0.f);
  }
};

std::vector<float> border_weights(int n) {
  static constexpr float kBorder[5] = {0.14f, 0.14f, 0.4472f, 0.4472f, 0.4472f};
  std::vector<float> w(n, 1.f);
  for (int i = 0; i < n; ++i) {
    if (i < 5) w[i] *= kBorder[i];
    if (n - 1 - i < 5) w[i] *= kBorder[n - 1 - i];
  }
  return w;
}

void update_moments(const FlowPyramid::Level& r1, const FlowPyramid::Level& r2, const FlowField& flow,
                    Moments& out) {
  const int w = r1.width;
  const int h = r1.height;
  const auto wx = border_weights(w);
  const auto wy = border_weights(h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = flow.index(x, y);
      const float dx = flow.u[i];
      const float dy = flow.v[i];
      const float fx = x + dx;
      const float fy = y + dy;
      if (!(fx >= 0 && fy >= 0 && fx < w - 1 && fy < h - 1)) {
        for (auto& c : out.c) c[i] = 0.f;
        continue;
      }
      const auto& c1 = r1.coeffs[i];
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const float ax = fx - x0;
      const float ay = fy - y0;
      const float w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
      const auto& p00 = r2.coeffs[static_cast<std::size_t>(y0) * w + x0];
      const auto& p10 = r2.coeffs[static_cast<std::size_t>(y0) * w + x0 + 1];
      const auto& p01 = r2.coeffs[static_cast<std::size_t>(y0 + 1) * w + x0];
      const auto& p11 = r2.coeffs[static_cast<std::size_t>(y0 + 1) * w + x0 + 1];
      float c2[5];
      for (int k = 0; k < 5; ++k) c2[k] = w00 * p00[k] + w10 * p10[k] + w01 * p01[k] + w11 * p11[k];
      const float a11 = 0.5f * (c1[2] + c2[2]);
      const float a22 = 0.5f * (c1[3] + c2[3]);
      const float a12 = 0.25f * (c1[4] + c2[4]);
      const float db1 = -0.5f * (c2[0] - c1[0]) + a11 * dx + a12 * dy;
      const float db2 = -0.5f * (c2[1] - c1[1]) + a12 * dx + a22 * dy;
      const float wgt = wy[y] * wx[x];
      const float s = wgt * wgt;
      out.c[0][i] = s * (a11 * a11 + a12 * a12);
      out.c[1][i] = s * a12 * (a11 + a22);
      out.c[2][i] = s * (a22 * a22 + a12 * a12);
      out.c[3][i] = s * (a11 * db1 + a12 * db2);
      out.c[4][i] = s * (a12 * db1 + a22 * db2);
    }
  }
}

// Box filter of size `window` with clamped borders, via running sums.
void box_blur(std::vector<float>& plane, int w, int h, int window, std::vector<double>& acc) {
  const int r = window / 2;
  const double norm = 1.0 / (static_cast<double>(window) * window);
  std::vector<float> tmp(plane.size());
  // vertical: running sum per column, all columns at once
  acc.assign(w, 0.0);
  for (int k = -r; k <= r; ++k) {
    const float* row = &plane[static_cast<std::size_t>(std::clamp(k, 0, h - 1)) * w];
    for (int x = 0; x < w; ++x) acc[x] += row[x];
  }
  for (int y = 0; y < h; ++y) {
    float* out = &tmp[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) out[x] = static_cast<float>(acc[x]);
    const float* add = &plane[static_cast<std::size_t>(std::min(y + r + 1, h - 1)) * w];
    const float* sub = &plane[static_cast<std::size_t>(std::max(y - r, 0)) * w];
    for (int x = 0; x < w; ++x) acc[x] += add[x] - sub[x];
  }
  // horizontal, over a row padded with replicated borders
  std::vector<float> padded(static_cast<std::size_t>(w) + 2 * r + 1);
  for (int y = 0; y < h; ++y) {
    const float* in = &tmp[static_cast<std::size_t>(y) * w];
    std::fill(padded.begin(), padded.begin() + r, in[0]);
    std::copy(in, in + w, padded.begin() + r);
    std::fill(padded.begin() + r + w, padded.end(), in[w - 1]);
    float* out = &plane[static_cast<std::size_t>(y) * w];
    double a = 0;
    for (int k = 0; k < window; ++k) a += padded[k];
    for (int x = 0; x < w; ++x) {
      out[x] = static_cast<float>(a * norm);
      a += padded[x + window] - padded[x];
    }
  }
}

void solve_flow(const Moments& m, FlowField& flow) {
  const std::size_t n = flow.u.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double g11 = m.c[0][i], g12 = m.c[1][i], g22 = m.c[2][i], h1 = m.c[3][i], h2 = m.c[4][i];
    const double idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3);
    flow.u[i] = static_cast<float>((g22 * h1 - g12 * h2) * idet);
    flow.v[i] = static_cast<float>((g11 * h2 - g12 * h1) * idet);
  }
}

FlowField upsample_flow(const FlowField& coarse, int w, int h) {
  FlowField fine(w, h);
  const double sx = static_cast<double>(w) / coarse.width;
  const double sy = static_cast<double>(h) / coarse.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto d = coarse.sample(rescale_coord(x, w, coarse.width), rescale_coord(y, h, coarse.height));
      fine.u[fine.index(x, y)] = static_cast<float>(d[0] * sx);
      fine.v[fine.index(x, y)] = static_cast<float>(d[1] * sy);
    }
  }
  return fine;
}

}  // namespace

FlowResult compute_flow(const FlowPyramid& prev, const FlowPyramid& next, const FlowParams& params) {
  params.validate();
  if (prev.width() != next.width() || prev.height() != next.height()) {
    throw DimensionMismatch("compute_flow: frames differ in size");
  }
  FlowResult result;
  if (prev.constant() || next.constant()) {
    result.field = FlowField(prev.width(), prev.height());
    result.degenerate = true;
    return result;
  }
  const std::size_t nlev = std::min(prev.levels().size(), next.levels().size());
  FlowField flow;
  for (std::size_t k = nlev; k-- > 0;) {
    const auto& r1 = prev.levels()[k];
    const auto& r2 = next.levels()[k];
    flow = flow.width == 0 ? FlowField(r1.width, r1.height) : upsample_flow(flow, r1.width, r1.height);
    Moments moments(flow.u.size());
    std::vector<double> scratch;
    for (int it = 0; it < params.iterations; ++it) {
      update_moments(r1, r2, flow, moments);
      for (auto& plane : moments.c) box_blur(plane, r1.width, r1.height, params.window_size, scratch);
      solve_flow(moments, flow);
    }
  }
  result.field = std::move(flow);
  return result;
}

FlowResult compute_flow(const Plane& prev, const Plane& next, const FlowParams& params) {
  if (prev.width != next.width || prev.height != next.height) {
    throw DimensionMismatch("compute_flow: frames differ in size");
  }
  return compute_flow(FlowPyramid(prev, params), FlowPyramid(next, params), params);
}

FlowResult compute_flow(const Frame& prev, const Frame& next, const FlowParams& params) {
  if (prev.width != next.width || prev.height != next.height) {
    throw DimensionMismatch("compute_flow: frames differ in size");
  }
  return compute_flow(to_plane(prev), to_plane(next), params);
}

FlowField median_filter_flow(const FlowField& field, int radius) {
  if (radius < 1) throw ValidationError("median_filter_flow: radius must be >= 1");
  FlowField out(field.width, field.height);
  const int side = 2 * radius + 1;
  std::vector<float> bu(static_cast<std::size_t>(side) * side);
  std::vector<float> bv(bu.size());
  const auto mid = bu.size() / 2;
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      std::size_t n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = std::clamp(y + dy, 0, field.height - 1);
        for (int dx = -radius; dx <= radius; ++dx) {
          const auto j = field.index(std::clamp(x + dx, 0, field.width - 1), yy);
          bu[n] = field.u[j];
          bv[n] = field.v[j];
          ++n;
        }
      }
      std::nth_element(bu.begin(), bu.begin() + mid, bu.end());
      std::nth_element(bv.begin(), bv.begin() + mid, bv.end());
      out.u[out.index(x, y)] = bu[mid];
      out.v[out.index(x, y)] = bv[mid];
    }
  }
  return out;
}

static constexpr char kFlowMagic[8] = {'T', 'S', 'H', 'F', 'L', 'O', 'W', '1'};

void write_flow_cache(const std::filesystem::path& path, const FlowField& field) {
  auto os = binio::open_out(path);
  os.write(kFlowMagic, sizeof kFlowMagic);
  binio::write_u32(os, static_cast<std::uint32_t>(field.width));
  binio::write_u32(os, static_cast<std::uint32_t>(field.height));
  binio::write_f32s(os, field.u);
  binio::write_f32s(os, field.v);
  if (!os) throw IoError("write failed: " + path.string());
}

FlowField read_flow_cache(const std::filesystem::path& path) {
  auto is = binio::open_in(path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kFlowMagic, sizeof magic) != 0) {
    throw IoError("not a flow cache file: " + path.string());
  }
  FlowField f;
  f.width = static_cast<int>(binio::read_u32(is));
  f.height = static_cast<int>(binio::read_u32(is));
  const auto n = static_cast<std::size_t>(f.width) * f.height;
  f.u = binio::read_f32s(is, n);
  f.v = binio::read_f32s(is, n);
  return f;
}

}  // namespace tsh
