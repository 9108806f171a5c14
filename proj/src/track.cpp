#include "tsh/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"

namespace tsh {

void TrackParams::validate() const {
  if (M < 1) throw ValidationError("track: M must be >= 1");
  if (D < 2) throw ValidationError("track: D must be >= 2");
  if (n_scales < 1) throw ValidationError("track: n_scales must be >= 1");
  if (!(scale_factor > 0 && scale_factor < 1)) throw ValidationError("track: scale_factor must be in (0,1)");
  if (!(structure_threshold >= 0)) throw ValidationError("track: structure_threshold must be >= 0");
  if (!(static_variance_min >= 0)) throw ValidationError("track: static_variance_min must be >= 0");
  if (!(max_step_fraction > 0)) throw ValidationError("track: max_step_fraction must be > 0");
  if (!(max_step_px > 0)) throw ValidationError("track: max_step_px must be > 0");
}

nlohmann::json TrackParams::to_json() const {
  return {{"M", M},
          {"D", D},
          {"n_scales", n_scales},
          {"scale_factor", scale_factor},
          {"structure_threshold", structure_threshold},
          {"static_variance_min", static_variance_min},
          {"max_step_fraction", max_step_fraction},
          {"max_step_px", max_step_px}};
}

TrackParams TrackParams::from_json(const nlohmann::json& j) {
  TrackParams p;
  p.M = j.value("M", p.M);
  p.D = j.value("D", p.D);
  p.n_scales = j.value("n_scales", p.n_scales);
  p.scale_factor = j.value("scale_factor", p.scale_factor);
  p.structure_threshold = j.value("structure_threshold", p.structure_threshold);
  p.static_variance_min = j.value("static_variance_min", p.static_variance_min);
  p.max_step_fraction = j.value("max_step_fraction", p.max_step_fraction);
  p.max_step_px = j.value("max_step_px", p.max_step_px);
  return p;
}

Plane min_eigen_map(const Plane& img) {
  const int w = img.width, h = img.height;
  Plane gxx(w, h), gxy(w, h), gyy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return img.clamped(x + dx, y + dy); };
      const float gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const float gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      gxx.at(x, y) = gx * gx;
      gxy.at(x, y) = gx * gy;
      gyy.at(x, y) = gy * gy;
    }
  }
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          a += gxx.clamped(x + dx, y + dy);
          b += gxy.clamped(x + dx, y + dy);
          c += gyy.clamped(x + dx, y + dy);
        }
      }
      const double half = 0.5 * (a - c);
      const double e = 0.5 * (a + c) - std::sqrt(half * half + b * b);
      out.at(x, y) = static_cast<float>(std::max(e, 0.0));
    }
  }
  return out;
}

namespace {

// Lattice coordinate of index i.
double lattice(int i, int M) { return M / 2 + static_cast<double>(i) * M; }
int lattice_count(int size, int M) { return size > M / 2 ? (size - 1 - M / 2) / M + 1 : 0; }

std::vector<Point2> sample_from_map(const Plane& eig, const TrackParams& params) {
  const float peak = *std::max_element(eig.data.begin(), eig.data.end());
  std::vector<Point2> pts;
  if (!(peak > 0)) return pts;
  const float thr = static_cast<float>(params.structure_threshold) * peak;
  const int nx = lattice_count(eig.width, params.M), ny = lattice_count(eig.height, params.M);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int x = static_cast<int>(lattice(i, params.M)), y = static_cast<int>(lattice(j, params.M));
      const float e = eig.at(x, y);
      if (e > 0 && e >= thr) pts.push_back({static_cast<float>(x), static_cast<float>(y)});
    }
  }
  return pts;
}

bool inside(double x, double y, int w, int h) { return x >= 0 && y >= 0 && x <= w - 1 && y <= h - 1; }

struct Moments2 {
  double vx, vy, l, max_step;
};

Moments2 motion_stats(const std::vector<Point2>& pts) {
  const double n = static_cast<double>(pts.size());
  double mx = 0, my = 0;
  for (const auto& p : pts) mx += p.x, my += p.y;
  mx /= n;
  my /= n;
  Moments2 m{0, 0, 0, 0};
  for (const auto& p : pts) {
    m.vx += (p.x - mx) * (p.x - mx);
    m.vy += (p.y - my) * (p.y - my);
  }
  m.vx /= n;
  m.vy /= n;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double s = std::hypot(double(pts[k].x) - pts[k - 1].x, double(pts[k].y) - pts[k - 1].y);
    m.l += s;
    m.max_step = std::max(m.max_step, s);
  }
  return m;
}

}  // namespace

std::vector<Point2> sample_points(const Plane& frame, const TrackParams& params) {
  params.validate();
  if (frame.width <= 0 || frame.height <= 0) throw ValidationError("sample_points: empty frame");
  return sample_from_map(min_eigen_map(frame), params);
}

std::vector<Point2> sample_points(const Frame& frame, const TrackParams& params) {
  return sample_points(to_plane(frame), params);
}

std::optional<std::vector<Point2>> track_point(Point2 start, const std::vector<const FlowField*>& flows,
                                               int D) {
  if (D < 2) throw ValidationError("track_point: D must be >= 2");
  if (static_cast<int>(flows.size()) < D - 1) throw ValidationError("track_point: need D-1 flow fields");
  const int w = flows.front()->width, h = flows.front()->height;
  if (!inside(start.x, start.y, w, h)) throw ValidationError("track_point: start point outside the frame");
  std::vector<Point2> pts{start};
  double x = start.x, y = start.y;
  for (int k = 0; k < D - 1; ++k) {
    const auto d = flows[k]->sample(x, y);
    x += d[0];
    y += d[1];
    if (!inside(x, y, w, h)) return std::nullopt;
    pts.push_back({static_cast<float>(x), static_cast<float>(y)});
  }
  return pts;
}

std::optional<std::vector<Point2>> track_point(Point2 start, const std::vector<FlowField>& flows, int D) {
  std::vector<const FlowField*> ptrs;
  for (const auto& f : flows) ptrs.push_back(&f);
  if (ptrs.empty()) throw ValidationError("track_point: need D-1 flow fields");
  return track_point(start, ptrs, D);
}

bool is_static(const Trajectory& t, const TrackParams& params) {
  const auto m = motion_stats(t.points);
  return m.vx + m.vy < params.static_variance_min;
}

bool is_erroneous(const Trajectory& t, const TrackParams& params) {
  const auto m = motion_stats(t.points);
  return m.max_step > std::max(params.max_step_fraction * m.l, params.max_step_px);
}

std::vector<Trajectory> prune(const std::vector<Trajectory>& trajs, const TrackParams& params) {
  std::vector<Trajectory> out;
  for (const auto& t : trajs) {
    if (t.points.size() < 2) continue;
    if (!is_static(t, params) && !is_erroneous(t, params)) out.push_back(t);
  }
  return out;
}

ClipTrajectories extract_trajectories(const VideoClip& clip, const TrackParams& params,
                                      const FlowParams& flow_params) {
  params.validate();
  flow_params.validate();
  ClipTrajectories ct;
  ct.clip_id = clip.id;
  ct.width = clip.width();
  ct.height = clip.height();
  ct.frames = clip.length();
  ct.fps = clip.fps;
  const int V = clip.length(), D = params.D;
  if (V < D) return ct;
  const int W = clip.width(), H = clip.height();

  for (int s = 0; s < params.n_scales; ++s) {
    const double f = std::pow(params.scale_factor, s);
    const int ws = static_cast<int>(std::lround(W * f)), hs = static_cast<int>(std::lround(H * f));
    if (ws < 16 || hs < 16) break;
    auto level = [&](int k) {
      Plane p = to_plane(clip.frames[k]);
      return s == 0 ? p : resize_bilinear(p, ws, hs);
    };

    struct Active {
      int start;
      std::vector<Point2> pts;  // scale coordinates
      double x, y;
    };
    std::vector<Active> active;
    const int nx = lattice_count(ws, params.M), ny = lattice_count(hs, params.M);
    std::vector<char> covered(static_cast<std::size_t>(nx) * ny);
    const double r = params.M / 2.0;

    Plane cur = level(0);
    std::optional<FlowPyramid> cur_pyr;
    for (int t = 0; t < V; ++t) {
      // Seed lattice positions not covered by an active track.
      if (t <= V - D) {
        std::fill(covered.begin(), covered.end(), 0);
        for (const auto& a : active) {
          const int i0 = std::max(0, static_cast<int>(std::ceil((a.x - r - params.M / 2) / params.M)));
          const int i1 = std::min(nx - 1, static_cast<int>(std::floor((a.x + r - params.M / 2) / params.M)));
          const int j0 = std::max(0, static_cast<int>(std::ceil((a.y - r - params.M / 2) / params.M)));
          const int j1 = std::min(ny - 1, static_cast<int>(std::floor((a.y + r - params.M / 2) / params.M)));
          for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
              const double dx = lattice(i, params.M) - a.x, dy = lattice(j, params.M) - a.y;
              if (dx * dx + dy * dy <= r * r) covered[static_cast<std::size_t>(j) * nx + i] = 1;
            }
          }
        }
        for (const auto& p : sample_from_map(min_eigen_map(cur), params)) {
          const int i = (static_cast<int>(p.x) - params.M / 2) / params.M;
          const int j = (static_cast<int>(p.y) - params.M / 2) / params.M;
          if (covered[static_cast<std::size_t>(j) * nx + i]) continue;
          active.push_back({t, {p}, p.x, p.y});
        }
      }
      if (t == V - 1 || active.empty()) {
        if (t < V - 1) {
          // Nothing to advance; skip flow but keep the frame pipeline moving.
          cur = level(t + 1);
          cur_pyr.reset();
        }
        continue;
      }

      Plane next = level(t + 1);
      if (!cur_pyr) cur_pyr.emplace(cur, flow_params);
      FlowPyramid next_pyr(next, flow_params);
      const FlowField flow = median_filter_flow(compute_flow(*cur_pyr, next_pyr, flow_params).field, 1);

      std::vector<Active> kept;
      kept.reserve(active.size());
      for (auto& a : active) {
        const auto d = flow.sample(a.x, a.y);
        a.x += d[0];
        a.y += d[1];
        if (!inside(a.x, a.y, ws, hs)) continue;
        a.pts.push_back({static_cast<float>(a.x), static_cast<float>(a.y)});
        if (static_cast<int>(a.pts.size()) < D) {
          kept.push_back(std::move(a));
          continue;
        }
        Trajectory tr;
        tr.clip_id = clip.id;
        tr.scale_index = s;
        tr.start_frame = a.start;
        tr.points.reserve(D);
        for (const auto& p : a.pts) {
          tr.points.push_back({static_cast<float>(rescale_coord(p.x, ws, W)),
                               static_cast<float>(rescale_coord(p.y, hs, H))});
        }
        if (!is_static(tr, params) && !is_erroneous(tr, params)) ct.trajectories.push_back(std::move(tr));
      }
      active = std::move(kept);
      cur = std::move(next);
      cur_pyr.emplace(std::move(next_pyr));
    }
  }
  std::stable_sort(ct.trajectories.begin(), ct.trajectories.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.end_frame() < b.end_frame();
  });
  return ct;
}

void write_trajectory_cache(const std::filesystem::path& path, const ClipTrajectories& ct,
                            const std::string& config_hash) {
  std::ostringstream os(std::ios::binary);
  const int D = ct.trajectories.empty() ? 0 : static_cast<int>(ct.trajectories.front().points.size());
  binio::write_json_line(os, {{"format", "tsh-trajectories"},
                              {"config_hash", config_hash},
                              {"clip_id", ct.clip_id},
                              {"width", ct.width},
                              {"height", ct.height},
                              {"frames", ct.frames},
                              {"fps", ct.fps},
                              {"D", D},
                              {"count", ct.trajectories.size()}});
  for (const auto& t : ct.trajectories) {
    if (static_cast<int>(t.points.size()) != D) throw ValidationError("trajectory cache: mixed D");
    binio::write_u8(os, static_cast<std::uint8_t>(t.scale_index));
    binio::write_u32(os, static_cast<std::uint32_t>(t.start_frame));
    for (const auto& p : t.points) {
      binio::write_f32(os, p.x);
      binio::write_f32(os, p.y);
    }
  }
  binio::atomic_write(path, os.str());
}

ClipTrajectories read_trajectory_cache(const std::filesystem::path& path, const std::string& expected_hash) {
  auto is = binio::open_in(path);
  const auto header = binio::read_json_line(is);
  if (header.value("format", "") != "tsh-trajectories") throw IoError("not a trajectory cache: " + path.string());
  const std::string found = header.value("config_hash", "");
  if (!expected_hash.empty() && found != expected_hash) {
    throw CacheMismatch("trajectory cache " + path.string(), expected_hash, found);
  }
  ClipTrajectories ct;
  ct.clip_id = header.at("clip_id");
  ct.width = header.at("width");
  ct.height = header.at("height");
  ct.frames = header.at("frames");
  ct.fps = header.at("fps");
  const int D = header.at("D");
  const std::size_t count = header.at("count");
  ct.trajectories.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Trajectory t;
    t.clip_id = ct.clip_id;
    t.scale_index = binio::read_u8(is);
    t.start_frame = static_cast<int>(binio::read_u32(is));
    t.points.resize(D);
    for (auto& p : t.points) {
      p.x = binio::read_f32(is);
      p.y = binio::read_f32(is);
    }
    ct.trajectories.push_back(std::move(t));
  }
  return ct;
}

}  // namespace tsh
