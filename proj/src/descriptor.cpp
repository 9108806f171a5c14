#include "tsh/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/hash.hpp"

namespace tsh {

TrajectoryFeatures trajectory_features(const Trajectory& traj) {
  const auto& p = traj.points;
  if (p.size() < 2) throw ValidationError("trajectory_features: need at least 2 points");
  const double n = static_cast<double>(p.size());
  TrajectoryFeatures f;
  for (const auto& q : p) {
    f.m_x += q.x;
    f.m_y += q.y;
  }
  f.m_x /= n;
  f.m_y /= n;
  for (const auto& q : p) {
    f.v_x += (q.x - f.m_x) * (q.x - f.m_x);
    f.v_y += (q.y - f.m_y) * (q.y - f.m_y);
  }
  f.v_x /= n;
  f.v_y /= n;
  for (std::size_t k = 1; k < p.size(); ++k) {
    f.l += std::hypot(double(p[k].x) - p[k - 1].x, double(p[k].y) - p[k - 1].y);
  }
  return f;
}

namespace {

void check_edges(const std::vector<double>& e, const char* name) {
  if (e.size() != 7) throw ValidationError(std::string("descriptor: ") + name + " needs 7 interior edges");
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!(e[i] >= 0) || !std::isfinite(e[i])) throw ValidationError(std::string("descriptor: ") + name + " must be finite and >= 0");
    if (i > 0 && !(e[i] > e[i - 1])) throw ValidationError(std::string("descriptor: ") + name + " must be strictly ascending");
  }
}

}  // namespace

void DescriptorParams::validate() const {
  if (N < 1) throw ValidationError("descriptor: N must be >= 1");
  if (!(snippet_seconds > 0)) throw ValidationError("descriptor: snippet_seconds must be > 0");
  if (stride_frames < 1) throw ValidationError("descriptor: stride_frames must be >= 1");
  check_edges(bin_edges_l, "bin_edges_l");
  check_edges(bin_edges_v, "bin_edges_v");
}

nlohmann::json DescriptorParams::to_json() const {
  return {{"N", N},
          {"snippet_seconds", snippet_seconds},
          {"bin_edges_l", bin_edges_l},
          {"bin_edges_v", bin_edges_v},
          {"stride_frames", stride_frames}};
}

DescriptorParams DescriptorParams::from_json(const nlohmann::json& j) {
  DescriptorParams p;
  p.N = j.value("N", p.N);
  p.snippet_seconds = j.value("snippet_seconds", p.snippet_seconds);
  p.bin_edges_l = j.value("bin_edges_l", p.bin_edges_l);
  p.bin_edges_v = j.value("bin_edges_v", p.bin_edges_v);
  p.stride_frames = j.value("stride_frames", p.stride_frames);
  return p;
}

std::string DescriptorParams::fingerprint() const { return hash_hex(to_json().dump()); }

int snippet_frames(double seconds, double fps) {
  if (!(fps > 0)) throw ValidationError("snippet_frames: fps must be > 0");
  if (!(seconds > 0)) throw ValidationError("snippet_frames: seconds must be > 0");
  return std::max(2, static_cast<int>(std::floor(seconds * fps + 0.5)));
}

int bin_index(double value, const std::vector<double>& edges) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

int grid_cell(double m_x, double m_y, int width, int height, int N) {
  if (!(m_x >= 0 && m_y >= 0 && m_x <= width && m_y <= height)) return -1;
  const int j = std::min(N - 1, static_cast<int>(std::floor(m_x * N / width)));
  const int i = std::min(N - 1, static_cast<int>(std::floor(m_y * N / height)));
  return i * N + j;
}

BinnedTrajectory bin_trajectory(const Trajectory& traj, int width, int height, const DescriptorParams& params) {
  const auto f = trajectory_features(traj);
  const double diag = std::hypot(double(width), double(height));
  BinnedTrajectory b;
  b.end_frame = traj.end_frame();
  b.cell = grid_cell(f.m_x, f.m_y, width, height, params.N);
  b.bin_l = bin_index(f.l / diag, params.bin_edges_l);
  b.bin_x = bin_index(f.v_x / (diag * diag), params.bin_edges_v);
  b.bin_y = bin_index(f.v_y / (diag * diag), params.bin_edges_v);
  return b;
}

namespace {

void add_counts(std::vector<float>& h, const BinnedTrajectory& b, int N, float w) {
  const std::size_t block = static_cast<std::size_t>(N) * N * 8;
  const std::size_t cell = static_cast<std::size_t>(b.cell) * 8;
  h[cell + b.bin_l] += w;
  h[block + cell + b.bin_x] += w;
  h[2 * block + cell + b.bin_y] += w;
}

}  // namespace

SnippetHistogram snippet_histogram(std::span<const BinnedTrajectory> trajs, int s, int snippet_len,
                                   const DescriptorParams& params, const std::string& clip_id) {
  const int half = snippet_len / 2;
  SnippetHistogram h{clip_id, s, std::vector<float>(params.dim(), 0.f)};
  for (const auto& b : trajs) {
    if (b.cell < 0 || b.end_frame < s - half || b.end_frame > s + half) continue;
    add_counts(h.values, b, params.N, 1.f);
  }
  return h;
}

SnippetHistogram snippet_histogram(const std::vector<Trajectory>& trajs, int s, int width, int height,
                                   int snippet_len, const DescriptorParams& params) {
  params.validate();
  std::vector<BinnedTrajectory> binned;
  binned.reserve(trajs.size());
  for (const auto& t : trajs) binned.push_back(bin_trajectory(t, width, height, params));
  return snippet_histogram(binned, s, snippet_len, params, trajs.empty() ? std::string{} : trajs.front().clip_id);
}

std::vector<int> snippet_centers(int V, int snippet_len, int stride) {
  std::vector<int> out;
  if (V < snippet_len) return out;
  const int c = (snippet_len + 1) / 2;
  for (int s = c; s <= V - c - 1; s += stride) out.push_back(s);
  return out;
}

std::vector<SnippetHistogram> sliding_snippets(const ClipTrajectories& ct, const DescriptorParams& params) {
  params.validate();
  const int S = snippet_frames(params.snippet_seconds, ct.fps);
  const int V = ct.frames;
  std::vector<SnippetHistogram> out;
  if (V < S) {
    spdlog::warn("clip {} has {} frames, shorter than one {}-frame snippet", ct.clip_id, V, S);
    return out;
  }
  const auto centers = snippet_centers(V, S, params.stride_frames);
  const std::size_t dim = params.dim();
  // Per-end-frame counts, then prefix sums over frames: cum[t] covers frames < t.
  std::vector<std::uint32_t> cum(static_cast<std::size_t>(V + 1) * dim, 0);
  const std::size_t block = static_cast<std::size_t>(params.N) * params.N * 8;
  for (const auto& t : ct.trajectories) {
    const auto b = bin_trajectory(t, ct.width, ct.height, params);
    if (b.cell < 0 || b.end_frame < 0 || b.end_frame >= V) continue;
    std::uint32_t* row = &cum[static_cast<std::size_t>(b.end_frame + 1) * dim];
    const std::size_t cell = static_cast<std::size_t>(b.cell) * 8;
    ++row[cell + b.bin_l];
    ++row[block + cell + b.bin_x];
    ++row[2 * block + cell + b.bin_y];
  }
  for (int t = 1; t <= V; ++t) {
    for (std::size_t d = 0; d < dim; ++d) cum[t * dim + d] += cum[(t - 1) * dim + d];
  }
  const int half = S / 2;
  out.reserve(centers.size());
  for (int s : centers) {
    const int lo = std::max(0, s - half), hi = std::min(V - 1, s + half);
    SnippetHistogram h{ct.clip_id, s, std::vector<float>(dim)};
    for (std::size_t d = 0; d < dim; ++d) {
      h.values[d] = static_cast<float>(cum[(hi + 1) * dim + d] - cum[lo * dim + d]);
    }
    out.push_back(std::move(h));
  }
  return out;
}

void write_descriptor_cache(const std::filesystem::path& path, const ClipDescriptors& cd,
                            const DescriptorParams& params, const std::string& config_hash) {
  std::ostringstream os(std::ios::binary);
  binio::write_json_line(os, {{"format", "tsh-descriptors"},
                              {"config_hash", config_hash},
                              {"clip_id", cd.clip_id},
                              {"fingerprint", cd.fingerprint},
                              {"params", params.to_json()},
                              {"snippet_frames", cd.snippet_len},
                              {"count", cd.snippets.size()}});
  for (const auto& h : cd.snippets) {
    binio::write_u32(os, static_cast<std::uint32_t>(h.center_frame));
    binio::write_u32(os, static_cast<std::uint32_t>(h.values.size()));
    binio::write_f32s(os, h.values);
  }
  binio::atomic_write(path, os.str());
}

ClipDescriptors read_descriptor_cache(const std::filesystem::path& path, const std::string& expected_hash) {
  auto is = binio::open_in(path);
  const auto header = binio::read_json_line(is);
  if (header.value("format", "") != "tsh-descriptors") throw IoError("not a descriptor cache: " + path.string());
  const std::string found = header.value("config_hash", "");
  if (!expected_hash.empty() && found != expected_hash) {
    throw CacheMismatch("descriptor cache " + path.string(), expected_hash, found);
  }
  ClipDescriptors cd;
  cd.clip_id = header.at("clip_id");
  cd.fingerprint = header.at("fingerprint");
  cd.snippet_len = header.at("snippet_frames");
  const std::size_t count = header.at("count");
  cd.snippets.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    SnippetHistogram h;
    h.clip_id = cd.clip_id;
    h.center_frame = static_cast<int>(binio::read_u32(is));
    const auto dim = binio::read_u32(is);
    h.values = binio::read_f32s(is, dim);
    cd.snippets.push_back(std::move(h));
  }
  return cd;
}

}  // namespace tsh
