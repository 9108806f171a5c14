#include "tsh/media.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include <json.hpp>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/image_io.hpp"
#include "tsh/rng.hpp"

namespace tsh {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Label label) {
  switch (label) {
    case Label::usual: return "usual";
    case Label::unusual: return "unusual";
    case Label::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Label parse_label(const std::string& s) {
  if (s == "usual") return Label::usual;
  if (s == "unusual") return Label::unusual;
  if (s == "unlabeled" || s.empty()) return Label::unlabeled;
  throw ValidationError("unknown label '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

void VideoClip::validate() const {
  if (!(fps > 0) || !std::isfinite(fps)) throw ValidationError("clip " + id + ": fps must be > 0");
  if (frames.empty()) throw ValidationError("clip " + id + ": no frames");
  const int w = frames.front().width;
  const int h = frames.front().height;
  if (w < 16 || h < 16) throw ValidationError("clip " + id + ": frames must be at least 16x16");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.width != w || f.height != h) {
      throw DimensionMismatch("clip " + id + ": frame " + std::to_string(i) + " is " +
                              std::to_string(f.width) + "x" + std::to_string(f.height) +
                              ", expected " + std::to_string(w) + "x" + std::to_string(h));
    }
    if (f.data.size() != static_cast<std::size_t>(w) * h) {
      throw ValidationError("clip " + id + ": frame " + std::to_string(i) + " has wrong data length");
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& c : clips) {
    if (c.id.empty()) throw ValidationError("manifest entry with empty id");
    if (!ids.insert(c.id).second) throw ValidationError("duplicate clip id '" + c.id + "'");
    if (!(c.fps > 0)) throw ValidationError("clip " + c.id + ": fps must be > 0");
    format_frame_path(c.pattern, 0);
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(binio::read_all(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  const json& list = j.is_object() && j.contains("clips") ? j["clips"] : j;
  if (!list.is_array()) throw ValidationError("manifest must be a JSON array of clips");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    for (const auto& e : list) {
      ManifestEntry c;
      c.id = e.at("id").get<std::string>();
      c.pattern = e.at("pattern").get<std::string>();
      c.fps = e.at("fps").get<double>();
      c.label = parse_label(e.value("label", std::string("unlabeled")));
      c.split = parse_split(e.value("split", std::string("train")));
      if (e.contains("frames")) c.frame_count = e["frames"].get<int>();
      c.first_index = e.value("first_index", 0);
      m.clips.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json list = json::array();
  for (const auto& c : manifest.clips) {
    json e = {{"id", c.id},
              {"pattern", c.pattern},
              {"fps", c.fps},
              {"label", to_string(c.label)},
              {"split", to_string(c.split)}};
    if (c.frame_count) e["frames"] = *c.frame_count;
    if (c.first_index != 0) e["first_index"] = c.first_index;
    list.push_back(std::move(e));
  }
  binio::atomic_write(path, list.dump(2) + "\n");
}

std::string format_frame_path(const std::string& pattern, int index) {
  static const std::regex conv(R"(%(0?)(\d*)d)");
  std::smatch m;
  if (!std::regex_search(pattern, m, conv)) {
    throw ValidationError("frame pattern '" + pattern + "' needs one %d conversion");
  }
  const std::string rest = m.suffix().str();
  if (std::regex_search(rest, conv)) {
    throw ValidationError("frame pattern '" + pattern + "' has more than one conversion");
  }
  std::string num = std::to_string(index);
  const int width = m[2].length() ? std::stoi(m[2].str()) : 0;
  if (static_cast<int>(num.size()) < width) {
    num.insert(0, static_cast<std::size_t>(width) - num.size(), m[1].length() ? '0' : ' ');
  }
  return m.prefix().str() + num + rest;
}

VideoClip load_clip(const ManifestEntry& entry, const fs::path& base_dir) {
  if (!(entry.fps > 0)) throw ValidationError("clip " + entry.id + ": fps must be > 0");
  VideoClip clip;
  clip.id = entry.id;
  clip.fps = entry.fps;
  clip.label = entry.label;
  clip.split = entry.split;

  auto path_at = [&](int i) {
    fs::path p = format_frame_path(entry.pattern, i);
    return p.is_absolute() ? p : base_dir / p;
  };

  if (entry.frame_count) {
    for (int i = 0; i < *entry.frame_count; ++i) {
      const auto p = path_at(entry.first_index + i);
      if (!fs::exists(p)) throw IoError("clip " + entry.id + ": missing frame file " + p.string());
      clip.frames.push_back(read_frame(p));
    }
  } else {
    int start = entry.first_index;
    if (!fs::exists(path_at(start)) && start == 0 && fs::exists(path_at(1))) start = 1;
    for (int i = start; fs::exists(path_at(i)); ++i) clip.frames.push_back(read_frame(path_at(i)));
    if (clip.frames.empty()) {
      throw IoError("clip " + entry.id + ": missing frame file " + path_at(start).string());
    }
  }
  clip.validate();
  return clip;
}

ManifestEntry save_clip(const VideoClip& clip, const fs::path& dir, const fs::path& relative_to,
                        const std::string& pattern) {
  fs::create_directories(dir);
  for (int i = 0; i < clip.length(); ++i) {
    write_frame(dir / format_frame_path(pattern, i), clip.frames[i]);
  }
  ManifestEntry e;
  e.id = clip.id;
  e.pattern = (fs::relative(dir, relative_to) / pattern).generic_string();
  e.fps = clip.fps;
  e.label = clip.label;
  e.split = clip.split;
  e.frame_count = clip.length();
  return e;
}

// ---------------------------------------------------------------------------
// Synthetic textures

namespace {

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

int wrap(int i, int n) { return ((i % n) + n) % n; }

constexpr int kOctaves = 2;
constexpr double kOctaveWeight[kOctaves] = {0.65, 0.35};

}  // namespace

PeriodicNoise::PeriodicNoise(std::uint64_t seed, double period_x, double period_y, double cell)
    : cells_x_(std::max(1, static_cast<int>(std::lround(period_x / cell)))),
      cells_y_(std::max(1, static_cast<int>(std::lround(period_y / cell)))),
      cell_(cell) {
  Rng rng(seed);
  for (int o = 0; o < kOctaves; ++o) {
    const int nx = cells_x_ << o;
    const int ny = cells_y_ << o;
    std::vector<float> g(static_cast<std::size_t>(nx) * ny);
    for (auto& v : g) v = static_cast<float>(rng.uniform());
    grids_.push_back(std::move(g));
  }
}

double PeriodicNoise::octave(int o, double x, double y) const {
  const int nx = cells_x_ << o;
  const int ny = cells_y_ << o;
  const double c = cell_ / (1 << o);
  const double gx = x / c;
  const double gy = y / c;
  const double fx0 = std::floor(gx);
  const double fy0 = std::floor(gy);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double tx = fade(gx - fx0);
  const double ty = fade(gy - fy0);
  const auto& g = grids_[o];
  auto at = [&](int ix, int iy) {
    return static_cast<double>(g[static_cast<std::size_t>(wrap(iy, ny)) * nx + wrap(ix, nx)]);
  };
  const double top = at(x0, y0) * (1 - tx) + at(x0 + 1, y0) * tx;
  const double bottom = at(x0, y0 + 1) * (1 - tx) + at(x0 + 1, y0 + 1) * tx;
  return top * (1 - ty) + bottom * ty;
}

double PeriodicNoise::sample(double x, double y) const {
  double v = 0;
  for (int o = 0; o < kOctaves; ++o) v += kOctaveWeight[o] * octave(o, x, y);
  return v;
}

Frame texture_frame(const PeriodicNoise& noise, int width, int height, double dx, double dy,
                    double contrast, double offset) {
  Frame f(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = offset + contrast * noise.sample(x - dx, y - dy);
      f.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return f;
}

std::string to_string(SynthKind kind) { return kind == SynthKind::jolt ? "jolt" : "smooth"; }

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "smooth") return SynthKind::smooth;
  if (s == "jolt") return SynthKind::jolt;
  throw ValidationError("unknown synth kind '" + s + "'");
}

namespace {

struct Blob {
  double x, y, radius;
  double lo_x, hi_x, lo_y, hi_y;
  double sx, sy;  // smooth velocity
  double jx, jy;  // jolt velocity
  double tex_x, tex_y;
  PeriodicNoise texture;
};

// Reflects a coordinate into [lo, hi]; returns true when the direction flips.
bool reflect(double& c, double lo, double hi) {
  bool flipped = false;
  for (int guard = 0; guard < 8 && (c < lo || c > hi); ++guard) {
    c = c < lo ? 2 * lo - c : 2 * hi - c;
    flipped = !flipped;
  }
  c = std::clamp(c, lo, hi);
  return flipped;
}

void render(Frame& f, const std::vector<Blob>& blobs, std::uint8_t background) {
  std::fill(f.data.begin(), f.data.end(), background);
  for (const auto& b : blobs) {
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x - b.radius - 1)));
    const int x1 = std::min(f.width - 1, static_cast<int>(std::ceil(b.x + b.radius + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y - b.radius - 1)));
    const int y1 = std::min(f.height - 1, static_cast<int>(std::ceil(b.y + b.radius + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x - b.x, y - b.y);
        const double cover = std::clamp(b.radius + 0.5 - d, 0.0, 1.0);
        if (cover <= 0) continue;
        const double tex = 40.0 + 180.0 * b.texture.sample(x - b.x + b.tex_x, y - b.y + b.tex_y);
        const double v = f.at(x, y) * (1 - cover) + tex * cover;
        f.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

}  // namespace

SynthClip synth_clip(SynthKind kind, std::uint64_t seed, int frames, int width, int height,
                     double fps, const SynthParams& p) {
  if (width < 16 || height < 16) throw ValidationError("synth: frames must be at least 16x16");
  if (frames < 1) throw ValidationError("synth: frame count must be >= 1");
  if (!(fps > 0)) throw ValidationError("synth: fps must be > 0");
  if (p.blob_count < 1) throw ValidationError("synth: blob_count must be >= 1");

  const int jolt_frames = std::max(2, static_cast<int>(std::floor(p.jolt_seconds * fps + 0.5)));
  if (kind == SynthKind::jolt && frames < 3 * jolt_frames) {
    throw ValidationError("synth: " + std::to_string(frames) + " frames cannot hold a " +
                          std::to_string(jolt_frames) + "-frame jolt window");
  }

  Rng rng(seed);
  std::vector<Blob> blobs;
  // Blobs live in a grid of regions, column-major: up to three blobs share a
  // row, four or more use two rows.
  const int cols = p.blob_count >= 4 ? (p.blob_count + 1) / 2 : p.blob_count;
  const int rows = (p.blob_count + cols - 1) / cols;
  const double region_w = static_cast<double>(width) / cols;
  const double region_h = static_cast<double>(height) / rows;
  for (int i = 0; i < p.blob_count; ++i) {
    const int cx = i % cols, cy = i / cols;
    const double max_fit = std::min(region_w, region_h) / 2 - 2;
    const double radius = std::max(2.0, std::min(rng.uniform(p.min_radius, p.max_radius), max_fit));
    const double lo_x = cx * region_w + radius + 1;
    const double hi_x = std::max(lo_x, (cx + 1) * region_w - radius - 2);
    const double lo_y = cy * region_h + radius + 1;
    const double hi_y = std::max(lo_y, (cy + 1) * region_h - radius - 2);
    const double x = rng.uniform(lo_x, hi_x);
    const double y = rng.uniform(lo_y, hi_y);
    const double speed = rng.uniform(p.smooth_speed_min, p.smooth_speed_max);
    const double angle = rng.uniform(0, 2 * M_PI);
    const double jspeed = rng.uniform(p.jolt_speed_min, p.jolt_speed_max);
    const double jangle = rng.uniform(0, 2 * M_PI);
    const double tex_x = rng.uniform(0, 256);
    const double tex_y = rng.uniform(0, 256);
    const std::uint64_t tex_seed = rng.next();
    blobs.push_back(Blob{x, y, radius, lo_x, hi_x, lo_y, hi_y,
                         speed * std::cos(angle), speed * std::sin(angle),
                         jspeed * std::cos(jangle), jspeed * std::sin(jangle),
                         tex_x, tex_y,
                         PeriodicNoise(tex_seed, 256, 256, p.texture_cell)});
  }

  SynthClip out;
  out.meta.kind = kind;
  if (kind == SynthKind::jolt) {
    const int start = jolt_frames + static_cast<int>(rng.index(
                                        static_cast<std::uint64_t>(frames - 3 * jolt_frames + 1)));
    out.meta.jolt = JoltInterval{start, start + jolt_frames};
  }

  VideoClip& clip = out.clip;
  clip.id = to_string(kind) + "_" + std::to_string(seed);
  out.meta.id = clip.id;
  clip.fps = fps;
  clip.label = kind == SynthKind::jolt ? Label::unusual : Label::usual;
  clip.frames.reserve(frames);
  for (int k = 0; k < frames; ++k) {
    Frame f(width, height);
    render(f, blobs, p.background);
    clip.frames.push_back(std::move(f));
    const bool fast = out.meta.jolt && k >= out.meta.jolt->start_frame && k < out.meta.jolt->end_frame;
    for (auto& b : blobs) {
      b.x += fast ? b.jx : b.sx;
      b.y += fast ? b.jy : b.sy;
      if (reflect(b.x, b.lo_x, b.hi_x)) {
        b.sx = -b.sx;
        b.jx = -b.jx;
      }
      if (reflect(b.y, b.lo_y, b.hi_y)) {
        b.sy = -b.sy;
        b.jy = -b.jy;
      }
    }
  }
  return out;
}

VideoClip translating_clip(std::uint64_t seed, int frames, int width, int height, double fps,
                           double vx, double vy) {
  const PeriodicNoise noise(seed, width, height, 8.0);
  VideoClip clip;
  clip.id = "translate_" + std::to_string(seed);
  clip.fps = fps;
  for (int k = 0; k < frames; ++k) clip.frames.push_back(texture_frame(noise, width, height, k * vx, k * vy));
  return clip;
}

void save_synth_sidecar(const fs::path& path, const SynthMeta& meta) {
  json j = {{"id", meta.id},
            {"kind", to_string(meta.kind)},
            {"jolt_start_frame", meta.jolt ? meta.jolt->start_frame : -1},
            {"jolt_end_frame", meta.jolt ? meta.jolt->end_frame : -1}};
  binio::atomic_write(path, j.dump(2) + "\n");
}

SynthMeta load_synth_sidecar(const fs::path& path) {
  try {
    const json j = json::parse(binio::read_all(path));
    SynthMeta m;
    m.id = j.at("id").get<std::string>();
    m.kind = parse_synth_kind(j.at("kind").get<std::string>());
    const int s = j.at("jolt_start_frame").get<int>();
    const int e = j.at("jolt_end_frame").get<int>();
    if (s >= 0 && e > s) m.jolt = JoltInterval{s, e};
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("malformed synth sidecar " + path.string() + ": " + e.what());
  }
}

}  // namespace tsh
