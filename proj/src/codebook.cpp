#include "tsh/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/rng.hpp"

namespace tsh {

namespace {

template <typename A, typename B>
double sqdist(const A* a, const B* b, int dim) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int d = 0;
  for (; d + 4 <= dim; d += 4) {
    const double e0 = double(a[d]) - b[d], e1 = double(a[d + 1]) - b[d + 1];
    const double e2 = double(a[d + 2]) - b[d + 2], e3 = double(a[d + 3]) - b[d + 3];
    s0 += e0 * e0;
    s1 += e1 * e1;
    s2 += e2 * e2;
    s3 += e3 * e3;
  }
  for (; d < dim; ++d) {
    const double e = double(a[d]) - b[d];
    s0 += e * e;
  }
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

double squared_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionMismatch("squared_distance: dimension mismatch");
  return sqdist(a.data(), b.data(), static_cast<int>(a.size()));
}

int nearest_center(std::span<const float> x, std::span<const float> centers, int dim) {
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("nearest_center: dimension mismatch");
  const int K = static_cast<int>(centers.size() / dim);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const double d = sqdist(x.data(), centers.data() + static_cast<std::size_t>(k) * dim, dim);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

KMeansResult kmeans(std::span<const float> data, int dim, int K, std::uint64_t seed, const KMeansOptions& options) {
  if (dim < 1) throw ValidationError("kmeans: dim must be >= 1");
  if (K < 1) throw ValidationError("kmeans: K must be >= 1");
  const std::size_t n = data.size() / dim;
  if (n < static_cast<std::size_t>(K)) throw ValidationError("kmeans: fewer samples than clusters");
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError("kmeans: non-finite input");
  }
  auto row = [&](std::size_t i) { return data.data() + i * dim; };

  KMeansResult r;
  r.K = K;
  r.dim = dim;
  r.centroids.assign(static_cast<std::size_t>(K) * dim, 0.0);
  auto cen = [&](int k) { return r.centroids.data() + static_cast<std::size_t>(k) * dim; };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::size_t first = rng.index(n);
  for (int k = 0; k < K; ++k) {
    std::size_t pick = first;
    if (k > 0) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) total += d2[i];
      if (total > 0) {
        double target = rng.uniform() * total;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (d2[i] <= 0) continue;
          target -= d2[i];
          pick = i;
          if (target < 0) break;
        }
      } else {
        // Fewer distinct points than clusters: fall back to unused duplicates.
        pick = 0;
        while (chosen[pick]) ++pick;
      }
    }
    chosen[pick] = 1;
    std::copy(row(pick), row(pick) + dim, cen(k));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(row(i), cen(k), dim));
  }

  r.assignment.assign(n, 0);
  std::vector<double> dist(n);
  std::vector<double> sums(static_cast<std::size_t>(K) * dim);
  std::vector<std::size_t> counts(K);
  for (int it = 0; it < options.max_iterations; ++it) {
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = sqdist(row(i), cen(k), dim);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      r.assignment[i] = best;
      dist[i] = bd;
      obj += bd;
    }
    if (!r.objective.empty() && obj > r.objective.back() * (1 + 1e-12) + 1e-12) {
      throw Error("kmeans: objective increased");
    }
    r.objective.push_back(obj);
    r.iterations = it + 1;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = r.assignment[i];
      ++counts[k];
      double* s = sums.data() + static_cast<std::size_t>(k) * dim;
      const float* x = row(i);
      for (int d = 0; d < dim; ++d) s[d] += x[d];
    }
    double max_move = 0;
    for (int k = 0; k < K; ++k) {
      double* c = cen(k);
      if (counts[k] == 0) {
        // Re-seed with the point currently worst served.
        const std::size_t far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy(row(far), row(far) + dim, c);
        dist[far] = 0;
        max_move = std::numeric_limits<double>::infinity();
        continue;
      }
      double move = 0;
      const double* s = sums.data() + static_cast<std::size_t>(k) * dim;
      for (int d = 0; d < dim; ++d) {
        const double v = s[d] / static_cast<double>(counts[k]);
        move += (v - c[d]) * (v - c[d]);
        c[d] = v;
      }
      max_move = std::max(max_move, std::sqrt(move));
    }
    if (max_move < options.tolerance) {
      r.converged = true;
      break;
    }
  }
  // Final assignment against the returned centroids.
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double d = sqdist(row(i), cen(k), dim);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    r.assignment[i] = best;
  }
  return r;
}

Codebook train_codebook(const std::vector<SnippetHistogram>& sample, int K, std::uint64_t seed,
                        const DescriptorParams& params, KMeansResult* trace, std::size_t sample_cap) {
  if (K < 2) throw ValidationError("train_codebook: K must be >= 2");
  if (sample.size() < static_cast<std::size_t>(K)) throw ValidationError("train_codebook: fewer samples than K");
  const int dim = static_cast<int>(sample.front().values.size());
  if (dim != params.dim()) throw DimensionMismatch("train_codebook: histogram dimension does not match params");
  std::vector<std::size_t> idx(sample.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (idx.size() > sample_cap) {
    Rng rng(derive_seed(seed, 0x5a));
    rng.shuffle(idx);
    idx.resize(sample_cap);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<float> data;
  data.reserve(idx.size() * dim);
  for (std::size_t i : idx) {
    if (static_cast<int>(sample[i].values.size()) != dim) throw DimensionMismatch("train_codebook: mixed dimensions");
    data.insert(data.end(), sample[i].values.begin(), sample[i].values.end());
  }
  auto km = kmeans(data, dim, K, seed);
  Codebook cb;
  cb.K = K;
  cb.dim = dim;
  cb.centroids.assign(km.centroids.begin(), km.centroids.end());
  cb.params_fingerprint = params.fingerprint();
  cb.seed = seed;
  cb.descriptor_params = params.to_json();
  if (trace) *trace = std::move(km);
  return cb;
}

BoWVector encode_bow(const std::vector<SnippetHistogram>& snippets, const Codebook& codebook) {
  if (snippets.empty()) throw ValidationError("encode_bow: clip has no snippets");
  BoWVector b;
  b.clip_id = snippets.front().clip_id;
  b.counts.assign(codebook.K, 0.0);
  for (const auto& s : snippets) {
    if (static_cast<int>(s.values.size()) != codebook.dim) throw DimensionMismatch("encode_bow: dimension mismatch");
    b.counts[codebook.assign(s.values)] += 1;
  }
  const double total = static_cast<double>(snippets.size());
  b.normalized.resize(codebook.K);
  for (int k = 0; k < codebook.K; ++k) b.normalized[k] = b.counts[k] / total;
  return b;
}

void write_codebook(const std::filesystem::path& path, const Codebook& cb, const std::string& config_hash) {
  std::ostringstream os(std::ios::binary);
  binio::write_json_line(os, {{"format", "tsh-codebook"},
                              {"config_hash", config_hash},
                              {"K", cb.K},
                              {"dim", cb.dim},
                              {"seed", cb.seed},
                              {"fingerprint", cb.params_fingerprint},
                              {"descriptor_params", cb.descriptor_params}});
  binio::write_f32s(os, cb.centroids);
  binio::atomic_write(path, os.str());
}

Codebook read_codebook(const std::filesystem::path& path, std::string* config_hash) {
  auto is = binio::open_in(path);
  const auto h = binio::read_json_line(is);
  if (h.value("format", "") != "tsh-codebook") throw IoError("not a codebook file: " + path.string());
  Codebook cb;
  cb.K = h.at("K");
  cb.dim = h.at("dim");
  cb.seed = h.at("seed");
  cb.params_fingerprint = h.at("fingerprint");
  cb.descriptor_params = h.at("descriptor_params");
  cb.centroids = binio::read_f32s(is, static_cast<std::size_t>(cb.K) * cb.dim);
  if (config_hash) *config_hash = h.value("config_hash", "");
  return cb;
}

}  // namespace tsh
