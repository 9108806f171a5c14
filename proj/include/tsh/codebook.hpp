#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/descriptor.hpp"

namespace tsh {

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-4;  // stop when no centroid moves farther than this
};

struct KMeansResult {
  int K = 0;
  int dim = 0;
  std::vector<double> centroids;  // K x dim
  std::vector<int> assignment;
  std::vector<double> objective;  // sum of squared distances after each assignment step
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding over row-major `data` (n x dim).
/// Empty clusters are re-seeded with the point farthest from its centroid.
/// Throws Error if the objective ever increases.
KMeansResult kmeans(std::span<const float> data, int dim, int K, std::uint64_t seed,
                    const KMeansOptions& options = {});

double squared_distance(std::span<const float> a, std::span<const float> b);

/// Index of the nearest row of `centers` (K x dim); ties go to the lowest index.
int nearest_center(std::span<const float> x, std::span<const float> centers, int dim);

struct Codebook {
  int K = 0;
  int dim = 0;
  std::vector<float> centroids;  // K x dim
  std::string params_fingerprint;
  std::uint64_t seed = 0;
  nlohmann::json descriptor_params;  // stored for reproducibility

  std::span<const float> centroid(int k) const {
    return {centroids.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
  int assign(std::span<const float> x) const { return nearest_center(x, centroids, dim); }
  bool operator==(const Codebook&) const = default;
};

/// Uniform subsample cap applied before clustering.
inline constexpr std::size_t kCodebookSampleCap = 200000;

Codebook train_codebook(const std::vector<SnippetHistogram>& sample, int K, std::uint64_t seed,
                        const DescriptorParams& params, KMeansResult* trace = nullptr,
                        std::size_t sample_cap = kCodebookSampleCap);

struct BoWVector {
  std::string clip_id;
  std::vector<double> counts;
  std::vector<double> normalized;  // L1
};

BoWVector encode_bow(const std::vector<SnippetHistogram>& snippets, const Codebook& codebook);

/// JSON header line, then K x dim f32 centroids.
void write_codebook(const std::filesystem::path& path, const Codebook& cb, const std::string& config_hash);
Codebook read_codebook(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace tsh
