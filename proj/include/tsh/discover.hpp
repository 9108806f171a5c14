#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/classify.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/media.hpp"

namespace tsh {

struct DiscoveryParams {
  int n_neighbors = 10;
  int top_k_scores = 10;
  double firing_threshold = 0.0;
  double alpha = 0.5;
  int T_models = 10;
  int iterations = 5;
  int min_firings = 4;
  double C_pos = 0.5;
  double C_neg = 0.01;
  double cluster_C = 0.1;             // pipeline B per-cluster SVM
  int retrain_top = 5;                // pipeline B positives per retraining round
  std::size_t max_negatives = 20000;  // per model, subsampled with the seed
  std::size_t max_candidates = 400;   // exemplar / cluster pool cap, subsampled with the seed
  bool normalize = false;             // L1-normalize each sub-block of a snippet before use
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscoveryParams from_json(const nlohmann::json& j);
};

/// A snippet histogram tagged with its source video's weak label.
struct LabeledSnippet {
  const SnippetHistogram* hist = nullptr;
  Label label = Label::unlabeled;
};

struct Firing {
  std::string clip_id;
  int center_frame = 0;
  double score = 0;
  Label label = Label::unlabeled;
  bool operator==(const Firing&) const = default;
};

struct SnapshotModel {
  int id = 0;
  LinearModel model;
  std::optional<ExemplarModel> exemplar;  // pipeline A
  SnippetRef source;
  double appearance_consistency = 0;
  double purity = 0;
  double discriminativeness = 0;  // pipeline B
  double combined_score = 0;
  std::vector<Firing> firings;  // descending score
  int stabilized_iteration = -1;  // pipeline B
};

/// Copy of a histogram with each of the l / v_x / v_y blocks scaled to unit
/// mass (blocks with no mass stay zero).
SnippetHistogram normalize_snippet(const SnippetHistogram& h);

/// Indices (into `pool`) of unusual-video snippets whose n nearest neighbors
/// (Euclidean, self excluded) are strictly more often unusual than usual.
std::vector<std::size_t> seed_candidates(const std::vector<LabeledSnippet>& pool, int n_neighbors);

/// Temporal non-maximum suppression with radius `radius` frames: a center is
/// kept when its score exceeds `threshold` and beats every other center
/// within the radius (equal scores: the earlier center wins).
std::vector<std::pair<int, double>> nms_peaks(const std::vector<std::pair<int, double>>& scores, int radius,
                                              double threshold);

/// Firings of one model over a pool of snippets grouped by clip (NMS per clip).
std::vector<Firing> detect_firings(const LinearModel& model, const std::vector<LabeledSnippet>& pool, int radius,
                                   double threshold, const std::string& exclude_clip = {});

/// purity = #unusual / #usual with zero-usual handled as #unusual / 1.
double raw_purity(const std::vector<Firing>& firings);

/// Ranks models in place: AC, purity with cap, z-scored alpha combination,
/// models without retrievals dropped, top T retained.
std::vector<SnapshotModel> rank_models_A(std::vector<SnapshotModel> models, const DiscoveryParams& params);

struct DiscoveryInput {
  std::vector<LabeledSnippet> pool;  // training snippets
  int snippet_len = 0;               // frames
};

/// Both pipelines; results sorted by combined score, at most T_models.
std::vector<SnapshotModel> discover_A(const DiscoveryInput& train, const DiscoveryParams& params);

struct PipelineBIteration {
  int iteration = 0;
  int models_in = 0;
  int eliminated = 0;
  int survivors = 0;
};

struct PipelineBTrace {
  int n_instances = 0;
  int initial_clusters = 0;
  std::vector<PipelineBIteration> iterations;
};

std::vector<SnapshotModel> discover_B(const DiscoveryInput& train, const DiscoveryInput& validation,
                                      const DiscoveryParams& params, PipelineBTrace* trace = nullptr);

/// NMS over one clip's snippet scores; suppression radius floor(S/2).
std::vector<std::pair<int, double>> extract_snapshots(const LinearModel& model, const ClipDescriptors& clip,
                                                      const std::string& expected_fingerprint,
                                                      double threshold, bool normalize);

nlohmann::json snapshot_to_json(const SnapshotModel& m);

}  // namespace tsh
