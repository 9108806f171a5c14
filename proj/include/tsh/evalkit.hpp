#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsh/classify.hpp"
#include "tsh/codebook.hpp"
#include "tsh/descriptor.hpp"
#include "tsh/discover.hpp"
#include "tsh/media.hpp"
#include "tsh/track.hpp"

namespace tsh {

double accuracy(const std::vector<Label>& predictions, const std::vector<Label>& labels);

struct FiringPercentage {
  int total = 0;
  int positive = 0;
  bool defined = false;
  double value = 0;  // NaN when undefined
};

FiringPercentage firing_percentage(const std::vector<Firing>& firings);

/// Per-model rows plus a final `mean_top_T` row averaging the defined values.
std::string firing_csv(const std::vector<SnapshotModel>& models, const std::vector<std::vector<Firing>>& test_firings);

/// Seeded per-class shuffle; the first round(train_fraction * n_class) clips
/// of each class go to train, the rest to test.
std::vector<Split> balanced_split(const std::vector<Label>& labels, double train_fraction, std::uint64_t seed);

struct ClassificationResult {
  double snippet_seconds = 0;
  int K = 0;
  std::uint64_t seed = 0;
  double accuracy = 0;
  double C = 1;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> skipped_ids;  // clips without any snippet
  Codebook codebook;
  LinearModel model;
};

/// Descriptors for every clip at one snippet length.
std::vector<std::vector<SnippetHistogram>> describe_all(const std::vector<ClipTrajectories>& clips,
                                                        const DescriptorParams& params);

/// Codebook on train snippets only, L1 BoW, linear SVM, accuracy on test.
/// A nonempty `C_grid` replaces `C` by k-fold cross-validation on the train
/// BoW vectors. Throws Error if a clip id appears in both splits.
ClassificationResult classify_split(const std::vector<ClipTrajectories>& clips,
                                    const std::vector<std::vector<SnippetHistogram>>& snippets,
                                    const std::vector<Label>& labels, const std::vector<Split>& splits,
                                    const DescriptorParams& params, int K, std::uint64_t seed, double C,
                                    const std::vector<double>& C_grid = {}, int folds = 5);

struct GridConfig {
  std::string set_name = "synth";
  std::vector<double> snippet_lengths{1.0};
  std::vector<int> codebook_sizes{100};
  std::vector<std::uint64_t> seeds{0};
  bool resplit = true;  // new balanced split per seed; otherwise use the given splits
  double train_fraction = 0.6;
  double C = 1.0;
  std::vector<double> C_grid;  // nonempty: cross-validate C per cell
  int folds = 5;
  DescriptorParams base;
};

struct ExperimentGrid {
  GridConfig config;
  std::vector<ClassificationResult> results;
  std::string csv() const;
};

/// Full factorial over (length, K, seed). When `csv_path` is set the CSV is
/// rewritten after every cell so partial results survive a failure.
ExperimentGrid run_grid(const std::vector<ClipTrajectories>& clips, const std::vector<Label>& labels,
                        const std::vector<Split>& splits, const GridConfig& config,
                        const std::filesystem::path& csv_path = {});

}  // namespace tsh
