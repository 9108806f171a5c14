#include "tsh/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/rng.hpp"

namespace tsh {

double accuracy(const std::vector<Label>& predictions, const std::vector<Label>& labels) {
  if (predictions.empty()) throw ValidationError("accuracy: empty input");
  if (predictions.size() != labels.size()) throw DimensionMismatch("accuracy: prediction and label counts differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / labels.size();
}

FiringPercentage firing_percentage(const std::vector<Firing>& firings) {
  FiringPercentage f;
  f.total = static_cast<int>(firings.size());
  for (const auto& x : firings) f.positive += x.label == Label::unusual;
  f.defined = f.total > 0;
  f.value = f.defined ? static_cast<double>(f.positive) / f.total : std::numeric_limits<double>::quiet_NaN();
  return f;
}

namespace {

std::string fmt_double(double v, const char* pattern = "%.6f") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string firing_csv(const std::vector<SnapshotModel>& models, const std::vector<std::vector<Firing>>& test_firings) {
  if (models.size() != test_firings.size()) throw DimensionMismatch("firing_csv: one firing list per model");
  std::string out = "model_id,total_firings,positive_firings,percentage\n";
  double sum = 0;
  int n = 0, total = 0, positive = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto fp = firing_percentage(test_firings[i]);
    out += std::to_string(models[i].id) + "," + std::to_string(fp.total) + "," + std::to_string(fp.positive) + "," +
           fmt_double(fp.value) + "\n";
    total += fp.total;
    positive += fp.positive;
    if (fp.defined) {
      sum += fp.value;
      ++n;
    }
  }
  out += "mean_top_" + std::to_string(models.size()) + "," + std::to_string(total) + "," + std::to_string(positive) +
         "," + fmt_double(n ? sum / n : std::numeric_limits<double>::quiet_NaN()) + "\n";
  return out;
}

std::vector<Split> balanced_split(const std::vector<Label>& labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ValidationError("balanced_split: fraction must be in (0,1)");
  std::vector<Split> out(labels.size(), Split::test);
  Rng rng(seed);
  for (Label cls : {Label::usual, Label::unusual, Label::unlabeled}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    rng.shuffle(idx);
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out[idx[r]] = r < n_train ? Split::train : Split::test;
  }
  return out;
}

std::vector<std::vector<SnippetHistogram>> describe_all(const std::vector<ClipTrajectories>& clips,
                                                        const DescriptorParams& params) {
  std::vector<std::vector<SnippetHistogram>> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(sliding_snippets(c, params));
  return out;
}

ClassificationResult classify_split(const std::vector<ClipTrajectories>& clips,
                                    const std::vector<std::vector<SnippetHistogram>>& snippets,
                                    const std::vector<Label>& labels, const std::vector<Split>& splits,
                                    const DescriptorParams& params, int K, std::uint64_t seed, double C,
                                    const std::vector<double>& C_grid, int folds) {
  if (clips.size() != snippets.size() || clips.size() != labels.size() || clips.size() != splits.size()) {
    throw DimensionMismatch("classify_split: per-clip inputs differ in length");
  }
  ClassificationResult r;
  r.snippet_seconds = params.snippet_seconds;
  r.K = K;
  r.seed = seed;
  r.C = C;
  std::vector<SnippetHistogram> pool;
  std::set<std::string> train_set;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (snippets[i].empty()) {
      r.skipped_ids.push_back(clips[i].clip_id);
      continue;
    }
    if (splits[i] == Split::train) {
      r.train_ids.push_back(clips[i].clip_id);
      train_set.insert(clips[i].clip_id);
      pool.insert(pool.end(), snippets[i].begin(), snippets[i].end());
    } else if (splits[i] == Split::test) {
      r.test_ids.push_back(clips[i].clip_id);
    }
  }
  for (const auto& id : r.test_ids) {
    if (train_set.count(id)) throw Error("classify_split: clip " + id + " is in both train and test");
  }
  if (r.test_ids.empty()) throw ValidationError("classify_split: no usable test clips");
  r.codebook = train_codebook(pool, K, seed, params);

  std::vector<std::vector<float>> xtr;
  std::vector<Label> ytr;
  std::vector<std::size_t> test_idx;
  std::vector<std::vector<float>> bow(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (snippets[i].empty()) continue;
    const auto b = encode_bow(snippets[i], r.codebook);
    bow[i].assign(b.normalized.begin(), b.normalized.end());
    if (splits[i] == Split::train) {
      xtr.push_back(bow[i]);
      ytr.push_back(labels[i]);
    } else if (splits[i] == Split::test) {
      test_idx.push_back(i);
    }
  }
  if (!C_grid.empty()) r.C = select_C(xtr, ytr, C_grid, folds, derive_seed(seed, 8));
  r.model = train_svm(xtr, ytr, r.C, derive_seed(seed, 7));
  std::vector<Label> pred, truth;
  for (std::size_t i : test_idx) {
    pred.push_back(predict(r.model, bow[i]).label);
    truth.push_back(labels[i]);
  }
  r.accuracy = accuracy(pred, truth);
  if (!r.skipped_ids.empty()) spdlog::warn("{} clips without snippets were skipped", r.skipped_ids.size());
  return r;
}

std::string ExperimentGrid::csv() const {
  std::string out = "set,snippet_seconds,codebook_K,seed,accuracy\n";
  for (const auto& r : results) {
    out += config.set_name + "," + fmt_double(r.snippet_seconds, "%g") + "," + std::to_string(r.K) + "," +
           std::to_string(r.seed) + "," + fmt_double(r.accuracy) + "\n";
  }
  return out;
}

ExperimentGrid run_grid(const std::vector<ClipTrajectories>& clips, const std::vector<Label>& labels,
                        const std::vector<Split>& splits, const GridConfig& config,
                        const std::filesystem::path& csv_path) {
  ExperimentGrid grid;
  grid.config = config;
  for (double len : config.snippet_lengths) {
    DescriptorParams dp = config.base;
    dp.snippet_seconds = len;
    dp.validate();
    const auto snippets = describe_all(clips, dp);
    for (int K : config.codebook_sizes) {
      for (std::uint64_t seed : config.seeds) {
        const auto sp = config.resplit ? balanced_split(labels, config.train_fraction, seed) : splits;
        grid.results.push_back(classify_split(clips, snippets, labels, sp, dp, K, seed, config.C, config.C_grid, config.folds));
        spdlog::info("grid cell length={} K={} seed={} accuracy={:.4f}", len, K, seed, grid.results.back().accuracy);
        if (!csv_path.empty()) binio::atomic_write(csv_path, grid.csv());
      }
    }
  }
  return grid;
}

}  // namespace tsh
