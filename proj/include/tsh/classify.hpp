#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/descriptor.hpp"
#include "tsh/media.hpp"

namespace tsh {

struct LinearModel {
  std::vector<float> w;
  double b = 0;
  double C = 1;
  int dim = 0;
  bool operator==(const LinearModel&) const = default;
};

/// Binary problem with labels +1 (unusual) / -1 (usual). `cost` holds a
/// per-instance penalty; empty means C for all.
struct SvmProblem {
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  std::vector<double> cost;
};

struct SvmOptions {
  double C = 1.0;
  std::uint64_t seed = 0;
  double tolerance = 1e-3;  // relative duality gap
  int max_epochs = 1000;
};

struct SvmTrace {
  std::vector<double> primal;      // objective of the returned (best) iterate after each epoch
  std::vector<double> raw_primal;  // objective of the current coordinate-descent iterate
  std::vector<double> dual;
  int epochs = 0;
  bool converged = false;
};

/// L2-regularized hinge-loss SVM by dual coordinate descent. The bias is
/// learned as the weight of a constant feature 1.
LinearModel train_svm(const SvmProblem& problem, const SvmOptions& options, SvmTrace* trace = nullptr);
LinearModel train_svm(const std::vector<std::vector<float>>& features, const std::vector<Label>& labels, double C,
                      std::uint64_t seed, SvmTrace* trace = nullptr);

/// Primal objective 0.5|w|^2 + 0.5 b^2 + sum_i C_i max(0, 1 - y_i f(x_i)).
double svm_primal(const LinearModel& model, const SvmProblem& problem, double C);

struct Prediction {
  double score = 0;
  Label label = Label::usual;
};

double decision_value(const LinearModel& model, std::span<const float> x);
Prediction predict(const LinearModel& model, std::span<const float> x);

/// k-fold cross-validated choice of C from `grid` (first best wins).
double select_C(const std::vector<std::vector<float>>& features, const std::vector<Label>& labels,
                const std::vector<double>& grid, int folds, std::uint64_t seed);

struct SnippetRef {
  std::string clip_id;
  int center_frame = 0;
  bool operator==(const SnippetRef&) const = default;
};

struct ExemplarModel {
  LinearModel base;
  SnippetRef exemplar;
  double C_pos = 0.5;
  double C_neg = 0.01;
  // The positive is contradicted by a negative duplicate or does not outscore
  // every negative.
  bool degenerate = false;
};

inline constexpr std::size_t kMinExemplarNegatives = 100;

ExemplarModel train_exemplar(const SnippetHistogram& positive, const std::vector<const SnippetHistogram*>& negatives,
                             double C_pos = 0.5, double C_neg = 0.01, std::uint64_t seed = 0);
ExemplarModel train_exemplar(const SnippetHistogram& positive, const std::vector<SnippetHistogram>& negatives,
                             double C_pos = 0.5, double C_neg = 0.01, std::uint64_t seed = 0);

/// JSON header line {dim, C, b, exemplar?}, then dim f32 weights.
void write_model(const std::filesystem::path& path, const LinearModel& model, const nlohmann::json& extra = {});
LinearModel read_model(const std::filesystem::path& path, nlohmann::json* header = nullptr);

}  // namespace tsh
