#include "tsh/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/rng.hpp"

namespace tsh {

namespace {

double dot(const std::vector<double>& w, const std::vector<float>& x) {
  double s = 0;
  for (std::size_t d = 0; d < x.size(); ++d) s += w[d] * x[d];
  return s + w.back();  // constant bias feature
}

struct Objectives {
  double primal, dual;
};

Objectives objectives(const std::vector<double>& w, const SvmProblem& p, const std::vector<double>& cost,
                      const std::vector<double>& alpha) {
  double reg = 0;
  for (double v : w) reg += v * v;
  reg *= 0.5;
  double loss = 0, asum = 0;
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    loss += cost[i] * std::max(0.0, 1.0 - p.y[i] * dot(w, p.x[i]));
    asum += alpha[i];
  }
  return {reg + loss, asum - reg};
}

}  // namespace

LinearModel train_svm(const SvmProblem& p, const SvmOptions& opt, SvmTrace* trace) {
  const std::size_t n = p.x.size();
  if (n == 0) throw ValidationError("train_svm: empty training set");
  if (p.y.size() != n) throw DimensionMismatch("train_svm: label count differs from feature count");
  if (!p.cost.empty() && p.cost.size() != n) throw DimensionMismatch("train_svm: cost count differs from feature count");
  if (!(opt.C > 0)) throw ValidationError("train_svm: C must be > 0");
  const std::size_t dim = p.x.front().size();
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.x[i].size() != dim) throw DimensionMismatch("train_svm: inconsistent feature dimension");
    if (p.y[i] == 1) has_pos = true;
    else if (p.y[i] == -1) has_neg = true;
    else throw ValidationError("train_svm: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw ValidationError("train_svm: both classes must be present");

  std::vector<double> cost = p.cost.empty() ? std::vector<double>(n, opt.C) : p.cost;
  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (float v : p.x[i]) s += double(v) * v;
    qii[i] = s;
  }
  std::vector<double> w(dim + 1, 0.0), alpha(n, 0.0);
  // Coordinate steps decrease the dual monotonically but not the primal, so
  // the returned weights are the best primal iterate seen.
  std::vector<double> best = w;
  double best_primal = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(opt.seed);
  SvmTrace tr;
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double G = p.y[i] * dot(w, p.x[i]) - 1.0;
      double pg = G;
      if (alpha[i] <= 0) pg = std::min(G, 0.0);
      else if (alpha[i] >= cost[i]) pg = std::max(G, 0.0);
      if (std::abs(pg) < 1e-12) continue;
      const double a = std::clamp(alpha[i] - G / qii[i], 0.0, cost[i]);
      const double delta = (a - alpha[i]) * p.y[i];
      alpha[i] = a;
      for (std::size_t d = 0; d < dim; ++d) w[d] += delta * p.x[i][d];
      w[dim] += delta;
    }
    const auto obj = objectives(w, p, cost, alpha);
    if (obj.primal < best_primal) {
      best_primal = obj.primal;
      best = w;
    }
    tr.raw_primal.push_back(obj.primal);
    tr.primal.push_back(best_primal);
    tr.dual.push_back(obj.dual);
    tr.epochs = epoch + 1;
    if (best_primal - obj.dual <= opt.tolerance * std::max(1.0, std::abs(best_primal))) {
      tr.converged = true;
      break;
    }
  }
  LinearModel m;
  m.dim = static_cast<int>(dim);
  m.C = opt.C;
  m.w.assign(best.begin(), best.end() - 1);
  m.b = best.back();
  if (trace) *trace = std::move(tr);
  return m;
}

LinearModel train_svm(const std::vector<std::vector<float>>& features, const std::vector<Label>& labels, double C,
                      std::uint64_t seed, SvmTrace* trace) {
  if (features.size() != labels.size()) throw DimensionMismatch("train_svm: label count differs from feature count");
  SvmProblem p;
  p.x = features;
  for (Label l : labels) {
    if (l == Label::unlabeled) throw ValidationError("train_svm: unlabeled instance");
    p.y.push_back(l == Label::unusual ? 1 : -1);
  }
  SvmOptions opt;
  opt.C = C;
  opt.seed = seed;
  return train_svm(p, opt, trace);
}

double svm_primal(const LinearModel& m, const SvmProblem& p, double C) {
  double reg = m.b * m.b;
  for (float v : m.w) reg += double(v) * v;
  double loss = 0;
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    const double c = p.cost.empty() ? C : p.cost[i];
    loss += c * std::max(0.0, 1.0 - p.y[i] * decision_value(m, p.x[i]));
  }
  return 0.5 * reg + loss;
}

double decision_value(const LinearModel& m, std::span<const float> x) {
  if (static_cast<int>(x.size()) != m.dim || m.w.size() != x.size()) {
    throw DimensionMismatch("predict: feature dimension " + std::to_string(x.size()) + " != model dimension " +
                            std::to_string(m.dim));
  }
  double s = m.b;
  for (std::size_t d = 0; d < x.size(); ++d) s += double(m.w[d]) * x[d];
  return s;
}

Prediction predict(const LinearModel& m, std::span<const float> x) {
  const double s = decision_value(m, x);
  return {s, s > 0 ? Label::unusual : Label::usual};
}

double select_C(const std::vector<std::vector<float>>& features, const std::vector<Label>& labels,
                const std::vector<double>& grid, int folds, std::uint64_t seed) {
  if (grid.empty()) throw ValidationError("select_C: empty grid");
  if (folds < 2) throw ValidationError("select_C: need at least 2 folds");
  const std::size_t n = features.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[order[r]] = static_cast<int>(r % folds);
  double best_C = grid.front(), best_acc = -1;
  for (double C : grid) {
    std::size_t correct = 0, total = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::vector<float>> xtr;
      std::vector<Label> ytr;
      for (std::size_t i = 0; i < n; ++i) {
        if (fold[i] != f) {
          xtr.push_back(features[i]);
          ytr.push_back(labels[i]);
        }
      }
      const bool pos = std::count(ytr.begin(), ytr.end(), Label::unusual) > 0;
      const bool neg = std::count(ytr.begin(), ytr.end(), Label::usual) > 0;
      if (!pos || !neg) continue;
      const auto m = train_svm(xtr, ytr, C, derive_seed(seed, static_cast<std::uint64_t>(f)));
      for (std::size_t i = 0; i < n; ++i) {
        if (fold[i] != f) continue;
        ++total;
        if (predict(m, features[i]).label == labels[i]) ++correct;
      }
    }
    const double acc = total ? double(correct) / total : 0.0;
    if (acc > best_acc) {
      best_acc = acc;
      best_C = C;
    }
  }
  return best_C;
}

ExemplarModel train_exemplar(const SnippetHistogram& positive, const std::vector<const SnippetHistogram*>& negatives,
                             double C_pos, double C_neg, std::uint64_t seed) {
  if (negatives.size() < kMinExemplarNegatives) {
    throw ValidationError("train_exemplar: need at least " + std::to_string(kMinExemplarNegatives) +
                          " negatives, got " + std::to_string(negatives.size()));
  }
  if (!(C_pos > 0) || !(C_neg > 0)) throw ValidationError("train_exemplar: penalties must be > 0");
  SvmProblem p;
  p.x.reserve(negatives.size() + 1);
  p.x.push_back(positive.values);
  p.y.push_back(1);
  p.cost.push_back(C_pos);
  bool duplicate = false;
  for (const auto* n : negatives) {
    if (n->values.size() != positive.values.size()) throw DimensionMismatch("train_exemplar: dimension mismatch");
    if (n->values == positive.values) duplicate = true;
    p.x.push_back(n->values);
    p.y.push_back(-1);
    p.cost.push_back(C_neg);
  }
  SvmOptions opt;
  opt.C = C_pos;
  opt.seed = seed;
  ExemplarModel em;
  em.base = train_svm(p, opt);
  em.exemplar = {positive.clip_id, positive.center_frame};
  em.C_pos = C_pos;
  em.C_neg = C_neg;
  const double own = decision_value(em.base, positive.values);
  double max_neg = -std::numeric_limits<double>::infinity();
  for (const auto* n : negatives) max_neg = std::max(max_neg, decision_value(em.base, n->values));
  em.degenerate = duplicate || own <= max_neg;
  return em;
}

ExemplarModel train_exemplar(const SnippetHistogram& positive, const std::vector<SnippetHistogram>& negatives,
                             double C_pos, double C_neg, std::uint64_t seed) {
  std::vector<const SnippetHistogram*> ptrs;
  ptrs.reserve(negatives.size());
  for (const auto& n : negatives) ptrs.push_back(&n);
  return train_exemplar(positive, ptrs, C_pos, C_neg, seed);
}

void write_model(const std::filesystem::path& path, const LinearModel& m, const nlohmann::json& extra) {
  nlohmann::json h = extra.is_object() ? extra : nlohmann::json::object();
  h["format"] = "tsh-model";
  h["dim"] = m.dim;
  h["C"] = m.C;
  h["b"] = m.b;
  std::ostringstream os(std::ios::binary);
  binio::write_json_line(os, h);
  binio::write_f32s(os, m.w);
  binio::atomic_write(path, os.str());
}

LinearModel read_model(const std::filesystem::path& path, nlohmann::json* header) {
  auto is = binio::open_in(path);
  const auto h = binio::read_json_line(is);
  if (h.value("format", "") != "tsh-model") throw IoError("not a model file: " + path.string());
  LinearModel m;
  m.dim = h.at("dim");
  m.C = h.at("C");
  m.b = h.at("b");
  m.w = binio::read_f32s(is, m.dim);
  if (header) *header = h;
  return m;
}

}  // namespace tsh
