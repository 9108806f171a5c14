#include "tsh/discover.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "tsh/codebook.hpp"
#include "tsh/error.hpp"
#include "tsh/parallel.hpp"
#include "tsh/rng.hpp"

namespace tsh {

void DiscoveryParams::validate() const {
  if (n_neighbors < 1) throw ValidationError("discovery: n_neighbors must be >= 1");
  if (top_k_scores < 1) throw ValidationError("discovery: top_k_scores must be >= 1");
  if (!(alpha >= 0 && alpha <= 1)) throw ValidationError("discovery: alpha must be in [0,1]");
  if (T_models < 1) throw ValidationError("discovery: T_models must be >= 1");
  if (iterations < 1) throw ValidationError("discovery: iterations must be >= 1");
  if (min_firings < 0) throw ValidationError("discovery: min_firings must be >= 0");
  if (!(C_pos > 0 && C_neg > 0 && cluster_C > 0)) throw ValidationError("discovery: penalties must be > 0");
  if (retrain_top < 1) throw ValidationError("discovery: retrain_top must be >= 1");
  if (max_negatives < kMinExemplarNegatives) throw ValidationError("discovery: max_negatives below exemplar minimum");
  if (max_candidates < 1) throw ValidationError("discovery: max_candidates must be >= 1");
}

nlohmann::json DiscoveryParams::to_json() const {
  return {{"n_neighbors", n_neighbors},
          {"top_k_scores", top_k_scores},
          {"firing_threshold", firing_threshold},
          {"alpha", alpha},
          {"T_models", T_models},
          {"iterations", iterations},
          {"min_firings", min_firings},
          {"C_pos", C_pos},
          {"C_neg", C_neg},
          {"cluster_C", cluster_C},
          {"retrain_top", retrain_top},
          {"max_negatives", max_negatives},
          {"max_candidates", max_candidates},
          {"normalize", normalize},
          {"seed", seed}};
}

DiscoveryParams DiscoveryParams::from_json(const nlohmann::json& j) {
  DiscoveryParams p;
  p.n_neighbors = j.value("n_neighbors", p.n_neighbors);
  p.top_k_scores = j.value("top_k_scores", p.top_k_scores);
  p.firing_threshold = j.value("firing_threshold", p.firing_threshold);
  p.alpha = j.value("alpha", p.alpha);
  p.T_models = j.value("T_models", p.T_models);
  p.iterations = j.value("iterations", p.iterations);
  p.min_firings = j.value("min_firings", p.min_firings);
  p.C_pos = j.value("C_pos", p.C_pos);
  p.C_neg = j.value("C_neg", p.C_neg);
  p.cluster_C = j.value("cluster_C", p.cluster_C);
  p.retrain_top = j.value("retrain_top", p.retrain_top);
  p.max_negatives = j.value("max_negatives", p.max_negatives);
  p.max_candidates = j.value("max_candidates", p.max_candidates);
  p.normalize = j.value("normalize", p.normalize);
  p.seed = j.value("seed", p.seed);
  return p;
}

SnippetHistogram normalize_snippet(const SnippetHistogram& h) {
  SnippetHistogram out = h;
  const std::size_t block = h.values.size() / 3;
  for (int b = 0; b < 3; ++b) {
    double s = 0;
    for (std::size_t d = 0; d < block; ++d) s += h.values[b * block + d];
    if (s <= 0) continue;
    for (std::size_t d = 0; d < block; ++d) out.values[b * block + d] = static_cast<float>(h.values[b * block + d] / s);
  }
  return out;
}

std::vector<std::size_t> seed_candidates(const std::vector<LabeledSnippet>& pool, int n_neighbors) {
  if (n_neighbors < 1) throw ValidationError("seed_candidates: n_neighbors must be >= 1");
  if (pool.size() < static_cast<std::size_t>(n_neighbors) + 1) {
    throw ValidationError("seed_candidates: pool has fewer than n_neighbors + 1 snippets");
  }
  std::vector<std::size_t> unusual;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].label == Label::unusual) unusual.push_back(i);
  }
  std::vector<char> keep(unusual.size(), 0);
  parallel_for(unusual.size(), default_workers(), [&](std::size_t u) {
    const std::size_t i = unusual[u];
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size() - 1);
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (j == i) continue;
      d.emplace_back(squared_distance(pool[i].hist->values, pool[j].hist->values), j);
    }
    std::partial_sort(d.begin(), d.begin() + n_neighbors, d.end());
    int nu = 0, ns = 0;
    for (int k = 0; k < n_neighbors; ++k) {
      const Label l = pool[d[k].second].label;
      if (l == Label::unusual) ++nu;
      else if (l == Label::usual) ++ns;
    }
    keep[u] = nu > ns;
  });
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < unusual.size(); ++u) {
    if (keep[u]) out.push_back(unusual[u]);
  }
  return out;
}

std::vector<std::pair<int, double>> nms_peaks(const std::vector<std::pair<int, double>>& scores, int radius,
                                              double threshold) {
  std::vector<std::pair<int, double>> s = scores;
  std::sort(s.begin(), s.end());
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i].second > threshold)) continue;
    bool peak = true;
    for (std::size_t j = i; j-- > 0 && s[i].first - s[j].first <= radius;) {
      if (s[j].second >= s[i].second) {  // earlier wins ties
        peak = false;
        break;
      }
    }
    for (std::size_t j = i + 1; peak && j < s.size() && s[j].first - s[i].first <= radius; ++j) {
      if (s[j].second > s[i].second) peak = false;
    }
    if (peak) out.push_back(s[i]);
  }
  return out;
}

namespace {

bool firing_order(const Firing& a, const Firing& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
  return a.center_frame < b.center_frame;
}

// Pool positions grouped by clip in first-appearance order.
std::vector<std::vector<std::size_t>> group_by_clip(const std::vector<LabeledSnippet>& pool) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto [it, fresh] = index.emplace(pool[i].hist->clip_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

std::vector<double> zscores(const std::vector<double>& v) {
  std::vector<double> z(v.size(), 0.0);
  if (v.empty()) return z;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / v.size());
  if (!(sd > 0)) return z;
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = (v[i] - mean) / sd;
  return z;
}

// Purities of models with zero usual retrievals are capped at 10x the 95th
// percentile (nearest rank) of the defined purities.
void cap_purities(std::vector<double>& purity, const std::vector<bool>& zero_usual) {
  std::vector<double> defined;
  for (std::size_t i = 0; i < purity.size(); ++i) {
    if (!zero_usual[i]) defined.push_back(purity[i]);
  }
  if (defined.empty()) return;
  std::sort(defined.begin(), defined.end());
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * defined.size()));
  const double p95 = defined[std::max<std::size_t>(rank, 1) - 1];
  if (!(p95 > 0)) return;
  for (std::size_t i = 0; i < purity.size(); ++i) {
    if (zero_usual[i]) purity[i] = std::min(purity[i], 10.0 * p95);
  }
}

std::pair<int, int> label_counts(const std::vector<Firing>& f) {
  int nu = 0, ns = 0;
  for (const auto& x : f) {
    if (x.label == Label::unusual) ++nu;
    else if (x.label == Label::usual) ++ns;
  }
  return {nu, ns};
}

struct Prepared {
  std::vector<SnippetHistogram> storage;
  std::vector<LabeledSnippet> pool;
};

Prepared prepare(const std::vector<LabeledSnippet>& pool, bool normalize) {
  Prepared p;
  if (!normalize) {
    p.pool = pool;
    return p;
  }
  p.storage.reserve(pool.size());
  for (const auto& s : pool) p.storage.push_back(normalize_snippet(*s.hist));
  for (std::size_t i = 0; i < pool.size(); ++i) p.pool.push_back({&p.storage[i], pool[i].label});
  return p;
}

std::vector<std::size_t> subsample(std::vector<std::size_t> idx, std::size_t cap, std::uint64_t seed) {
  if (idx.size() <= cap) return idx;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> combine(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
  const auto za = zscores(a), zb = zscores(b);
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = alpha * za[i] + (1 - alpha) * zb[i];
  return c;
}

void sort_and_truncate(std::vector<SnapshotModel>& models, int T) {
  std::stable_sort(models.begin(), models.end(), [](const SnapshotModel& a, const SnapshotModel& b) {
    if (a.combined_score != b.combined_score) return a.combined_score > b.combined_score;
    return a.id < b.id;
  });
  if (static_cast<int>(models.size()) > T) models.resize(T);
}

}  // namespace

std::vector<Firing> detect_firings(const LinearModel& model, const std::vector<LabeledSnippet>& pool, int radius,
                                   double threshold, const std::string& exclude_clip) {
  std::vector<Firing> out;
  for (const auto& group : group_by_clip(pool)) {
    const auto& clip = pool[group.front()].hist->clip_id;
    if (!exclude_clip.empty() && clip == exclude_clip) continue;
    std::vector<std::pair<int, double>> scores;
    scores.reserve(group.size());
    for (std::size_t i : group) scores.emplace_back(pool[i].hist->center_frame, decision_value(model, pool[i].hist->values));
    for (const auto& [frame, score] : nms_peaks(scores, radius, threshold)) {
      out.push_back({clip, frame, score, pool[group.front()].label});
    }
  }
  std::sort(out.begin(), out.end(), firing_order);
  return out;
}

double raw_purity(const std::vector<Firing>& firings) {
  const auto [nu, ns] = label_counts(firings);
  return static_cast<double>(nu) / std::max(ns, 1);
}

std::vector<SnapshotModel> rank_models_A(std::vector<SnapshotModel> models, const DiscoveryParams& params) {
  std::vector<SnapshotModel> live;
  for (auto& m : models) {
    if (m.firings.empty()) {
      m.combined_score = -std::numeric_limits<double>::infinity();
      continue;
    }
    std::sort(m.firings.begin(), m.firings.end(), firing_order);
    live.push_back(std::move(m));
  }
  std::vector<double> ac, purity;
  std::vector<bool> zero_usual;
  for (auto& m : live) {
    double s = 0;
    const std::size_t k = std::min<std::size_t>(params.top_k_scores, m.firings.size());
    for (std::size_t i = 0; i < k; ++i) s += m.firings[i].score;
    m.appearance_consistency = s;
    ac.push_back(s);
    purity.push_back(raw_purity(m.firings));
    zero_usual.push_back(label_counts(m.firings).second == 0);
  }
  cap_purities(purity, zero_usual);
  const auto c = combine(ac, purity, params.alpha);
  for (std::size_t i = 0; i < live.size(); ++i) {
    live[i].purity = purity[i];
    live[i].combined_score = c[i];
  }
  sort_and_truncate(live, params.T_models);
  return live;
}

std::vector<SnapshotModel> discover_A(const DiscoveryInput& train, const DiscoveryParams& params) {
  params.validate();
  const auto prep = prepare(train.pool, params.normalize);
  const auto& pool = prep.pool;
  const bool any_unusual = std::any_of(pool.begin(), pool.end(), [](const LabeledSnippet& s) {
    return s.label == Label::unusual;
  });
  if (!any_unusual) {
    spdlog::warn("discover_A: no snippets from unusual videos");
    return {};
  }
  auto cands = seed_candidates(pool, params.n_neighbors);
  if (cands.empty()) {
    spdlog::warn("discover_A: no candidates survived seeding");
    return {};
  }
  spdlog::info("discover_A: {} candidates retained by seeding", cands.size());
  cands = subsample(std::move(cands), params.max_candidates, derive_seed(params.seed, 1));

  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].label == Label::usual) negatives.push_back(i);
  }
  const int radius = train.snippet_len / 2;
  std::vector<std::optional<SnapshotModel>> slots(cands.size());
  parallel_for(cands.size(), default_workers(), [&](std::size_t c) {
    const auto& pos = *pool[cands[c]].hist;
    const auto neg_idx = subsample(negatives, params.max_negatives, derive_seed(params.seed, 1000 + c));
    std::vector<const SnippetHistogram*> neg;
    neg.reserve(neg_idx.size());
    for (std::size_t i : neg_idx) neg.push_back(pool[i].hist);
    auto em = train_exemplar(pos, neg, params.C_pos, params.C_neg, derive_seed(params.seed, 2000 + c));
    if (em.degenerate) return;
    SnapshotModel m;
    m.id = static_cast<int>(c);
    m.model = em.base;
    m.source = em.exemplar;
    m.exemplar = std::move(em);
    m.firings = detect_firings(m.model, pool, radius, params.firing_threshold, pos.clip_id);
    slots[c] = std::move(m);
  });
  std::vector<SnapshotModel> models;
  for (auto& s : slots) {
    if (s) models.push_back(std::move(*s));
  }
  if (models.size() < slots.size()) {
    spdlog::info("discover_A: {} degenerate exemplars dropped", slots.size() - models.size());
  }
  return rank_models_A(std::move(models), params);
}

std::vector<SnapshotModel> discover_B(const DiscoveryInput& train, const DiscoveryInput& validation,
                                      const DiscoveryParams& params, PipelineBTrace* trace) {
  params.validate();
  const Prepared pools[2] = {prepare(train.pool, params.normalize), prepare(validation.pool, params.normalize)};
  for (const auto& p : pools) {
    const bool u = std::any_of(p.pool.begin(), p.pool.end(), [](auto& s) { return s.label == Label::unusual; });
    const bool s = std::any_of(p.pool.begin(), p.pool.end(), [](auto& s) { return s.label == Label::usual; });
    if (!u || !s) throw ValidationError("discover_B: each pool needs snippets of both labels");
  }
  const auto& tp = pools[0].pool;
  std::vector<std::size_t> unusual;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].label == Label::unusual) unusual.push_back(i);
  }
  unusual = subsample(std::move(unusual), params.max_candidates, derive_seed(params.seed, 1));
  const int n = static_cast<int>(unusual.size());
  const int K = n / 4;
  if (K < 1) throw ValidationError("discover_B: fewer than 4 unusual training snippets");
  const int dim = static_cast<int>(tp[unusual.front()].hist->values.size());
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(n) * dim);
  for (std::size_t i : unusual) data.insert(data.end(), tp[i].hist->values.begin(), tp[i].hist->values.end());
  const auto km = kmeans(data, dim, K, derive_seed(params.seed, 2));

  PipelineBTrace tr;
  tr.n_instances = n;
  tr.initial_clusters = K;

  struct State {
    std::vector<const SnippetHistogram*> positives;
    LinearModel model;
    SnippetRef source;
    std::vector<Firing> firings;
    std::vector<std::set<std::pair<std::string, int>>> top_history;
    bool alive = true;
  };
  std::vector<State> states(K);
  std::vector<double> best_d(K, std::numeric_limits<double>::infinity());
  for (int m = 0; m < n; ++m) {
    const int k = km.assignment[m];
    const auto* h = tp[unusual[m]].hist;
    states[k].positives.push_back(h);
    // Source of each cluster: the member nearest its centroid.
    double d = 0;
    for (int j = 0; j < dim; ++j) {
      const double e = h->values[j] - km.centroids[static_cast<std::size_t>(k) * dim + j];
      d += e * e;
    }
    if (d < best_d[k]) {
      best_d[k] = d;
      states[k].source = {h->clip_id, h->center_frame};
    }
  }

  const int radius = train.snippet_len / 2;
  int cur = 0;
  for (int it = 1; it <= params.iterations; ++it) {
    const auto& trn = pools[cur].pool;
    const auto& held = pools[1 - cur].pool;
    std::map<std::pair<std::string, int>, const SnippetHistogram*> held_index;
    for (const auto& s : held) held_index[{s.hist->clip_id, s.hist->center_frame}] = s.hist;
    std::vector<std::size_t> neg_all;
    for (std::size_t i = 0; i < trn.size(); ++i) {
      if (trn[i].label == Label::usual) neg_all.push_back(i);
    }
    const auto neg_idx = subsample(neg_all, params.max_negatives, derive_seed(params.seed, 100 + it));

    PipelineBIteration rec;
    rec.iteration = it;
    std::vector<std::size_t> alive;
    for (int k = 0; k < K; ++k) {
      if (states[k].alive) alive.push_back(k);
    }
    rec.models_in = static_cast<int>(alive.size());
    parallel_for(alive.size(), default_workers(), [&](std::size_t a) {
      auto& st = states[alive[a]];
      if (st.positives.empty()) {
        st.firings.clear();
        return;
      }
      SvmProblem p;
      for (const auto* h : st.positives) {
        p.x.push_back(h->values);
        p.y.push_back(1);
      }
      for (std::size_t i : neg_idx) {
        p.x.push_back(trn[i].hist->values);
        p.y.push_back(-1);
      }
      SvmOptions opt;
      opt.C = params.cluster_C;
      opt.seed = derive_seed(params.seed, 10000 * it + alive[a]);
      st.model = train_svm(p, opt);
      st.firings = detect_firings(st.model, held, radius, params.firing_threshold);
    });
    for (std::size_t k : alive) {
      auto& st = states[k];
      if (static_cast<int>(st.firings.size()) < params.min_firings) {
        st.alive = false;
        ++rec.eliminated;
        continue;
      }
      std::set<std::pair<std::string, int>> top;
      std::vector<const SnippetHistogram*> next;
      for (std::size_t f = 0; f < st.firings.size() && static_cast<int>(f) < params.retrain_top; ++f) {
        top.insert({st.firings[f].clip_id, st.firings[f].center_frame});
        next.push_back(held_index.at({st.firings[f].clip_id, st.firings[f].center_frame}));
      }
      st.top_history.resize(it);
      st.top_history[it - 1] = std::move(top);
      if (it < params.iterations) st.positives = std::move(next);
    }
    rec.survivors = rec.models_in - rec.eliminated;
    tr.iterations.push_back(rec);
    cur = 1 - cur;
  }

  std::vector<SnapshotModel> models;
  std::vector<double> disc, purity;
  std::vector<bool> zero_usual;
  for (int k = 0; k < K; ++k) {
    auto& st = states[k];
    if (!st.alive) continue;
    SnapshotModel m;
    m.id = k;
    m.model = st.model;
    m.source = st.source;
    m.firings = st.firings;
    const auto [nu, ns] = label_counts(m.firings);
    m.discriminativeness = m.firings.empty() ? 0.0 : double(nu) / m.firings.size();
    double top_k = 0;
    for (std::size_t i = 0; i < m.firings.size() && static_cast<int>(i) < params.top_k_scores; ++i) top_k += m.firings[i].score;
    m.appearance_consistency = top_k;
    // Earliest iteration after which every same-pool visit repeated the top firings.
    const int I = params.iterations;
    int stable = I;
    for (int i = I; i >= 1; --i) {
      bool ok = true;
      for (int j = i + 1; j <= I && ok; ++j) ok = j - 2 >= 1 && st.top_history[j - 1] == st.top_history[j - 3];
      if (ok) stable = i;
      else break;
    }
    m.stabilized_iteration = stable;
    disc.push_back(m.discriminativeness);
    purity.push_back(double(nu) / std::max(ns, 1));
    zero_usual.push_back(ns == 0);
    models.push_back(std::move(m));
  }
  cap_purities(purity, zero_usual);
  const auto c = combine(disc, purity, params.alpha);
  for (std::size_t i = 0; i < models.size(); ++i) {
    models[i].purity = purity[i];
    models[i].combined_score = c[i];
  }
  sort_and_truncate(models, params.T_models);
  if (trace) *trace = std::move(tr);
  return models;
}

std::vector<std::pair<int, double>> extract_snapshots(const LinearModel& model, const ClipDescriptors& clip,
                                                      const std::string& expected_fingerprint, double threshold,
                                                      bool normalize) {
  if (clip.fingerprint != expected_fingerprint) {
    throw CacheMismatch("descriptor fingerprint of clip " + clip.clip_id, expected_fingerprint, clip.fingerprint);
  }
  std::vector<std::pair<int, double>> scores;
  scores.reserve(clip.snippets.size());
  for (const auto& s : clip.snippets) {
    const double v = normalize ? decision_value(model, normalize_snippet(s).values) : decision_value(model, s.values);
    scores.emplace_back(s.center_frame, v);
  }
  return nms_peaks(scores, clip.snippet_len / 2, threshold);
}

nlohmann::json snapshot_to_json(const SnapshotModel& m) {
  nlohmann::json firings = nlohmann::json::array();
  for (const auto& f : m.firings) {
    firings.push_back({{"clip", f.clip_id}, {"frame", f.center_frame}, {"score", f.score}, {"label", to_string(f.label)}});
  }
  nlohmann::json j = {{"id", m.id},
                      {"source", {{"clip", m.source.clip_id}, {"frame", m.source.center_frame}}},
                      {"AC", m.appearance_consistency},
                      {"purity", m.purity},
                      {"combined", m.combined_score},
                      {"firings", firings}};
  if (m.stabilized_iteration >= 0) {
    j["discriminativeness"] = m.discriminativeness;
    j["stabilized_iteration"] = m.stabilized_iteration;
  }
  return j;
}

}  // namespace tsh
