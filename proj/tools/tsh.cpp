#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tsh/binio.hpp"
#include "tsh/classify.hpp"
#include "tsh/codebook.hpp"
#include "tsh/config.hpp"
#include "tsh/error.hpp"
#include "tsh/evalkit.hpp"
#include "tsh/image_io.hpp"
#include "tsh/pipeline.hpp"
#include "tsh/rng.hpp"

namespace fs = std::filesystem;
using namespace tsh;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string manifest;
  int workers = -1;
  bool verbose = false;
  bool quiet = false;
};

RunConfig load_config(const Globals& g) {
  RunConfig cfg = RunConfig::load(g.config_path, g.overrides);
  if (!g.manifest.empty()) cfg.manifest = g.manifest;
  if (g.workers >= 0) cfg.workers = static_cast<unsigned>(g.workers);
  cfg.validate();
  return cfg;
}

DatasetManifest require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ValidationError("no manifest: pass --manifest or set run.manifest");
  return load_manifest(cfg.manifest);
}

fs::path codebook_path(const RunConfig& cfg) { return cfg.cache_dir / "codebook" / "codebook.bin"; }
fs::path model_path(const RunConfig& cfg) { return cfg.cache_dir / "train" / "model.bin"; }

void write_report(const fs::path& path, const std::string& text) {
  binio::atomic_write(path, text);
  spdlog::info("wrote {}", path.string());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// Loads the stage codebook and refuses one built under another configuration.
Codebook load_checked_codebook(const RunConfig& cfg) {
  const auto path = codebook_path(cfg);
  if (!fs::exists(path)) throw IoError("missing " + path.string() + "; run codebook first");
  std::string found;
  auto cb = read_codebook(path, &found);
  if (found != cfg.codebook_hash()) throw CacheMismatch("codebook " + path.string(), cfg.codebook_hash(), found);
  const auto fp = cfg.descriptor.fingerprint();
  if (cb.params_fingerprint != fp) {
    throw CacheMismatch("codebook descriptor fingerprint", fp, cb.params_fingerprint);
  }
  return cb;
}

LinearModel load_checked_model(const RunConfig& cfg) {
  const auto path = model_path(cfg);
  if (!fs::exists(path)) throw IoError("missing " + path.string() + "; run train first");
  nlohmann::json h;
  auto m = read_model(path, &h);
  const std::string found = h.value("config_hash", "");
  if (found != cfg.model_hash()) throw CacheMismatch("model " + path.string(), cfg.model_hash(), found);
  return m;
}

std::vector<float> bow_features(const ClipDescriptors& cd, const Codebook& cb) {
  const auto b = encode_bow(cd.snippets, cb);
  return {b.normalized.begin(), b.normalized.end()};
}

int cmd_synth(int count, const std::string& out, std::uint64_t seed, const SynthDatasetOptions& opt) {
  const auto m = write_synth_dataset(out, count, seed, opt);
  spdlog::info("synth: {} clips under {}", m.clips.size(), out);
  return 0;
}

int cmd_extract(const RunConfig& cfg) {
  const auto manifest = require_manifest(cfg);
  StageStats st;
  const auto trajs = extract_dataset(manifest, cfg, &st);
  std::size_t n = 0;
  for (const auto& t : trajs) n += t.trajectories.size();
  spdlog::info("extract {}: {} computed, {} cached, {} trajectories", cfg.extract_hash(), st.computed, st.cached, n);
  return 0;
}

int cmd_codebook(const RunConfig& cfg) {
  const auto manifest = require_manifest(cfg);
  const auto path = codebook_path(cfg);
  if (fs::exists(path)) {
    std::string found;
    read_codebook(path, &found);
    if (found == cfg.codebook_hash()) {
      spdlog::info("codebook {}: cached", found);
      return 0;
    }
  }
  StageStats st;
  const auto descs = describe_dataset(manifest, cfg, &st);
  spdlog::info("describe {}: {} computed, {} cached", cfg.describe_hash(), st.computed, st.cached);
  std::vector<SnippetHistogram> pool;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    if (manifest.clips[i].split != Split::train) continue;
    pool.insert(pool.end(), descs[i].snippets.begin(), descs[i].snippets.end());
  }
  const auto cb = train_codebook(pool, cfg.codebook_K, cfg.seed, cfg.descriptor);
  write_codebook(path, cb, cfg.codebook_hash());
  spdlog::info("codebook {}: K={} from {} train snippets", cfg.codebook_hash(), cb.K, pool.size());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto manifest = require_manifest(cfg);
  const auto cb = load_checked_codebook(cfg);
  const auto path = model_path(cfg);
  if (fs::exists(path)) {
    nlohmann::json h;
    read_model(path, &h);
    if (h.value("config_hash", "") == cfg.model_hash()) {
      spdlog::info("train {}: cached", cfg.model_hash());
      return 0;
    }
  }
  const auto descs = describe_dataset(manifest, cfg);
  std::vector<std::vector<float>> x;
  std::vector<Label> y;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    const auto& e = manifest.clips[i];
    if (e.split != Split::train || e.label == Label::unlabeled) continue;
    if (descs[i].snippets.empty()) {
      spdlog::warn("train: clip {} has no snippets, skipped", e.id);
      continue;
    }
    x.push_back(bow_features(descs[i], cb));
    y.push_back(e.label);
    ids.push_back(e.id);
  }
  double C = cfg.svm.C;
  if (cfg.svm.cross_validate) {
    C = select_C(x, y, cfg.svm.C_grid, cfg.svm.folds, derive_seed(cfg.seed, 8));
    spdlog::info("train: cross-validated C = {}", C);
  }
  const auto model = train_svm(x, y, C, derive_seed(cfg.seed, 7));
  write_model(path, model, {{"config_hash", cfg.model_hash()}, {"codebook_hash", cfg.codebook_hash()}, {"train_ids", ids}});
  spdlog::info("train {}: {} clips, C={}", cfg.model_hash(), x.size(), C);
  return 0;
}

int cmd_classify(const RunConfig& cfg, const std::string& split_name) {
  const auto manifest = require_manifest(cfg);
  const auto cb = load_checked_codebook(cfg);
  const auto model = load_checked_model(cfg);
  const auto descs = describe_dataset(manifest, cfg);
  std::optional<Split> only;
  if (split_name != "all") only = parse_split(split_name);
  nlohmann::json preds = nlohmann::json::array();
  std::vector<Label> pred, truth;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    const auto& e = manifest.clips[i];
    if (only && e.split != *only) continue;
    if (descs[i].snippets.empty()) {
      spdlog::warn("classify: clip {} has no snippets, skipped", e.id);
      continue;
    }
    const auto p = predict(model, bow_features(descs[i], cb));
    preds.push_back({{"clip", e.id}, {"label", to_string(e.label)}, {"predicted", to_string(p.label)}, {"score", p.score}});
    if (e.label != Label::unlabeled) {
      pred.push_back(p.label);
      truth.push_back(e.label);
    }
  }
  nlohmann::json report = {{"config_hash", cfg.hash()}, {"split", split_name}, {"predictions", preds}};
  if (!truth.empty()) {
    const double acc = accuracy(pred, truth);
    report["accuracy"] = acc;
    spdlog::info("classify: accuracy {:.4f} over {} clips", acc, truth.size());
  }
  write_report(cfg.report_dir / "classify.json", dump(report));
  return 0;
}

void dump_firing_frames(const DatasetManifest& manifest, const std::vector<SnapshotModel>& models,
                        const std::vector<std::vector<Firing>>& firings, const fs::path& dir, int per_model) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : manifest.clips) by_id[e.id] = &e;
  std::map<std::string, VideoClip> loaded;
  for (std::size_t m = 0; m < models.size(); ++m) {
    int n = 0;
    for (const auto& f : firings[m]) {
      if (n++ >= per_model) break;
      auto it = loaded.find(f.clip_id);
      if (it == loaded.end()) it = loaded.emplace(f.clip_id, load_clip(*by_id.at(f.clip_id), manifest.base_dir)).first;
      const auto& clip = it->second;
      if (f.center_frame < 0 || f.center_frame >= clip.length()) continue;
      char name[160];
      std::snprintf(name, sizeof name, "model_%03d/%s_%04d.png", models[m].id, f.clip_id.c_str(), f.center_frame);
      write_png(dir / name, clip.frames[f.center_frame]);
    }
  }
}

int cmd_discover(const RunConfig& cfg, const std::string& frame_dir, int frames_per_model) {
  const auto manifest = require_manifest(cfg);
  const auto descs = describe_dataset(manifest, cfg);
  if (descs.empty()) throw ValidationError("discover: manifest has no clips");
  const int S = descs.front().snippet_len;
  const auto test = labeled_pool(descs, manifest, {Split::test});
  std::vector<SnapshotModel> models;
  nlohmann::json report = {{"config_hash", cfg.hash()}, {"pipeline", cfg.pipeline}};
  if (cfg.pipeline == "A") {
    models = discover_A({labeled_pool(descs, manifest, {Split::train}), S}, cfg.discovery);
  } else {
    DiscoveryInput train{{}, S}, val{{}, S};
    const bool has_val = std::any_of(manifest.clips.begin(), manifest.clips.end(),
                                     [](const ManifestEntry& e) { return e.split == Split::validation; });
    if (has_val) {
      train.pool = labeled_pool(descs, manifest, {Split::train});
      val.pool = labeled_pool(descs, manifest, {Split::validation});
    } else {
      // No validation split: alternate train clips between the two pools.
      int k = 0;
      for (std::size_t i = 0; i < descs.size(); ++i) {
        if (manifest.clips[i].split != Split::train) continue;
        auto& dst = (k++ % 2 == 0) ? train.pool : val.pool;
        for (const auto& s : descs[i].snippets) dst.push_back({&s, manifest.clips[i].label});
      }
    }
    PipelineBTrace trace;
    models = discover_B(train, val, cfg.discovery, &trace);
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : trace.iterations) {
      its.push_back({{"iteration", it.iteration},
                     {"models_in", it.models_in},
                     {"eliminated", it.eliminated},
                     {"survivors", it.survivors}});
    }
    report["trace"] = {{"n_instances", trace.n_instances},
                       {"initial_clusters", trace.initial_clusters},
                       {"iterations", its}};
  }
  const int radius = S / 2;
  std::vector<std::vector<Firing>> test_firings;
  std::vector<SnippetHistogram> store;
  auto test_pool = test;
  if (cfg.discovery.normalize) {
    store.reserve(test_pool.size());
    for (auto& s : test_pool) {
      store.push_back(normalize_snippet(*s.hist));
      s.hist = &store.back();
    }
  }
  nlohmann::json jm = nlohmann::json::array();
  for (const auto& m : models) {
    test_firings.push_back(detect_firings(m.model, test_pool, radius, cfg.discovery.firing_threshold));
    auto j = snapshot_to_json(m);
    const auto fp = firing_percentage(test_firings.back());
    j["test_firings"] = fp.total;
    j["test_firing_percentage"] = fp.defined ? nlohmann::json(fp.value) : nlohmann::json(nullptr);
    jm.push_back(std::move(j));
  }
  report["models"] = jm;
  write_report(cfg.report_dir / "discover.json", dump(report));
  write_report(cfg.report_dir / "firings.csv", firing_csv(models, test_firings));
  if (!frame_dir.empty()) dump_firing_frames(manifest, models, test_firings, frame_dir, frames_per_model);
  spdlog::info("discover {}: {} models", cfg.pipeline, models.size());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const auto manifest = require_manifest(cfg);
  const auto trajs = extract_dataset(manifest, cfg);
  std::vector<Label> labels;
  std::vector<Split> splits;
  for (const auto& e : manifest.clips) {
    labels.push_back(e.label);
    splits.push_back(e.split);
  }
  GridConfig g;
  g.set_name = cfg.eval.set_name;
  g.snippet_lengths = cfg.eval.snippet_lengths;
  g.codebook_sizes = cfg.eval.codebook_sizes;
  g.seeds = cfg.eval.seeds;
  g.resplit = cfg.eval.resplit;
  g.train_fraction = cfg.eval.train_fraction;
  g.C = cfg.svm.C;
  if (cfg.svm.cross_validate) g.C_grid = cfg.svm.C_grid;
  g.folds = cfg.svm.folds;
  g.base = cfg.descriptor;
  const auto csv = cfg.report_dir / "grid.csv";
  const auto grid = run_grid(trajs, labels, splits, g, csv);
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : grid.results) {
    cells.push_back({{"snippet_seconds", r.snippet_seconds},
                     {"K", r.K},
                     {"seed", r.seed},
                     {"C", r.C},
                     {"accuracy", r.accuracy},
                     {"train_ids", r.train_ids},
                     {"test_ids", r.test_ids}});
  }
  write_report(cfg.report_dir / "grid.json", dump({{"config_hash", cfg.hash()}, {"cells", cells}}));
  spdlog::info("eval: {} cells", grid.results.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("tsh"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Trajectory snippet histograms for unusual video detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "TOML config file");
  app.add_option("--set", g.overrides, "Override section.key=value (repeatable)");
  app.add_option("-m,--manifest", g.manifest, "Dataset manifest (overrides run.manifest)");
  app.add_option("-j,--workers", g.workers, "Worker threads, 0 = all cores");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

  auto* synth = app.add_subcommand("synth", "Write a synthetic smooth/jolt dataset");
  int count = 20;
  std::string out;
  std::uint64_t synth_seed = 0;
  SynthDatasetOptions sopt;
  synth->add_option("-n,--count", count, "Clips per class")->check(CLI::NonNegativeNumber);
  synth->add_option("-o,--out", out, "Output directory")->required();
  synth->add_option("-s,--seed", synth_seed, "Generator seed");
  synth->add_option("--frames", sopt.frames, "Frames per clip");
  synth->add_option("--width", sopt.width);
  synth->add_option("--height", sopt.height);
  synth->add_option("--fps", sopt.fps);

  auto* extract = app.add_subcommand("extract", "Track dense trajectories for every clip");
  auto* codebook = app.add_subcommand("codebook", "Describe snippets and cluster the train split");
  auto* train = app.add_subcommand("train", "Train the video-level linear SVM");
  auto* classify = app.add_subcommand("classify", "Classify clips and report accuracy");
  std::string split_name = "test";
  classify->add_option("--split", split_name, "train, validation, test or all");
  auto* discover = app.add_subcommand("discover", "Mine unusual snapshots (pipeline A or B)");
  std::string frame_dir;
  int frames_per_model = 10;
  discover->add_option("--dump-frames", frame_dir, "Write PNG center frames of test firings here");
  discover->add_option("--frames-per-model", frames_per_model);
  auto* eval = app.add_subcommand("eval", "Accuracy grid over snippet lengths, codebook sizes and seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (g.verbose) spdlog::set_level(spdlog::level::debug);
  if (g.quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (synth->parsed()) return cmd_synth(count, out, synth_seed, sopt);
    const RunConfig cfg = load_config(g);
    spdlog::debug("config hash {}", cfg.hash());
    if (extract->parsed()) return cmd_extract(cfg);
    if (codebook->parsed()) return cmd_codebook(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (classify->parsed()) return cmd_classify(cfg, split_name);
    if (discover->parsed()) return cmd_discover(cfg, frame_dir, frames_per_model);
    if (eval->parsed()) return cmd_eval(cfg);
  } catch (const CacheMismatch& e) {
    spdlog::error("{}", e.what());
    std::fprintf(stderr, "expected hash: %s\nfound hash:    %s\n", e.expected().c_str(), e.found().c_str());
    return 3;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
