#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsh/descriptor.hpp"
#include "tsh/discover.hpp"
#include "tsh/flow.hpp"
#include "tsh/track.hpp"

namespace tsh {

/// Parses a small TOML subset: `[section]` headers, `key = value` lines,
/// `#` comments; values are integers, floats, booleans, "strings" and flat
/// arrays of those. Returns {section: {key: value}}; keys before any header
/// land in section "".
nlohmann::json parse_toml_subset(const std::string& text);
/// Same value grammar for a single override; bare words become strings.
nlohmann::json parse_toml_value(const std::string& text);

struct SvmSettings {
  double C = 1.0;
  bool cross_validate = false;
  std::vector<double> C_grid{0.01, 0.1, 1, 10, 100};
  int folds = 5;
};

struct EvalSettings {
  std::string set_name = "synth";
  std::vector<double> snippet_lengths{0.5, 1.0, 2.0};
  std::vector<int> codebook_sizes{50, 100, 150};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool resplit = true;
  double train_fraction = 0.6;
};

struct RunConfig {
  FlowParams flow;
  TrackParams track;
  DescriptorParams descriptor;
  DiscoveryParams discovery;
  SvmSettings svm;
  EvalSettings eval;
  int codebook_K = 100;
  std::uint64_t seed = 0;
  std::string pipeline = "A";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path manifest;
  std::filesystem::path report_dir = "reports";
  unsigned workers = 0;  // 0: hardware concurrency

  /// Validates every block; throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown sections or keys are a ValidationError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
  /// `section.key=value` applied on top of the parsed file.
  static void apply_override(nlohmann::json& j, const std::string& assignment);

  std::string hash() const;
  // Stage hashes cover only the parameters that stage depends on.
  std::string extract_hash() const;
  std::string describe_hash() const;
  std::string codebook_hash() const;
  std::string model_hash() const;
};

}  // namespace tsh
