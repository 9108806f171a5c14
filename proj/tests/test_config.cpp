#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "tsh/config.hpp"
#include "tsh/error.hpp"

using namespace tsh;

namespace {

std::filesystem::path write_file(const tsh::testing::TempDir& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("TOML subset: sections, comments, scalars and arrays") {
  const auto j = parse_toml_subset(R"(# leading comment
top = 1
[run]
seed = 42          # trailing comment
pipeline = "B"
[eval]
snippet_lengths = [0.5, 1, 2.0]
resplit = false
set_name = "a # not a comment"
)");
  CHECK(j[""]["top"] == 1);
  CHECK(j["run"]["seed"] == 42);
  CHECK(j["run"]["pipeline"] == "B");
  CHECK(j["eval"]["snippet_lengths"].size() == 3);
  CHECK(j["eval"]["snippet_lengths"][0] == 0.5);
  CHECK(j["eval"]["resplit"] == false);
  CHECK(j["eval"]["set_name"] == "a # not a comment");
  CHECK_THROWS_AS(parse_toml_subset("[run\nseed = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_toml_subset("[run]\nseed 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_toml_subset("[run]\nseed = 1\nseed = 2\n"), ValidationError);
}

TEST_CASE("override values use the same grammar") {
  CHECK(parse_toml_value("3") == 3);
  CHECK(parse_toml_value("2.5") == 2.5);
  CHECK(parse_toml_value("true") == true);
  CHECK(parse_toml_value("[1, 2]") == nlohmann::json::array({1, 2}));
  CHECK(parse_toml_value("B") == "B");
  CHECK(parse_toml_value("\"x y\"") == "x y");
}

TEST_CASE("a config file plus overrides loads and validates") {
  tsh::testing::TempDir dir("config_load");
  const auto p = write_file(dir, "c.toml", "[run]\ncodebook_K = 20\n[track]\nM = 6\n[svm]\ncross_validate = true\n");
  const auto c = RunConfig::load(p, {"run.seed=7", "descriptor.N=3"});
  CHECK(c.codebook_K == 20);
  CHECK(c.track.M == 6);
  CHECK(c.svm.cross_validate);
  CHECK(c.seed == 7);
  CHECK(c.descriptor.N == 3);
  CHECK(c.flow.window_size == FlowParams{}.window_size);
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("unknown sections, unknown keys and invalid values are rejected") {
  tsh::testing::TempDir dir("config_bad");
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "a.toml", "[bogus]\nx = 1\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "b.toml", "[run]\nsed = 1\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "c.toml", "[flow]\nwindow_size = 4\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "d.toml", "[run]\npipeline = \"C\"\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "e.toml", "[run]\nseed = \"x\"\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load(write_file(dir, "f.toml", "seed = 1\n")), ValidationError);
  CHECK_THROWS_AS(RunConfig::load({}, {"runseed=1"}), ValidationError);
}

TEST_CASE("the run hash ignores worker count and cache location only") {
  RunConfig a, b;
  b.workers = 8;
  b.cache_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.seed = 1;
  CHECK_FALSE(a.hash() == b.hash());
}

TEST_CASE("stage hashes cover only their upstream parameters") {
  RunConfig a;
  RunConfig b = a;
  b.svm.C = 10;
  CHECK(a.codebook_hash() == b.codebook_hash());
  CHECK_FALSE(a.model_hash() == b.model_hash());

  b = a;
  b.descriptor.bin_edges_l.back() = 0.05;
  CHECK(a.extract_hash() == b.extract_hash());
  CHECK_FALSE(a.describe_hash() == b.describe_hash());
  CHECK_FALSE(a.codebook_hash() == b.codebook_hash());

  b = a;
  b.track.M = 4;
  CHECK_FALSE(a.extract_hash() == b.extract_hash());
  CHECK_FALSE(a.model_hash() == b.model_hash());

  b = a;
  b.discovery.alpha = 0.3;
  CHECK(a.codebook_hash() == b.codebook_hash());
  CHECK_FALSE(a.hash() == b.hash());
}
