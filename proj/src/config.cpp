#include "tsh/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "tsh/binio.hpp"
#include "tsh/error.hpp"
#include "tsh/hash.hpp"

namespace tsh {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_scalar(const std::string& raw, bool bare_strings) {
  const std::string s = trim(raw);
  if (s.empty()) throw ValidationError("config: empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ValidationError("config: unterminated string: " + s);
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char c = s[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::size_t pos = 0;
  const bool looks_int = s.find_first_of(".eE") == std::string::npos;
  try {
    if (looks_int) {
      const long long v = std::stoll(s, &pos);
      if (pos == s.size()) return v;
    } else {
      const double v = std::stod(s, &pos);
      if (pos == s.size()) return v;
    }
  } catch (const std::exception&) {
  }
  if (bare_strings) return s;
  throw ValidationError("config: cannot parse value: " + s);
}

nlohmann::json parse_value(const std::string& raw, bool bare_strings) {
  const std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ValidationError("config: unterminated array: " + s);
    nlohmann::json arr = nlohmann::json::array();
    const std::string body = trim(s.substr(1, s.size() - 2));
    if (body.empty()) return arr;
    std::string item;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!trim(item).empty()) arr.push_back(parse_scalar(item, bare_strings));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) arr.push_back(parse_scalar(item, bare_strings));
    return arr;
  }
  return parse_scalar(s, bare_strings);
}

void check_keys(const nlohmann::json& given, const nlohmann::json& defaults) {
  if (!given.is_object()) throw ValidationError("config: top level must be a table");
  for (const auto& [section, body] : given.items()) {
    if (!defaults.contains(section)) throw ValidationError("config: unknown section [" + section + "]");
    if (!body.is_object()) throw ValidationError("config: [" + section + "] must be a table");
    for (const auto& [key, _] : body.items()) {
      if (!defaults[section].contains(key)) throw ValidationError("config: unknown key " + section + "." + key);
    }
  }
}

nlohmann::json merged(const nlohmann::json& defaults, const nlohmann::json& given, const char* section) {
  nlohmann::json out = defaults.at(section);
  if (given.contains(section)) {
    for (const auto& [k, v] : given.at(section).items()) out[k] = v;
  }
  return out;
}

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text) {
  nlohmann::json out = nlohmann::json::object();
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ValidationError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!out.contains(section)) out[section] = nlohmann::json::object();
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (out.contains(section) && out[section].contains(key)) {
      throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    try {
      out[section][key] = parse_value(s.substr(eq + 1), false);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json parse_toml_value(const std::string& text) { return parse_value(text, true); }

void RunConfig::validate() const {
  flow.validate();
  track.validate();
  descriptor.validate();
  discovery.validate();
  if (!(svm.C > 0)) throw ValidationError("svm: C must be > 0");
  if (svm.folds < 2) throw ValidationError("svm: folds must be >= 2");
  if (svm.C_grid.empty()) throw ValidationError("svm: C_grid must not be empty");
  if (codebook_K < 2) throw ValidationError("run: codebook_K must be >= 2");
  if (pipeline != "A" && pipeline != "B") throw ValidationError("run: pipeline must be A or B");
  if (!(eval.train_fraction > 0 && eval.train_fraction < 1)) throw ValidationError("eval: train_fraction must be in (0,1)");
  for (double s : eval.snippet_lengths) {
    if (!(s > 0)) throw ValidationError("eval: snippet lengths must be > 0");
  }
  for (int k : eval.codebook_sizes) {
    if (k < 2) throw ValidationError("eval: codebook sizes must be >= 2");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {{"run",
           {{"seed", seed},
            {"pipeline", pipeline},
            {"codebook_K", codebook_K},
            {"cache_dir", cache_dir.string()},
            {"manifest", manifest.string()},
            {"report_dir", report_dir.string()},
            {"workers", workers}}},
          {"flow", flow.to_json()},
          {"track", track.to_json()},
          {"descriptor", descriptor.to_json()},
          {"discovery", discovery.to_json()},
          {"svm", {{"C", svm.C}, {"cross_validate", svm.cross_validate}, {"C_grid", svm.C_grid}, {"folds", svm.folds}}},
          {"eval",
           {{"set_name", eval.set_name},
            {"snippet_lengths", eval.snippet_lengths},
            {"codebook_sizes", eval.codebook_sizes},
            {"seeds", eval.seeds},
            {"resplit", eval.resplit},
            {"train_fraction", eval.train_fraction}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& given) {
  const auto defaults = RunConfig{}.to_json();
  check_keys(given, defaults);
  RunConfig c;
  try {
    const auto run = merged(defaults, given, "run");
    c.seed = run.at("seed").get<std::uint64_t>();
    c.pipeline = run.at("pipeline").get<std::string>();
    c.codebook_K = run.at("codebook_K").get<int>();
    c.cache_dir = run.at("cache_dir").get<std::string>();
    c.manifest = run.at("manifest").get<std::string>();
    c.report_dir = run.at("report_dir").get<std::string>();
    c.workers = run.at("workers").get<unsigned>();
    c.flow = FlowParams::from_json(merged(defaults, given, "flow"));
    c.track = TrackParams::from_json(merged(defaults, given, "track"));
    c.descriptor = DescriptorParams::from_json(merged(defaults, given, "descriptor"));
    c.discovery = DiscoveryParams::from_json(merged(defaults, given, "discovery"));
    const auto svm = merged(defaults, given, "svm");
    c.svm.C = svm.at("C").get<double>();
    c.svm.cross_validate = svm.at("cross_validate").get<bool>();
    c.svm.C_grid = svm.at("C_grid").get<std::vector<double>>();
    c.svm.folds = svm.at("folds").get<int>();
    const auto ev = merged(defaults, given, "eval");
    c.eval.set_name = ev.at("set_name").get<std::string>();
    c.eval.snippet_lengths = ev.at("snippet_lengths").get<std::vector<double>>();
    c.eval.codebook_sizes = ev.at("codebook_sizes").get<std::vector<int>>();
    c.eval.seeds = ev.at("seeds").get<std::vector<std::uint64_t>>();
    c.eval.resplit = ev.at("resplit").get<bool>();
    c.eval.train_fraction = ev.at("train_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: wrong value type: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ValidationError("override must look like section.key=value: " + assignment);
  }
  const std::string section = trim(assignment.substr(0, dot));
  const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
  j[section][key] = parse_toml_value(assignment.substr(eq + 1));
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) j = parse_toml_subset(binio::read_all(path));
  for (const auto& o : overrides) apply_override(j, o);
  if (j.contains("")) {
    if (!j[""].empty()) throw ValidationError("config: keys must appear under a [section]");
    j.erase("");
  }
  return from_json(j);
}

std::string RunConfig::hash() const {
  auto j = to_json();
  // Worker count and output locations do not change any result.
  j["run"].erase("workers");
  j["run"].erase("cache_dir");
  j["run"].erase("report_dir");
  return hash_hex(j.dump());
}

std::string RunConfig::extract_hash() const {
  return hash_hex(nlohmann::json{{"stage", "extract"}, {"flow", flow.to_json()}, {"track", track.to_json()}}.dump());
}

std::string RunConfig::describe_hash() const {
  return hash_hex(
      nlohmann::json{{"stage", "describe"}, {"extract", extract_hash()}, {"descriptor", descriptor.to_json()}}.dump());
}

std::string RunConfig::codebook_hash() const {
  return hash_hex(nlohmann::json{{"stage", "codebook"},
                                 {"describe", describe_hash()},
                                 {"K", codebook_K},
                                 {"seed", seed},
                                 {"manifest", manifest.string()}}
                      .dump());
}

std::string RunConfig::model_hash() const {
  return hash_hex(nlohmann::json{{"stage", "train"},
                                 {"codebook", codebook_hash()},
                                 {"C", svm.C},
                                 {"cross_validate", svm.cross_validate},
                                 {"C_grid", svm.C_grid},
                                 {"folds", svm.folds}}
                      .dump());
}

}  // namespace tsh
