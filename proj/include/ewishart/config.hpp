#pragma once

// Experiment configuration: an INI file with sections
//
//   [problem]     p, n, K, nu, model (wishart | t-wishart), classes
//   [estimation]  algorithm (fp | rsd | rcg), tolerance, max_iterations,
//                 init (identity | wishart_mle), cg_rule (pr+ | fr),
//                 retraction (second_order | exponential), check_model
//   [experiment]  repetitions, seed, condition_number, K_grid, n_grid,
//                 threads, output
//   [clustering]  clusters, inits, label_tolerance, max_sweeps
//   [data]        samples, train, test
//
// Every key is optional. Unknown sections or keys are rejected. to_ini()
// writes the effective configuration back out; parsing its output gives an
// identical ExperimentConfig.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ewishart/error.hpp"
#include "ewishart/estimation.hpp"
#include "ewishart/io.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

struct ExperimentConfig {
  // [problem]
  int p = 10;
  int n = 100;
  int K = 300;
  double nu = 10.0;
  std::string model = "t-wishart";
  int classes = 1;

  // [estimation]
  FitOptions fit;

  // [experiment]
  int repetitions = 200;
  std::uint64_t seed = 1;
  double condition_number = 10.0;
  std::vector<int> K_grid{10, 30, 100, 300, 1000};
  std::vector<int> n_grid;  // empty: just n
  int threads = 1;          // 0: one per hardware thread
  std::string output = "out";

  // [clustering]
  int clusters = 2;
  int inits = 10;
  double label_tolerance = 1e-3;
  int max_sweeps = 100;

  // [data]
  std::string samples;
  std::string train;
  std::string test;

  /// Throws ConfigError on the first violated invariant.
  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError("config: " + what);
    };
    require(p >= 1, "p must be >= 1");
    require(n > p, "n must exceed p");
    require(K >= 1, "K must be >= 1");
    require(nu > 0.0 && std::isfinite(nu), "nu must be positive");
    require(model == "wishart" || model == "t-wishart", "model must be wishart or t-wishart");
    require(classes >= 1, "classes must be >= 1");
    require(repetitions >= 1, "repetitions must be >= 1");
    require(condition_number >= 1.0 && std::isfinite(condition_number), "condition_number must be >= 1");
    require(!K_grid.empty(), "K_grid must not be empty");
    for (std::size_t i = 0; i < K_grid.size(); ++i) {
      require(K_grid[i] >= 1 && (i == 0 || K_grid[i] > K_grid[i - 1]), "K_grid must be positive and ascending");
    }
    for (int v : n_grid) require(v > p, "every n_grid entry must exceed p");
    require(threads >= 0, "threads must be >= 0");
    require(clusters >= 1 && inits >= 1 && max_sweeps >= 1, "clusters, inits and max_sweeps must be >= 1");
    require(label_tolerance >= 0.0, "label_tolerance must be >= 0");
    try {
      fit.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  DensityGenerator generator() const {
    return model == "wishart" ? wishart_generator() : t_wishart_generator(nu);
  }

  EWModel ew_model() const { return EWModel(generator(), n, p); }
  EWModel ew_model(int n_override, int p_override) const { return EWModel(generator(), n_override, p_override); }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string_view to_string(CgRule r) { return r == CgRule::fletcher_reeves ? "fr" : "pr+"; }
inline std::string_view to_string(InitKind k) { return k == InitKind::identity ? "identity" : "wishart_mle"; }
inline std::string_view to_string(RetractionKind r) {
  return r == RetractionKind::exponential ? "exponential" : "second_order";
}

class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {
    static const std::map<std::string, std::set<std::string>> known{
        {"problem", {"p", "n", "K", "nu", "model", "classes"}},
        {"estimation", {"algorithm", "tolerance", "max_iterations", "init", "cg_rule", "retraction", "check_model"}},
        {"experiment", {"repetitions", "seed", "condition_number", "K_grid", "n_grid", "threads", "output"}},
        {"clustering", {"clusters", "inits", "label_tolerance", "max_sweeps"}},
        {"data", {"samples", "train", "test"}},
    };
    for (const auto& [section, body] : tree_) {
      const auto it = known.find(section);
      if (it == known.end()) {
        throw ConfigError("config: unknown section or unsectioned key '" + section + "'");
      }
      for (const auto& [key, value] : body) {
        if (!it->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  bool get(const std::string& path, std::string& out) const {
    const auto v = tree_.get_optional<std::string>(path);
    if (!v) return false;
    out = trim(*v);
    return true;
  }

  void get_int(const std::string& path, int& out) const {
    std::string s;
    if (!get(path, s)) return;
    out = static_cast<int>(to_int(path, s));
  }

  void get_u64(const std::string& path, std::uint64_t& out) const {
    std::string s;
    if (!get(path, s)) return;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError("config: " + path + " must be an unsigned 64-bit integer, got '" + s + "'");
    }
    out = v;
  }

  void get_double(const std::string& path, double& out) const {
    std::string s;
    if (!get(path, s)) return;
    try {
      std::size_t used = 0;
      out = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("config: " + path + " must be a number, got '" + s + "'");
    }
  }

  void get_bool(const std::string& path, bool& out) const {
    std::string s;
    if (!get(path, s)) return;
    if (s == "true" || s == "1" || s == "yes") {
      out = true;
    } else if (s == "false" || s == "0" || s == "no") {
      out = false;
    } else {
      throw ConfigError("config: " + path + " must be true or false, got '" + s + "'");
    }
  }

  void get_int_list(const std::string& path, std::vector<int>& out) const {
    std::string s;
    if (!get(path, s)) return;
    out.clear();
    if (s.empty()) return;
    for (const auto& item : split(s, ',')) out.push_back(static_cast<int>(to_int(path, item)));
  }

 private:
  static long long to_int(const std::string& path, const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError("config: " + path + " must be an integer, got '" + s + "'");
    }
    return v;
  }

  const boost::property_tree::ptree& tree_;
};

}  // namespace detail

/// Parses INI text. Throws ConfigError on syntax errors, unknown keys or
/// invalid values.
inline ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  const detail::ConfigReader r(tree);
  ExperimentConfig c;
  r.get_int("problem.p", c.p);
  r.get_int("problem.n", c.n);
  r.get_int("problem.K", c.K);
  r.get_double("problem.nu", c.nu);
  r.get("problem.model", c.model);
  r.get_int("problem.classes", c.classes);

  std::string s;
  if (r.get("estimation.algorithm", s)) {
    try {
      c.fit.algorithm = parse_algorithm(s);
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  r.get_double("estimation.tolerance", c.fit.tolerance);
  r.get_int("estimation.max_iterations", c.fit.max_iterations);
  if (r.get("estimation.init", s)) {
    if (s == "identity") {
      c.fit.init = InitKind::identity;
    } else if (s == "wishart_mle") {
      c.fit.init = InitKind::wishart_mle;
    } else {
      throw ConfigError("config: estimation.init must be identity or wishart_mle");
    }
  }
  if (r.get("estimation.cg_rule", s)) {
    if (s == "pr+") {
      c.fit.cg_rule = CgRule::polak_ribiere_plus;
    } else if (s == "fr") {
      c.fit.cg_rule = CgRule::fletcher_reeves;
    } else {
      throw ConfigError("config: estimation.cg_rule must be pr+ or fr");
    }
  }
  if (r.get("estimation.retraction", s)) {
    if (s == "second_order") {
      c.fit.retraction = RetractionKind::second_order;
    } else if (s == "exponential") {
      c.fit.retraction = RetractionKind::exponential;
    } else {
      throw ConfigError("config: estimation.retraction must be second_order or exponential");
    }
  }
  r.get_bool("estimation.check_model", c.fit.check_model);

  r.get_int("experiment.repetitions", c.repetitions);
  r.get_u64("experiment.seed", c.seed);
  r.get_double("experiment.condition_number", c.condition_number);
  r.get_int_list("experiment.K_grid", c.K_grid);
  r.get_int_list("experiment.n_grid", c.n_grid);
  r.get_int("experiment.threads", c.threads);
  r.get("experiment.output", c.output);

  r.get_int("clustering.clusters", c.clusters);
  r.get_int("clustering.inits", c.inits);
  r.get_double("clustering.label_tolerance", c.label_tolerance);
  r.get_int("clustering.max_sweeps", c.max_sweeps);

  r.get("data.samples", c.samples);
  r.get("data.train", c.train);
  r.get("data.test", c.test);

  c.validate();
  return c;
}

/// Reads and parses a config file. Throws IoError when it cannot be read.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

/// Ordered (section.key, value) pairs of the effective configuration.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using detail::format_double;
  return {
      {"problem.p", std::to_string(c.p)},
      {"problem.n", std::to_string(c.n)},
      {"problem.K", std::to_string(c.K)},
      {"problem.nu", format_double(c.nu)},
      {"problem.model", c.model},
      {"problem.classes", std::to_string(c.classes)},
      {"estimation.algorithm", std::string(to_string(c.fit.algorithm))},
      {"estimation.tolerance", format_double(c.fit.tolerance)},
      {"estimation.max_iterations", std::to_string(c.fit.max_iterations)},
      {"estimation.init", std::string(detail::to_string(c.fit.init))},
      {"estimation.cg_rule", std::string(detail::to_string(c.fit.cg_rule))},
      {"estimation.retraction", std::string(detail::to_string(c.fit.retraction))},
      {"estimation.check_model", c.fit.check_model ? "true" : "false"},
      {"experiment.repetitions", std::to_string(c.repetitions)},
      {"experiment.seed", std::to_string(c.seed)},
      {"experiment.condition_number", format_double(c.condition_number)},
      {"experiment.K_grid", detail::join_ints(c.K_grid)},
      {"experiment.n_grid", detail::join_ints(c.n_grid)},
      {"experiment.threads", std::to_string(c.threads)},
      {"experiment.output", c.output},
      {"clustering.clusters", std::to_string(c.clusters)},
      {"clustering.inits", std::to_string(c.inits)},
      {"clustering.label_tolerance", format_double(c.label_tolerance)},
      {"clustering.max_sweeps", std::to_string(c.max_sweeps)},
      {"data.samples", c.samples},
      {"data.train", c.train},
      {"data.test", c.test},
  };
}

inline std::string to_ini(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& [path, value] : config_entries(c)) {
    const auto dot = path.find('.');
    const std::string sec = path.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += path.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

/// The same entries as "# key=value" comment lines, for CSV headers.
inline std::string config_comment(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [path, value] : config_entries(c)) out += "# " + path + "=" + value + "\n";
  return out;
}

}  // namespace ewishart
