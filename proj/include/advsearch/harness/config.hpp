#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "advsearch/errors.hpp"

namespace advsearch::harness {

// Parsed INI experiment description. Sections and keys are whitelisted;
// typed getters report the offending line on conversion errors.
//
//   [experiment]  kind, test, criterion, name
//   [params]      instance and run parameters
//   [constants]   tuning-constant overrides
//   [output]      path, csv
class ExperimentConfig {
 public:
  static inline const std::vector<std::string> kKinds = {"ann-bench", "reg-bench", "attack", "match-demo",
                                                         "dist-check"};

  static ExperimentConfig parse(const std::string& text, const std::string& source = "<config>") {
    ExperimentConfig cfg;
    cfg.text_ = text;
    cfg.source_ = source;
    std::istringstream is(text);
    try {
      boost::property_tree::ini_parser::read_ini(is, cfg.tree_);
    } catch (const boost::property_tree::ini_parser::ini_parser_error& e) {
      throw FormatError(source + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    cfg.validate_keys();
    cfg.kind_ = cfg.get_string("experiment", "kind");
    if (std::find(kKinds.begin(), kKinds.end(), cfg.kind_) == kKinds.end())
      throw cfg.field_error("experiment", "kind", "unknown experiment kind '" + cfg.kind_ + "'");
    cfg.test_ = cfg.get_string("experiment", "test", "");
    return cfg;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  const std::string& kind() const { return kind_; }
  const std::string& test() const { return test_; }
  const std::string& text() const { return text_; }
  const std::string& source() const { return source_; }

  bool has(const std::string& section, const std::string& key) const {
    return tree_.get_optional<std::string>(section + "." + key).has_value();
  }

  std::string get_string(const std::string& section, const std::string& key,
                         std::optional<std::string> fallback = std::nullopt) const {
    if (auto v = tree_.get_optional<std::string>(section + "." + key)) return trim(*v);
    if (fallback) return *fallback;
    throw field_error(section, key, "missing required key");
  }

  double get_double(const std::string& section, const std::string& key,
                    std::optional<double> fallback = std::nullopt) const {
    if (!has(section, key)) {
      if (fallback) return *fallback;
      throw field_error(section, key, "missing required key");
    }
    const std::string s = get_string(section, key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw field_error(section, key, "expected a number, got '" + s + "'");
    }
  }

  std::uint64_t get_uint(const std::string& section, const std::string& key,
                         std::optional<std::uint64_t> fallback = std::nullopt) const {
    if (!has(section, key)) {
      if (fallback) return *fallback;
      throw field_error(section, key, "missing required key");
    }
    return parse_uint(section, key, get_string(section, key));
  }

  // Comma-separated unsigned list; "a..b" expands to the inclusive range.
  std::vector<std::uint64_t> get_uint_list(const std::string& section, const std::string& key,
                                           std::optional<std::vector<std::uint64_t>> fallback = std::nullopt) const {
    if (!has(section, key)) {
      if (fallback) return *fallback;
      throw field_error(section, key, "missing required key");
    }
    std::vector<std::uint64_t> out;
    std::stringstream ss(get_string(section, key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (auto dots = item.find(".."); dots != std::string::npos) {
        const auto lo = parse_uint(section, key, item.substr(0, dots));
        const auto hi = parse_uint(section, key, item.substr(dots + 2));
        if (hi < lo) throw field_error(section, key, "empty range '" + item + "'");
        for (auto v = lo; v <= hi; ++v) out.push_back(v);
      } else {
        out.push_back(parse_uint(section, key, item));
      }
    }
    if (out.empty()) throw field_error(section, key, "empty list");
    return out;
  }

  // Programmatic overrides (CLI flags); the echoed text is left untouched.
  void set(const std::string& section, const std::string& key, const std::string& value) {
    check_known(section, key);
    tree_.put(section + "." + key, value);
  }

  FormatError field_error(const std::string& section, const std::string& key, const std::string& msg) const {
    return FormatError(source_ + ":" + std::to_string(line_of(section, key)) + ": [" + section + "] " + key + ": " +
                       msg);
  }

 private:
  static inline const std::map<std::string, std::set<std::string>> kAllowed = {
      {"experiment", {"kind", "test", "criterion", "name"}},
      {"params",
       {"n", "d", "c", "r", "kappa", "kappas", "alpha", "alpha_eff", "beta", "beta_prime", "T", "s", "lambda",
        "trials", "seeds", "runs", "steps", "queries", "builds", "ops", "delete_fraction", "residual", "spread",
        "eps_dp", "sample_multiplier", "shift_sparsity", "batch", "cases", "scale", "batches", "samples",
        "metric", "arrivals", "noise", "reps", "threshold", "kappa_bound", "eta_u", "eta_b", "mode",
        "initial_flips", "workers", "path_budget", "s_values", "n_values", "calls", "slope_limit"}},
      {"constants",
       {"C_l", "C_L", "C_q", "C_w", "C_jl", "jl_dim", "C_r", "C_m", "C_p", "C_pre", "C_a", "theta", "grid_tau",
        "grid_min", "grid_max", "cache_capacity"}},
      {"output", {"path", "csv"}},
  };

  void check_known(const std::string& section, const std::string& key) const {
    auto it = kAllowed.find(section);
    if (it == kAllowed.end())
      throw FormatError(source_ + ":" + std::to_string(line_of(section, "")) + ": unknown section [" + section + "]");
    if (!it->second.count(key)) throw field_error(section, key, "unknown key");
  }

  void validate_keys() const {
    for (const auto& [section, sub] : tree_) {
      if (sub.empty() && !sub.data().empty())
        throw FormatError(source_ + ":" + std::to_string(line_of("", section)) + ": key '" + section +
                          "' outside any section");
      for (const auto& [key, v] : sub) check_known(section, key);
    }
  }

  std::uint64_t parse_uint(const std::string& section, const std::string& key, std::string s) const {
    s = trim(s);
    try {
      std::size_t pos = 0;
      if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) {
        // Accept exact scientific integers such as 1e6.
        const double dv = std::stod(s, &pos);
        if (pos != s.size() || dv < 0 || dv != static_cast<double>(static_cast<std::uint64_t>(dv)))
          throw std::invalid_argument(s);
        return static_cast<std::uint64_t>(dv);
      }
      return v;
    } catch (const std::exception&) {
      throw field_error(section, key, "expected a non-negative integer, got '" + s + "'");
    }
  }

  // Line of `key` inside `[section]` in the original text (0 if absent).
  std::size_t line_of(const std::string& section, const std::string& key) const {
    std::istringstream is(text_);
    std::string line, current;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      const std::string t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        current = t.substr(1, t.size() - 2);
        if (key.empty() && current == section) return n;
        continue;
      }
      const auto eq = t.find('=');
      if (current == section && eq != std::string::npos && trim(t.substr(0, eq)) == key) return n;
    }
    return 0;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  boost::property_tree::ptree tree_;
  std::string text_;
  std::string source_;
  std::string kind_;
  std::string test_;
};

}  // namespace advsearch::harness
