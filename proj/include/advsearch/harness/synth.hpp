#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advsearch/adversary.hpp"
#include "advsearch/instances.hpp"
#include "advsearch/io.hpp"
#include "advsearch/least_squares.hpp"

namespace advsearch::harness {

using json = nlohmann::json;

struct SynthParams {
  std::string type = "planted-hamming";  // planted-hamming | planted-l2 | isolated | regression
  std::size_t n = 1024;
  std::size_t d = 64;
  double c = 2.0;
  double r = 4.0;
  std::size_t queries = 100;
  double spread = 1.0;     // planted-l2 coordinate scale
  double kappa = 4.0;      // regression
  double residual = 1.0;   // regression optimal cost
  std::uint64_t seed = 1;
};

// Writes <prefix>.* files and returns the list of paths written.
inline std::vector<std::string> synth_instance(const SynthParams& p, const std::string& prefix) {
  Rng rng(RandomSeed{p.seed});
  std::vector<std::string> written;
  auto write_meta = [&](const json& meta) {
    const std::string path = prefix + ".meta.json";
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f << meta.dump(2) << '\n';
    written.push_back(path);
  };
  const json common = {{"type", p.type}, {"n", p.n}, {"d", p.d}, {"c", p.c}, {"r", p.r}, {"seed", p.seed}};

  if (p.type == "planted-hamming") {
    if (p.r != std::floor(p.r) || p.r < 1) throw ParameterError("synth: Hamming r must be a positive integer");
    auto inst = make_planted_hamming(p.n, p.d, p.c, static_cast<std::size_t>(p.r), p.queries, rng);
    io::save_hamming(prefix + ".data.bin", inst.data);
    io::save_hamming(prefix + ".queries.bin", inst.queries);
    written.push_back(prefix + ".data.bin");
    written.push_back(prefix + ".queries.bin");
    json meta = common;
    meta["targets"] = inst.targets;
    write_meta(meta);
  } else if (p.type == "planted-l2") {
    auto inst = make_planted_l2(p.n, p.d, p.c, p.r, p.spread, p.queries, rng);
    io::save_l2(prefix + ".data.bin", inst.data);
    io::save_l2(prefix + ".queries.bin", inst.queries);
    written.push_back(prefix + ".data.bin");
    written.push_back(prefix + ".queries.bin");
    json meta = common;
    meta["targets"] = inst.targets;
    meta["spread"] = p.spread;
    meta["note"] = "coordinates are stored as 32-bit floats";
    write_meta(meta);
  } else if (p.type == "isolated") {
    if (p.r != std::floor(p.r) || p.r < 1) throw ParameterError("synth: Hamming r must be a positive integer");
    auto inst = make_isolated_instance(p.n, p.d, p.c, static_cast<std::size_t>(p.r), rng);
    io::save_hamming(prefix + ".data.bin", inst.data);
    written.push_back(prefix + ".data.bin");
    json meta = common;
    meta["isolated_id"] = inst.isolated_id;
    meta["isolation_distance"] = isolation_distance(inst.data, inst.isolated_id);
    write_meta(meta);
  } else if (p.type == "regression") {
    auto inst = make_regression_instance(p.n, p.d, p.kappa, p.residual, p.kappa, rng);
    io::save_problem(prefix + ".problem.bin", inst.problem);
    written.push_back(prefix + ".problem.bin");
    json meta = common;
    meta.erase("c");
    meta.erase("r");
    meta["x_star"] = vector_to_json(inst.x_star);
    meta["optimal_cost"] = inst.optimal_cost;
    meta["kappa"] = condition_number(inst.problem.U);
    write_meta(meta);
  } else {
    throw ParameterError("synth: unknown instance type '" + p.type + "'");
  }
  return written;
}

// r * ratio^i for i in [0, count).
inline std::vector<double> geometric_ladder(double r, double ratio, std::size_t count) {
  if (!(r > 0) || !(ratio > 1) || count == 0) throw ParameterError("ladder: need r > 0, ratio > 1, count >= 1");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = r * std::pow(ratio, static_cast<double>(i));
  return out;
}

template <class Dataset>
std::size_t count_within(const Dataset& data, typename Dataset::PointView v, double radius) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.distance(v, data.point(i)) <= radius) ++count;
  return count;
}

// Smallest level whose exact ball around v is nonempty, by binary search over
// ascending radii with exhaustive counting. nullopt if even the top level is empty.
template <class Dataset>
std::optional<std::size_t> radius_ladder_search(const Dataset& data, typename Dataset::PointView v,
                                                const std::vector<double>& levels) {
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i - 1] < levels[i])) throw ParameterError("ladder: levels must be strictly ascending");
  if (levels.empty()) return std::nullopt;
  auto nonempty = [&](std::size_t level) { return count_within(data, v, levels[level]) > 0; };
  if (!nonempty(levels.size() - 1)) return std::nullopt;
  std::size_t lo = 0, hi = levels.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (nonempty(mid)) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

}  // namespace advsearch::harness
