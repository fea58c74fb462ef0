#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "advsearch/adaptive_ann.hpp"
#include "advsearch/adaptive_reg.hpp"
#include "advsearch/dataset.hpp"
#include "advsearch/errors.hpp"
#include "advsearch/instances.hpp"
#include "advsearch/least_squares.hpp"
#include "advsearch/lsh.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Transcript: every adversary/structure interaction, in order.

struct TranscriptStep {
  std::uint64_t index = 0;
  std::string kind;  // "query" or "update"
  json input;
  json output;
};

class Transcript {
 public:
  void record(std::string kind, json input, json output) {
    steps_.push_back({steps_.size(), std::move(kind), std::move(input), std::move(output)});
  }

  const std::vector<TranscriptStep>& steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }
  std::size_t count(const std::string& kind) const {
    return static_cast<std::size_t>(
        std::count_if(steps_.begin(), steps_.end(), [&](const auto& s) { return s.kind == kind; }));
  }

  void write_jsonl(std::ostream& os) const {
    for (const auto& s : steps_)
      os << json{{"step", s.index}, {"kind", s.kind}, {"input", s.input}, {"output", s.output}}.dump() << '\n';
  }

  static Transcript read_jsonl(std::istream& is) {
    Transcript t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError("transcript line " + std::to_string(lineno) + ": " + e.what());
      }
      if (!j.contains("step") || !j.contains("kind"))
        throw FormatError("transcript line " + std::to_string(lineno) + ": missing step or kind");
      const auto idx = j["step"].get<std::uint64_t>();
      if (idx != t.steps_.size())
        throw FormatError("transcript line " + std::to_string(lineno) + ": step indices must increase by one");
      t.steps_.push_back({idx, j["kind"].get<std::string>(), j.value("input", json()), j.value("output", json())});
    }
    return t;
  }

 private:
  std::vector<TranscriptStep> steps_;
};

inline json answer_to_json(const AnnAnswer& a) {
  if (a.is_null()) return json{{"id", nullptr}};
  return json{{"id", *a.id}, {"distance", a.distance}};
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

// ---------------------------------------------------------------------------
// Isolated instances and the bit-flip attack.

struct IsolatedInstance {
  HammingDataset data;
  PointId isolated_id = 0;
  double c = 2;
  double r = 1;
};

// Minimum distance from point `id` to every other point.
inline double isolation_distance(const HammingDataset& data, PointId id) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (i + 1 != id) best = std::min(best, data.distance(data.by_id(id), data.point(i)));
  return best;
}

// z is uniform; the other n-1 points are scattered within d/8 flips of a
// center at distance d/2 from z. Verified exhaustively.
inline IsolatedInstance make_isolated_instance(std::size_t n, std::size_t d, double c, std::size_t r, Rng& rng) {
  if (n == 0) throw ParameterError("isolated instance: n must be positive");
  if (!(c > 1) || r == 0) throw ParameterError("isolated instance: need c > 1 and r >= 1");
  if (!(2.0 * c * static_cast<double>(r) < static_cast<double>(d)))
    throw ParameterError("isolated instance: requires 2cr < d");
  const std::size_t spread = std::max<std::size_t>(1, d / 8);
  for (int attempt = 0; attempt < 100; ++attempt) {
    IsolatedInstance inst{HammingDataset(d), 0, c, static_cast<double>(r)};
    const auto z = random_bits(d, rng);
    auto center = z;
    for (std::size_t j : sample_distinct(d, d / 2, rng)) HammingDataset::flip(center, j);
    const std::size_t slot = rng.uniform_index(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == slot) {
        inst.isolated_id = inst.data.push_back(z);
        continue;
      }
      auto p = center;
      for (std::size_t j : sample_distinct(d, rng.uniform_index(spread + 1), rng)) HammingDataset::flip(p, j);
      inst.data.push_back(p);
    }
    if (isolation_distance(inst.data, inst.isolated_id) >= 2.0 * c * static_cast<double>(r)) return inst;
  }
  throw InstanceError("isolated instance: construction failed after 100 attempts");
}

using AnnOracle = std::function<AnnAnswer(std::span<const std::uint64_t>)>;

// Closest point among everything a single oblivious copy reports.
template <class Lsh>
AnnOracle lsh_oracle(const Lsh& index) {
  return [&index](std::span<const std::uint64_t> q) {
    AnnAnswer best;
    for (const auto& nb : index.query_all(q))
      if (best.is_null() || nb.distance < best.distance) best = {nb.id, nb.distance};
    return best;
  };
}

// Deterministic exhaustive (c, r)-ANN: the nearest point if it is within cr.
inline AnnOracle exact_oracle(const HammingDataset& data, double c, double r) {
  return [&data, c, r](std::span<const std::uint64_t> q) {
    AnnAnswer best;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double dist = data.distance(q, data.point(i));
      if (dist <= c * r && (best.is_null() || dist < best.distance))
        best = {static_cast<PointId>(i + 1), dist};
    }
    return best;
  };
}

template <class Index>
AnnOracle adaptive_oracle(Index& index, Rng& rng) {
  return [&index, &rng](std::span<const std::uint64_t> q) { return index.query(q, rng); };
}

struct AttackConfig {
  double C_a = 2.0;
  std::uint64_t lambda = 16;
  std::size_t initial_flips = 0;  // 0 selects floor(cr)
};

// ceil(C_a * log2(cr) * lambda)
inline std::uint64_t attack_budget(double c, double r, std::uint64_t lambda, double C_a) {
  return static_cast<std::uint64_t>(std::ceil(C_a * std::log2(std::max(2.0, c * r)) * static_cast<double>(lambda)));
}

struct AttackResult {
  bool success = false;
  std::optional<HammingDataset::Point> query;  // the false-negative point
  std::vector<std::size_t> flips;               // coordinates of z flipped to reach it
  std::uint64_t queries_used = 0;
  std::uint64_t restarts = 0;
  Transcript transcript;
};

// Starting from z, flip a random set F of about cr coordinates. If the oracle
// misses z there, F hits every hash the oracle relies on; shrink it by
// dropping chunks (sizes r, r/2, ..., 1) whose removal keeps the miss. Once
// |F| <= r the point z + F is within r of z, and a final NULL answer there is
// a genuine false negative. Restarts with fresh F until the budget runs out.
inline AttackResult kms_attack(const AnnOracle& oracle, const IsolatedInstance& inst, std::uint64_t budget, Rng& rng,
                               const AttackConfig& cfg = {}) {
  const std::size_t d = inst.data.dim();
  const auto r = static_cast<std::size_t>(inst.r);
  const std::size_t start = cfg.initial_flips ? cfg.initial_flips
                                              : static_cast<std::size_t>(std::floor(inst.c * inst.r));
  if (start > d) throw ParameterError("kms_attack: more flips than dimensions");
  const auto zv = inst.data.by_id(inst.isolated_id);
  const HammingDataset::Point z(zv.begin(), zv.end());

  AttackResult res;
  auto ask = [&](const std::vector<std::size_t>& flips) {
    auto q = z;
    for (std::size_t j : flips) HammingDataset::flip(q, j);
    const AnnAnswer a = oracle(q);
    ++res.queries_used;
    res.transcript.record("query", json{{"flips", flips}, {"distance_to_z", flips.size()}}, answer_to_json(a));
    return std::make_pair(a.id == inst.isolated_id, a.is_null());
  };

  while (res.queries_used < budget) {
    std::vector<std::size_t> F = sample_distinct(d, start, rng);
    if (ask(F).first) {
      ++res.restarts;
      continue;
    }
    for (std::size_t chunk = std::max<std::size_t>(r, 1); F.size() > r && res.queries_used < budget;
         chunk /= 2) {
      for (std::size_t pos = 0; pos < F.size() && F.size() > r && res.queries_used < budget;) {
        const std::size_t len = std::min(chunk, F.size() - pos);
        std::vector<std::size_t> trial(F.begin(), F.begin() + static_cast<std::ptrdiff_t>(pos));
        trial.insert(trial.end(), F.begin() + static_cast<std::ptrdiff_t>(pos + len), F.end());
        if (!ask(trial).first) F = std::move(trial);
        else pos += len;
      }
      if (chunk == 1) break;
    }
    if (F.size() <= r && res.queries_used < budget) {
      const auto [hit, null] = ask(F);
      if (null && !hit) {
        res.success = true;
        res.flips = F;
        auto q = z;
        for (std::size_t j : F) HammingDataset::flip(q, j);
        res.query = std::move(q);
        return res;
      }
    }
    ++res.restarts;
  }
  return res;
}

// True iff every recorded query within r of z received a non-NULL answer.
inline bool attack_queries_all_correct(const Transcript& t, double r) {
  for (const auto& s : t.steps())
    if (s.kind == "query" && s.input.at("distance_to_z").get<double>() <= r && s.output.at("id").is_null())
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// Regression adversary.

// Query/update access to an engine, nothing else.
class RegEngineHandle {
 public:
  virtual ~RegEngineHandle() = default;
  virtual void update(const RegUpdate& u) = 0;
  virtual Eigen::VectorXd query(Rng& rng) = 0;
};

template <class Engine>
class EngineRef final : public RegEngineHandle {
 public:
  explicit EngineRef(Engine& e) : e_(e) {}
  void update(const RegUpdate& u) override { e_.update(u); }
  Eigen::VectorXd query(Rng& rng) override { return e_.query(rng); }

 private:
  Engine& e_;
};

enum class RegAdversaryMode { Mixed, UOnly, BOnly, LabelShift };

struct RegAdversaryConfig {
  std::uint64_t steps = 16;
  double kappa_bound = 4.0;
  RegAdversaryMode mode = RegAdversaryMode::Mixed;
  double eta_u = 0.05;          // rank-one step, relative to sigma_max
  double eta_b = 0.25;          // b step, relative to the optimal residual norm
  std::size_t u_sparsity = 8;   // nonzeros of u in U += u g^T
  std::size_t shift_sparsity = 4;
};

struct RegStepRecord {
  std::uint64_t step = 0;
  std::string kind;
  double cost = 0;
  double optimal_cost = 0;
  double ratio = 1;
  double kappa = 1;
  bool clipped = false;
};

struct RegAdversaryResult {
  Transcript transcript;
  std::vector<RegStepRecord> steps;
  RegProblem final_problem;

  double max_ratio() const {
    double m = 0;
    for (const auto& s : steps) m = std::max(m, s.ratio);
    return m;
  }
};

namespace detail {

inline Eigen::VectorXd unit_or_random(const Eigen::VectorXd& g, Rng& rng) {
  Eigen::VectorXd v = g;
  if (!(v.norm() > 0) || !v.allFinite())
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v / v.norm();
}

// Rebuild U with its singular values clipped into [sigma_max / kappa, sigma_max].
inline Eigen::MatrixXd clip_condition(const Eigen::MatrixXd& U, double kappa) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(U, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = svd.singularValues();
  const double lo = s(0) / kappa;
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::max(s(i), lo);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

inline json update_to_json(const RegUpdate& up) {
  return std::visit(
      [](const auto& u) -> json {
        using T = std::decay_t<decltype(u)>;
        if constexpr (std::is_same_v<T, SparseUUpdate>) {
          json e = json::array();
          for (const auto& x : u.entries) e.push_back({x.row, x.col, x.value});
          return {{"kind", "U"}, {"entries", e}};
        } else if constexpr (std::is_same_v<T, SparseBUpdate>) {
          json e = json::array();
          for (const auto& x : u.entries) e.push_back({x.index, x.value});
          return {{"kind", "b"}, {"entries", e}};
        } else if constexpr (std::is_same_v<T, RankOneUUpdate>) {
          json e = json::array();
          for (const auto& x : u.u) e.push_back({x.index, x.value});
          return {{"kind", "U_rank_one"}, {"u", e}, {"g", vector_to_json(u.g)}};
        } else if constexpr (std::is_same_v<T, DenseUUpdate>) {
          return {{"kind", "U_dense"}, {"frobenius", u.delta.norm()}};
        } else {
          return {{"kind", "b_dense"}, {"norm", u.delta.norm()}};
        }
      },
      up);
}

}  // namespace detail

// Drives an engine through `steps` update/query rounds, each update chosen
// from the engine's previous answer. The adversary tracks (U, b) itself from
// the public initial problem and its own updates.
inline RegAdversaryResult regression_adversary(RegEngineHandle& engine, RegProblem problem,
                                               const RegAdversaryConfig& cfg, Rng& rng) {
  problem.validate();
  RegAdversaryResult res;
  const std::size_t n = problem.rows(), d = problem.cols();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));

  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    const Eigen::VectorXd x_opt = solve_least_squares(problem.U, problem.b).x;
    const Eigen::VectorXd r_opt = problem.U * x_opt - problem.b;
    Eigen::VectorXd resid_g = problem.U * g - problem.b;

    bool u_step = false;
    switch (cfg.mode) {
      case RegAdversaryMode::Mixed: u_step = (t % 2 == 0); break;
      case RegAdversaryMode::UOnly: u_step = true; break;
      default: u_step = false;
    }

    RegStepRecord rec;
    rec.step = t;
    RegUpdate up;
    if (u_step) {
      rec.kind = "U";
      const Eigen::VectorXd gh = detail::unit_or_random(g, rng);
      Eigen::BDCSVD<Eigen::MatrixXd> svd(problem.U);
      const double smax = svd.singularValues()(0);
      RankOneUUpdate ru;
      ru.g = gh;
      const std::size_t k = std::min(cfg.u_sparsity, n);
      const double scale = cfg.eta_u * smax / std::sqrt(static_cast<double>(k));
      for (std::size_t i : sample_distinct(n, k, rng)) ru.u.push_back({i, scale * (rng.bernoulli(0.5) ? 1.0 : -1.0)});
      RegProblem trial = problem;
      apply_update(trial, ru);
      if (condition_number(trial.U) > cfg.kappa_bound) {
        DenseUUpdate du{detail::clip_condition(trial.U, cfg.kappa_bound * (1 - 1e-9)) - problem.U};
        rec.clipped = true;
        up = std::move(du);
      } else {
        up = std::move(ru);
      }
    } else if (cfg.mode == RegAdversaryMode::LabelShift) {
      rec.kind = "b";
      // Push the largest residual entries further from the current answer.
      if (!(resid_g.norm() > 0)) resid_g = r_opt;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      const std::size_t s = std::min(cfg.shift_sparsity, n);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s), order.end(),
                        [&](std::size_t a, std::size_t b) { return std::abs(resid_g(a)) > std::abs(resid_g(b)); });
      const double mag = cfg.eta_b * r_opt.norm() / std::sqrt(static_cast<double>(s));
      SparseBUpdate sb;
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t i = order[j];
        const double sign = resid_g(i) > 0 ? -1.0 : 1.0;
        sb.entries.push_back({i, sign * mag});
      }
      up = std::move(sb);
    } else {
      rec.kind = "b";
      Eigen::VectorXd dir = resid_g;
      if (t == 0 || !(dir.norm() > 0))
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
      up = DenseBUpdate{cfg.eta_b * r_opt.norm() * dir / dir.norm()};
    }

    apply_update(problem, up);
    engine.update(up);
    res.transcript.record("update", detail::update_to_json(up), json());
    g = engine.query(rng);

    rec.optimal_cost = problem.optimal_cost();
    rec.cost = problem.cost(g);
    rec.ratio = rec.optimal_cost > 0 ? rec.cost / rec.optimal_cost
                                     : (rec.cost == 0 ? 1.0 : std::numeric_limits<double>::infinity());
    rec.kappa = condition_number(problem.U);
    res.transcript.record("query", json{{"step", t}},
                          json{{"g", vector_to_json(g)}, {"cost", rec.cost}, {"optimal_cost", rec.optimal_cost}});
    res.steps.push_back(rec);
  }
  res.final_problem = std::move(problem);
  return res;
}

}  // namespace advsearch
