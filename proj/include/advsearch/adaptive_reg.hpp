#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "advsearch/errors.hpp"
#include "advsearch/least_squares.hpp"
#include "advsearch/mechanisms.hpp"
#include "advsearch/random.hpp"
#include "advsearch/sketch.hpp"

namespace advsearch {

struct RegProblem {
  Eigen::MatrixXd U;
  Eigen::VectorXd b;
  double kappa_bound = 1.0;

  std::size_t rows() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(U.cols()); }

  void validate() const {
    if (U.rows() < U.cols()) throw ParameterError("RegProblem: requires n >= d");
    if (U.cols() == 0) throw ParameterError("RegProblem: d must be positive");
    if (b.size() != U.rows()) throw ParameterError("RegProblem: b has the wrong length");
    if (!U.allFinite() || !b.allFinite()) throw ParameterError("RegProblem: non-finite entries");
    if (!(kappa_bound >= 1)) throw ParameterError("RegProblem: kappa bound must be >= 1");
  }

  double cost(const Eigen::VectorXd& x) const { return (U * x - b).norm(); }
  Eigen::VectorXd optimum() const { return solve_least_squares(U, b).x; }
  double optimal_cost() const { return cost(optimum()); }
};

// ---------------------------------------------------------------------------
// Updates.

struct SparseUUpdate {
  std::vector<MatrixEntry> entries;
};
struct SparseBUpdate {
  std::vector<VectorEntry> entries;
};
// U += u g^T with sparse u.
struct RankOneUUpdate {
  std::vector<VectorEntry> u;
  Eigen::VectorXd g;
};
struct DenseUUpdate {
  Eigen::MatrixXd delta;
};
struct DenseBUpdate {
  Eigen::VectorXd delta;
};

using RegUpdate = std::variant<SparseUUpdate, SparseBUpdate, RankOneUUpdate, DenseUUpdate, DenseBUpdate>;

inline bool touches_b(const RegUpdate& u) {
  return std::holds_alternative<SparseBUpdate>(u) || std::holds_alternative<DenseBUpdate>(u);
}

inline void validate_update(const RegProblem& p, const RegUpdate& up) {
  const std::size_t n = p.rows(), d = p.cols();
  std::visit(
      [&](const auto& u) {
        using T = std::decay_t<decltype(u)>;
        if constexpr (std::is_same_v<T, SparseUUpdate>) {
          for (const auto& e : u.entries)
            if (e.row >= n || e.col >= d || !std::isfinite(e.value))
              throw ParameterError("update: U entry out of range");
        } else if constexpr (std::is_same_v<T, SparseBUpdate>) {
          for (const auto& e : u.entries)
            if (e.index >= n || !std::isfinite(e.value)) throw ParameterError("update: b entry out of range");
        } else if constexpr (std::is_same_v<T, RankOneUUpdate>) {
          if (static_cast<std::size_t>(u.g.size()) != d) throw ParameterError("update: g has the wrong length");
          for (const auto& e : u.u)
            if (e.index >= n || !std::isfinite(e.value)) throw ParameterError("update: u entry out of range");
        } else if constexpr (std::is_same_v<T, DenseUUpdate>) {
          if (static_cast<std::size_t>(u.delta.rows()) != n || static_cast<std::size_t>(u.delta.cols()) != d)
            throw ParameterError("update: dense U delta has the wrong shape");
        } else {
          if (static_cast<std::size_t>(u.delta.size()) != n)
            throw ParameterError("update: dense b delta has the wrong length");
        }
      },
      up);
}

inline void apply_update(RegProblem& p, const RegUpdate& up) {
  validate_update(p, up);
  std::visit(
      [&](const auto& u) {
        using T = std::decay_t<decltype(u)>;
        if constexpr (std::is_same_v<T, SparseUUpdate>) {
          for (const auto& e : u.entries) p.U(e.row, e.col) += e.value;
        } else if constexpr (std::is_same_v<T, SparseBUpdate>) {
          for (const auto& e : u.entries) p.b(e.index) += e.value;
        } else if constexpr (std::is_same_v<T, RankOneUUpdate>) {
          for (const auto& e : u.u) p.U.row(e.index) += e.value * u.g.transpose();
        } else if constexpr (std::is_same_v<T, DenseUUpdate>) {
          p.U += u.delta;
        } else {
          p.b += u.delta;
        }
      },
      up);
}

// Sketched increment S * update, touching only the update's nonzeros.
struct SketchedDelta {
  std::optional<Eigen::MatrixXd> dU;
  std::optional<Eigen::VectorXd> db;
};

template <class Sketch>
SketchedDelta sketch_update(const Sketch& s, const RegUpdate& up, std::size_t d) {
  SketchedDelta out;
  std::visit(
      [&](const auto& u) {
        using T = std::decay_t<decltype(u)>;
        if constexpr (std::is_same_v<T, SparseUUpdate>) {
          out.dU = s.apply_sparse(std::span<const MatrixEntry>(u.entries), d);
        } else if constexpr (std::is_same_v<T, SparseBUpdate>) {
          out.db = s.apply_sparse(std::span<const VectorEntry>(u.entries));
        } else if constexpr (std::is_same_v<T, RankOneUUpdate>) {
          const Eigen::VectorXd su = s.apply_sparse(std::span<const VectorEntry>(u.u));
          out.dU = su * u.g.transpose();
        } else if constexpr (std::is_same_v<T, DenseUUpdate>) {
          out.dU = s.apply(u.delta);
        } else {
          out.db = s.apply(u.delta);
        }
      },
      up);
  return out;
}

// ---------------------------------------------------------------------------
// Shared pieces.

struct RegStats {
  std::uint64_t updates = 0;
  std::uint64_t queries = 0;
  std::uint64_t solves = 0;
  std::uint64_t rank_deficient_solves = 0;
  std::uint64_t materializations = 0;
  std::uint64_t evictions = 0;
  std::uint64_t regenerations = 0;
};

// Bounded map from copy index to materialized state, least recently used out.
template <class Value>
class CopyCache {
 public:
  explicit CopyCache(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ParameterError("CopyCache: capacity must be positive");
  }

  Value* find(std::uint64_t i) {
    auto it = map_.find(i);
    if (it == map_.end()) return nullptr;
    it->second.second = ++clock_;
    return &it->second.first;
  }
  const Value* peek(std::uint64_t i) const {
    auto it = map_.find(i);
    return it == map_.end() ? nullptr : &it->second.first;
  }

  // Returns the number of evictions performed (0 or 1).
  std::uint64_t insert(std::uint64_t i, Value v) {
    std::uint64_t evicted = 0;
    if (map_.size() >= capacity_ && !map_.count(i)) {
      auto victim = std::min_element(map_.begin(), map_.end(),
                                     [](const auto& a, const auto& b) { return a.second.second < b.second.second; });
      map_.erase(victim);
      evicted = 1;
    }
    map_.insert_or_assign(i, std::make_pair(std::move(v), ++clock_));
    return evicted;
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& [i, slot] : map_) fn(i, slot.first);
  }

  void clear() { map_.clear(); }
  std::size_t size() const { return map_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::unordered_map<std::uint64_t, std::pair<Value, std::uint64_t>> map_;
  std::uint64_t clock_ = 0;
};

// k = ceil(1200 * s * eps * sqrt(2 T d ln(100/beta))).
inline std::uint64_t reg_copy_count(std::uint64_t s_med, double eps_dp, std::uint64_t T, std::size_t d,
                                    double beta) {
  return static_cast<std::uint64_t>(std::ceil(
      200.0 * 6.0 * static_cast<double>(s_med) * eps_dp *
      std::sqrt(2.0 * static_cast<double>(T) * static_cast<double>(d) * std::log(100.0 / beta))));
}

// Gamma = (2/eps) ln(T d |grid| / beta).
inline double reg_median_gamma(std::uint64_t T, std::size_t d, std::size_t grid_size, double eps_dp, double beta) {
  return (2.0 / eps_dp) *
         std::log(static_cast<double>(T) * static_cast<double>(d) * static_cast<double>(grid_size) / beta);
}

namespace detail {

inline void check_common(double alpha, double beta, std::uint64_t T, double eps_dp) {
  if (!(alpha > 0 && alpha < 1)) throw ParameterError("adaptive_reg: alpha must lie in (0,1)");
  if (!(beta > 0 && beta < 1)) throw ParameterError("adaptive_reg: beta must lie in (0,1)");
  if (T == 0) throw ParameterError("adaptive_reg: T must be positive");
  if (!(eps_dp > 0 && eps_dp <= 1)) throw ParameterError("adaptive_reg: eps_dp must lie in (0,1]");
}

inline Eigen::VectorXd coordinatewise_median(const std::vector<Eigen::VectorXd>& samples,
                                             const OutputGrid& grid, double eps, Rng& rng) {
  const Eigen::Index d = samples.front().size();
  Eigen::VectorXd g(d);
  std::vector<double> column(samples.size());
  for (Eigen::Index l = 0; l < d; ++l) {
    for (std::size_t j = 0; j < samples.size(); ++j) column[j] = samples[j](l);
    g(l) = private_median(column, grid, eps, rng);
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Coordinate-wise private median over k independently sketched solutions.

struct RegDpConfig {
  double alpha = 0.5;
  double beta = 0.1;
  std::uint64_t T = 16;
  double eps_dp = 0.5;
  double beta_prime = 0.01;
  double sample_multiplier = 100.0;  // s_med = ceil(multiplier * Gamma)
  std::size_t cache_capacity = 64;
  SketchConstants sketch;
  OutputGrid grid = OutputGrid::signed_geometric();
};

// Copy i uses the composed sketch seeded by derive_seed(master, i). Copies are
// materialized from the current (U, b) on first use and maintained
// incrementally while resident.
class RegDpEngine {
 public:
  RegDpEngine(RegProblem problem, RegDpConfig cfg, RandomSeed master)
      : problem_(std::move(problem)), cfg_(std::move(cfg)), master_(master), cache_(cfg_.cache_capacity) {
    problem_.validate();
    detail::check_common(cfg_.alpha, cfg_.beta, cfg_.T, cfg_.eps_dp);
    const std::size_t n = problem_.rows(), d = problem_.cols();
    alpha_eff_ = cfg_.alpha / problem_.kappa_bound;
    dims_ = sketch_dims(d, n, alpha_eff_, cfg_.beta_prime, cfg_.sketch);
    gamma_ = reg_median_gamma(cfg_.T, d, cfg_.grid.size(), cfg_.eps_dp, cfg_.beta);
    s_med_ = static_cast<std::uint64_t>(std::max(1.0, std::ceil(cfg_.sample_multiplier * gamma_)));
    k_ = reg_copy_count(s_med_, cfg_.eps_dp, cfg_.T, d, cfg_.beta);
    if (k_ <= cfg_.cache_capacity)
      for (std::uint64_t i = 0; i < k_; ++i) acquire(i);
  }

  std::uint64_t k() const { return k_; }
  std::uint64_t s_med() const { return s_med_; }
  double gamma() const { return gamma_; }
  double alpha_eff() const { return alpha_eff_; }
  const SketchDims& dims() const { return dims_; }
  const RegDpConfig& config() const { return cfg_; }
  const RegProblem& problem() const { return problem_; }
  std::uint64_t queries_answered() const { return queries_; }
  const RegStats& stats() const { return stats_; }
  RandomSeed master_seed() const { return master_; }
  bool is_resident(std::uint64_t i) const { return cache_.peek(i) != nullptr; }

  void resume_budget(std::uint64_t used) {
    if (used > cfg_.T) throw ParameterError("RegDpEngine: saved query count exceeds T");
    queries_ = used;
  }

  // Sketched solutions consumed by the most recent query.
  const std::vector<Eigen::VectorXd>& last_solutions() const { return last_solutions_; }

  ComposedSketch copy_sketch(std::uint64_t i) const {
    return ComposedSketch(problem_.rows(), dims_.m, dims_.r, derive_seed(master_, i));
  }

  // (sk_U, sk_b) of copy i, materializing it if needed.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> copy_state(std::uint64_t i) {
    const Copy& c = acquire(i);
    return {c.skU, c.skb};
  }

  void update(const RegUpdate& up) {
    validate_update(problem_, up);
    apply_update(problem_, up);
    cache_.for_each([&](std::uint64_t, Copy& c) {
      auto delta = sketch_update(c.sketch, up, problem_.cols());
      if (delta.dU) c.skU += *delta.dU;
      if (delta.db) c.skb += *delta.db;
    });
    ++stats_.updates;
  }

  Eigen::VectorXd query(Rng& rng) {
    if (queries_ >= cfg_.T) throw BudgetError("RegDpEngine: query budget T exhausted");
    last_solutions_.clear();
    last_solutions_.reserve(s_med_);
    for (std::uint64_t j = 0; j < s_med_; ++j) {
      const std::uint64_t i = rng.uniform_index(k_);
      const Copy& c = acquire(i);
      const LsqResult res = solve_least_squares(c.skU, c.skb);
      ++stats_.solves;
      if (res.rank_deficient) ++stats_.rank_deficient_solves;
      last_solutions_.push_back(res.x);
    }
    ++queries_;
    ++stats_.queries;
    return detail::coordinatewise_median(last_solutions_, cfg_.grid, cfg_.eps_dp, rng);
  }

 private:
  struct Copy {
    ComposedSketch sketch;
    Eigen::MatrixXd skU;
    Eigen::VectorXd skb;
  };

  const Copy& acquire(std::uint64_t i) {
    if (Copy* c = cache_.find(i)) return *c;
    ComposedSketch s = copy_sketch(i);
    Eigen::MatrixXd su = s.apply(problem_.U);
    Eigen::VectorXd sb = s.apply(problem_.b);
    stats_.evictions += cache_.insert(i, Copy{std::move(s), std::move(su), std::move(sb)});
    ++stats_.materializations;
    return *cache_.find(i);
  }

  RegProblem problem_;
  RegDpConfig cfg_;
  RandomSeed master_;
  double alpha_eff_ = 0;
  SketchDims dims_;
  double gamma_ = 0;
  std::uint64_t s_med_ = 1;
  std::uint64_t k_ = 1;
  std::uint64_t queries_ = 0;
  CopyCache<Copy> cache_;
  std::vector<Eigen::VectorXd> last_solutions_;
  RegStats stats_;
};

// ---------------------------------------------------------------------------
// Single Gaussian sketch sized for a bounded set of computation paths, with
// the answer rounded onto the output grid.

struct RegPathConfig {
  double alpha = 0.5;
  double beta = 0.1;
  std::uint64_t T = 16;
  double C_p = 1.0;
  double path_budget = -1.0;  // ln|P|; negative selects d * ln|grid|
  OutputGrid grid = OutputGrid::signed_geometric();
};

struct RoundingReport {
  double max_shift = 0;          // ||g - x||_inf
  double relative_step = 0;      // max over coordinates of cell width / |x_l|
  double cost_unrounded = 0;     // ||U x - b||
  double cost_rounded = 0;       // ||U g - b||
  double factor_bound = 1;       // (1 + tau)(1 + sqrt(d) sigma_max step / ||U x - b||)
};

class RegPathEngine {
 public:
  RegPathEngine(RegProblem problem, RegPathConfig cfg, RandomSeed seed)
      : problem_(std::move(problem)), cfg_(std::move(cfg)), seed_(seed),
        sketch_(1, 1, seed) {
    problem_.validate();
    detail::check_common(cfg_.alpha, cfg_.beta, cfg_.T, 1.0);
    const std::size_t n = problem_.rows(), d = problem_.cols();
    path_budget_ = cfg_.path_budget >= 0
                       ? cfg_.path_budget
                       : static_cast<double>(d) * std::log(static_cast<double>(cfg_.grid.size()));
    r_ = static_cast<std::size_t>(std::ceil(
        cfg_.C_p * (static_cast<double>(d) + path_budget_ + std::log(1.0 / cfg_.beta)) /
        (cfg_.alpha * cfg_.alpha)));
    r_ = std::max(r_, d);
    sketch_ = GaussianSketch(n, r_, seed_);
    skU_ = sketch_.apply(problem_.U);
    skb_ = sketch_.apply(problem_.b);
  }

  std::size_t r() const { return r_; }
  double path_budget() const { return path_budget_; }
  const RegProblem& problem() const { return problem_; }
  const GaussianSketch& sketch() const { return sketch_; }
  const Eigen::MatrixXd& sketched_U() const { return skU_; }
  const Eigen::VectorXd& sketched_b() const { return skb_; }
  std::uint64_t queries_answered() const { return queries_; }
  const RegStats& stats() const { return stats_; }
  const RoundingReport& last_rounding() const { return rounding_; }
  const Eigen::VectorXd& last_unrounded() const { return unrounded_; }
  const RegPathConfig& config() const { return cfg_; }
  RandomSeed seed() const { return seed_; }

  void resume_budget(std::uint64_t used) {
    if (used > cfg_.T) throw ParameterError("RegPathEngine: saved query count exceeds T");
    queries_ = used;
  }

  void update(const RegUpdate& up) {
    validate_update(problem_, up);
    apply_update(problem_, up);
    auto delta = sketch_update(sketch_, up, problem_.cols());
    if (delta.dU) skU_ += *delta.dU;
    if (delta.db) skb_ += *delta.db;
    ++stats_.updates;
  }

  Eigen::VectorXd query() {
    if (queries_ >= cfg_.T) throw BudgetError("RegPathEngine: query budget T exhausted");
    const LsqResult res = solve_least_squares(skU_, skb_);
    ++stats_.solves;
    if (res.rank_deficient) ++stats_.rank_deficient_solves;
    unrounded_ = res.x;
    Eigen::VectorXd g = round_to_grid(res.x, cfg_.grid);
    report_rounding(res.x, g);
    ++queries_;
    ++stats_.queries;
    return g;
  }

  Eigen::VectorXd query(Rng&) { return query(); }

  static Eigen::VectorXd round_to_grid(const Eigen::VectorXd& x, const OutputGrid& grid) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index l = 0; l < x.size(); ++l) g(l) = grid.nearest(x(l));
    return g;
  }

 private:
  void report_rounding(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    rounding_ = {};
    double step = 0;
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      const double w = cfg_.grid.step_at(x(l));
      step = std::max(step, w);
      if (x(l) != 0) rounding_.relative_step = std::max(rounding_.relative_step, w / std::abs(x(l)));
    }
    rounding_.max_shift = (g - x).cwiseAbs().maxCoeff();
    rounding_.cost_unrounded = problem_.cost(x);
    rounding_.cost_rounded = problem_.cost(g);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(problem_.U);
    const double sigma_max = svd.singularValues()(0);
    const double slack = rounding_.cost_unrounded > 0
                             ? std::sqrt(static_cast<double>(x.size())) * sigma_max * step / rounding_.cost_unrounded
                             : INFINITY;
    rounding_.factor_bound = (1.0 + rounding_.relative_step) * (1.0 + slack);
  }

  RegProblem problem_;
  RegPathConfig cfg_;
  RandomSeed seed_;
  double path_budget_ = 0;
  std::size_t r_ = 0;
  GaussianSketch sketch_;
  Eigen::MatrixXd skU_;
  Eigen::VectorXd skb_;
  std::uint64_t queries_ = 0;
  Eigen::VectorXd unrounded_;
  RoundingReport rounding_;
  RegStats stats_;
};

// ---------------------------------------------------------------------------
// Preconditioned engine for sparse label updates: each copy stores the solve
// operator N_i = (S_i U P)^+ and its preconditioned solution sk_i = N_i S_i b.

struct RegPrecondConfig {
  double alpha = 0.5;
  double beta = 0.1;
  std::uint64_t T = 32;          // query budget
  std::uint64_t batch = 8;       // updates between sketch regenerations
  std::uint64_t sparsity = 4;    // max nonzeros per label update
  double eps_dp = 0.5;
  double beta_prime = 0.01;
  double sample_multiplier = 100.0;
  std::size_t cache_capacity = 64;
  SketchConstants sketch;
  double C_pre = 3.0;
  double precond_alpha = 0.5;    // distortion of the preconditioning sketch S_0
  int precond_attempts = 8;
  OutputGrid grid = OutputGrid::signed_geometric();
};

struct Preconditioner {
  Eigen::MatrixXd P;
  double kappa_UP = 0;
  int attempts = 0;
};

// P = R^-1 from a QR factorization of S_0 U, with S_0 a composed sketch of
// dimensions `dims`. Redrawn (seed stream = attempt) until kappa(U P) <= C_pre.
inline Preconditioner sketch_preconditioner(const Eigen::MatrixXd& U, const SketchDims& dims, RandomSeed seed,
                                            double C_pre, int max_attempts) {
  const auto n = static_cast<std::size_t>(U.rows());
  const auto d = U.cols();
  if (max_attempts <= 0) throw ParameterError("sketch_preconditioner: need at least one attempt");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    ComposedSketch s0(n, dims.m, dims.r, derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(s0.apply(U));
    const Eigen::MatrixXd R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    const auto diag = R.diagonal().cwiseAbs();
    if (!(diag.minCoeff() > diag.maxCoeff() * 1e-14))
      throw RankDeficiencyError("sketch_preconditioner: sketched factor is singular");
    Preconditioner out;
    out.P = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d, d));
    out.kappa_UP = condition_number(U * out.P);
    out.attempts = attempt + 1;
    if (out.kappa_UP <= C_pre) return out;
  }
  throw RankDeficiencyError("sketch_preconditioner: condition check failed on every attempt");
}

class RegPrecondEngine {
 public:
  RegPrecondEngine(RegProblem problem, RegPrecondConfig cfg, RandomSeed master)
      : problem_(std::move(problem)), cfg_(std::move(cfg)), master_(master), cache_(cfg_.cache_capacity) {
    problem_.validate();
    detail::check_common(cfg_.alpha, cfg_.beta, cfg_.T, cfg_.eps_dp);
    if (cfg_.batch == 0) throw ParameterError("RegPrecondEngine: batch must be positive");
    const std::size_t n = problem_.rows(), d = problem_.cols();
    dims_ = sketch_dims(d, n, cfg_.alpha, cfg_.beta_prime, cfg_.sketch);
    build_preconditioner();
    gamma_ = reg_median_gamma(cfg_.T, d, cfg_.grid.size(), cfg_.eps_dp, cfg_.beta);
    s_med_ = static_cast<std::uint64_t>(std::max(1.0, std::ceil(cfg_.sample_multiplier * gamma_)));
    k_ = reg_copy_count(s_med_, cfg_.eps_dp, cfg_.T, d, cfg_.beta);
    materialize_all_if_small();
  }

  std::uint64_t k() const { return k_; }
  std::uint64_t s_med() const { return s_med_; }
  double gamma() const { return gamma_; }
  const SketchDims& dims() const { return dims_; }
  const Eigen::MatrixXd& preconditioner() const { return P_; }
  double kappa_UP() const { return kappa_up_; }
  int preconditioner_attempts() const { return precond_tries_; }
  std::uint64_t counter() const { return counter_; }
  std::uint64_t epoch() const { return epoch_; }
  const RegProblem& problem() const { return problem_; }
  std::uint64_t queries_answered() const { return queries_; }
  const RegStats& stats() const { return stats_; }
  bool is_resident(std::uint64_t i) const { return cache_.peek(i) != nullptr; }
  const std::vector<Eigen::VectorXd>& last_solutions() const { return last_solutions_; }
  const RegPrecondConfig& config() const { return cfg_; }
  RandomSeed master_seed() const { return master_; }

  void resume_budget(std::uint64_t used) {
    if (used > cfg_.T) throw ParameterError("RegPrecondEngine: saved query count exceeds T");
    queries_ = used;
  }

  // Restores the regeneration state of a saved engine.
  void resume_epoch(std::uint64_t epoch, std::uint64_t counter) {
    if (counter >= cfg_.batch) throw ParameterError("RegPrecondEngine: saved counter must be below the batch size");
    epoch_ = epoch;
    counter_ = counter;
    cache_.clear();
    materialize_all_if_small();
  }

  ComposedSketch copy_sketch(std::uint64_t i) const {
    return ComposedSketch(problem_.rows(), dims_.m, dims_.r, derive_seed(derive_seed(master_, 1 + epoch_), i));
  }

  // (N_i, sk_i) of copy i, materializing it if needed.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> copy_state(std::uint64_t i) {
    const Copy& c = acquire(i);
    return {c.N, c.sk};
  }

  void update(const SparseBUpdate& v) {
    if (v.entries.size() > cfg_.sparsity) throw ParameterError("RegPrecondEngine: update exceeds sparsity bound");
    const RegUpdate up = v;
    validate_update(problem_, up);
    apply_update(problem_, up);
    ++counter_;
    ++stats_.updates;
    if (counter_ == cfg_.batch) {
      ++epoch_;
      counter_ = 0;
      cache_.clear();
      ++stats_.regenerations;
      materialize_all_if_small();
      return;
    }
    cache_.for_each([&](std::uint64_t, Copy& c) {
      c.sk += c.N * c.sketch.apply_sparse(std::span<const VectorEntry>(v.entries));
    });
  }

  void update(const RegUpdate& up) {
    if (!std::holds_alternative<SparseBUpdate>(up))
      throw ParameterError("RegPrecondEngine: only sparse label updates are supported");
    update(std::get<SparseBUpdate>(up));
  }

  Eigen::VectorXd query(Rng& rng) {
    if (queries_ >= cfg_.T) throw BudgetError("RegPrecondEngine: query budget T exhausted");
    last_solutions_.clear();
    for (std::uint64_t j = 0; j < s_med_; ++j) last_solutions_.push_back(acquire(rng.uniform_index(k_)).sk);
    ++queries_;
    ++stats_.queries;
    const Eigen::VectorXd g_tilde = detail::coordinatewise_median(last_solutions_, cfg_.grid, cfg_.eps_dp, rng);
    return P_ * g_tilde;
  }

 private:
  struct Copy {
    ComposedSketch sketch;
    Eigen::MatrixXd N;   // d x r
    Eigen::VectorXd sk;  // d
  };

  void build_preconditioner() {
    const SketchDims d0 = sketch_dims(problem_.cols(), problem_.rows(), cfg_.precond_alpha, cfg_.beta_prime, cfg_.sketch);
    Preconditioner pre = sketch_preconditioner(problem_.U, d0, derive_seed(master_, 0), cfg_.C_pre, cfg_.precond_attempts);
    P_ = std::move(pre.P);
    kappa_up_ = pre.kappa_UP;
    precond_tries_ = pre.attempts;
  }

  void materialize_all_if_small() {
    if (k_ <= cfg_.cache_capacity)
      for (std::uint64_t i = 0; i < k_; ++i) acquire(i);
  }

  const Copy& acquire(std::uint64_t i) {
    if (Copy* c = cache_.find(i)) return *c;
    ComposedSketch s = copy_sketch(i);
    const Eigen::MatrixXd A = s.apply(problem_.U) * P_;
    PseudoInverse pi = pseudo_inverse(A);
    if (pi.rank < A.cols()) ++stats_.rank_deficient_solves;
    Eigen::MatrixXd N = std::move(pi.pinv);
    Eigen::VectorXd sk = N * s.apply(problem_.b);
    ++stats_.solves;
    stats_.evictions += cache_.insert(i, Copy{std::move(s), std::move(N), std::move(sk)});
    ++stats_.materializations;
    return *cache_.find(i);
  }

  RegProblem problem_;
  RegPrecondConfig cfg_;
  RandomSeed master_;
  SketchDims dims_;
  Eigen::MatrixXd P_;
  double kappa_up_ = 0;
  int precond_tries_ = 0;
  double gamma_ = 0;
  std::uint64_t s_med_ = 1;
  std::uint64_t k_ = 1;
  std::uint64_t counter_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t queries_ = 0;
  CopyCache<Copy> cache_;
  std::vector<Eigen::VectorXd> last_solutions_;
  RegStats stats_;
};

}  // namespace advsearch
