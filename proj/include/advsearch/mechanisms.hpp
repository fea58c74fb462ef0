#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advsearch/errors.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

// ---------------------------------------------------------------------------
// Noise sampling. Exponentials are parameterized by scale (mean).

inline double exponential_from_uniform(double scale, double u) {
  return -scale * std::log1p(-u);
}

inline double sample_exponential(double scale, Rng& rng) {
  if (!(scale > 0)) throw ParameterError("sample_exponential: scale must be positive");
  return exponential_from_uniform(scale, rng.uniform());
}

// Inverse CDF of the maximum of n i.i.d. Exp(scale): -scale * ln(1 - u^(1/n)).
inline double max_order_stat_from_uniform(std::uint64_t n, double scale, double u) {
  if (n == 1) return exponential_from_uniform(scale, u);
  // 1 - u^(1/n) = -expm1(ln(u)/n) keeps precision when u^(1/n) is close to 1.
  return -scale * std::log(-std::expm1(std::log(u) / static_cast<double>(n)));
}

inline double sample_max_order_stat(std::uint64_t n, double scale, Rng& rng) {
  if (n == 0) throw ParameterError("sample_max_order_stat: n must be positive");
  if (!(scale > 0)) throw ParameterError("sample_max_order_stat: scale must be positive");
  return max_order_stat_from_uniform(n, scale, rng.uniform());
}

// ---------------------------------------------------------------------------
// One-sided noisy argmax. Category indices are 1-based.

inline std::uint64_t dense_noisy_argmax(std::span<const std::uint64_t> counts, double eps,
                                        Rng& rng) {
  if (counts.empty()) throw ParameterError("dense_noisy_argmax: empty counts");
  if (!(eps > 0)) throw ParameterError("dense_noisy_argmax: eps must be positive");
  const double scale = 1.0 / eps;
  std::uint64_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double v = static_cast<double>(counts[i]) + sample_exponential(scale, rng);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best + 1;
}

// Sparse nonnegative histogram over categories [1, n].
class SparseCounts {
 public:
  explicit SparseCounts(std::uint64_t domain_size) : n_(domain_size) {
    if (domain_size == 0) throw ParameterError("SparseCounts: domain size must be positive");
  }

  void add(std::uint64_t index, std::uint64_t amount = 1) {
    if (index == 0 || index > n_) throw ParameterError("SparseCounts: index out of range");
    if (amount == 0) return;
    entries_[index] += amount;
  }

  std::uint64_t domain_size() const { return n_; }
  std::size_t support_size() const { return entries_.size(); }

  std::uint64_t count(std::uint64_t index) const {
    auto it = entries_.find(index);
    return it == entries_.end() ? 0 : it->second;
  }

  // Ascending by index.
  const std::map<std::uint64_t, std::uint64_t>& entries() const { return entries_; }

  std::vector<std::uint64_t> densify() const {
    std::vector<std::uint64_t> out(n_, 0);
    for (const auto& [i, c] : entries_) out[i - 1] = c;
    return out;
  }

  static SparseCounts from_dense(std::span<const std::uint64_t> counts) {
    SparseCounts out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out.add(i + 1, counts[i]);
    return out;
  }

  friend bool operator==(const SparseCounts&, const SparseCounts&) = default;

 private:
  std::uint64_t n_;
  std::map<std::uint64_t, std::uint64_t> entries_;
};

struct SparseArgmaxDiagnostics {
  std::uint64_t calls = 0;
  std::uint64_t head_branches = 0;
  std::uint64_t batches = 0;  // batches drawn, accepted ones included
};

namespace detail {

// Draws `size` exponentials, redrawing the whole batch until none exceeds x.
inline void conditioned_batch(std::size_t size, double scale, double x, Rng& rng,
                              std::vector<double>& out, std::uint64_t& batches) {
  out.resize(size);
  for (;;) {
    ++batches;
    bool ok = true;
    for (std::size_t j = 0; j < size; ++j) {
      out[j] = sample_exponential(scale, rng);
      if (out[j] > x) {
        ok = false;
        break;
      }
    }
    if (ok) return;
  }
}

}  // namespace detail

// Same output distribution as dense_noisy_argmax on counts.densify(), in
// O(s) expected noise draws. The maximum noise X is drawn once per call and
// kept across batch redraws.
inline std::uint64_t sparse_noisy_argmax(const SparseCounts& counts, double eps, Rng& rng,
                                         SparseArgmaxDiagnostics* diag = nullptr) {
  if (!(eps > 0)) throw ParameterError("sparse_noisy_argmax: eps must be positive");
  const std::uint64_t n = counts.domain_size();
  const std::size_t s = counts.support_size();
  if (s > n) throw ParameterError("sparse_noisy_argmax: support exceeds domain");
  const double scale = 1.0 / eps;

  const bool head = s > 0 && rng.uniform() < static_cast<double>(s) / static_cast<double>(n);
  const double x = sample_max_order_stat(n, scale, rng);
  std::uint64_t batches = 0;
  std::vector<double> noise;
  std::uint64_t result = 0;

  if (head) {
    detail::conditioned_batch(s - 1, scale, x, rng, noise, batches);
    const std::size_t slot = rng.uniform_index(s);
    double best_value = -1.0;
    std::size_t pos = 0, j = 0;
    for (const auto& [idx, c] : counts.entries()) {
      const double z = pos == slot ? x : noise[j++];
      const double v = static_cast<double>(c) + z;
      if (v > best_value) {
        best_value = v;
        result = idx;
      }
      ++pos;
    }
  } else {
    detail::conditioned_batch(s, scale, x, rng, noise, batches);
    // Rank among non-support indices, mapped back to a category index.
    std::uint64_t outside = rng.uniform_index(n - s) + 1;
    for (const auto& [idx, c] : counts.entries()) {
      if (idx <= outside) ++outside;
      else break;
    }
    double best_value = -1.0;
    std::uint64_t best = 0;
    std::size_t j = 0;
    for (const auto& [idx, c] : counts.entries()) {
      const double v = static_cast<double>(c) + noise[j++];
      if (v > best_value) {
        best_value = v;
        best = idx;
      }
    }
    if (s == 0 || x > best_value || (x == best_value && outside < best)) result = outside;
    else result = best;
  }

  if (diag) {
    ++diag->calls;
    if (head) ++diag->head_branches;
    diag->batches += batches;
  }
  return result;
}

// One fresh-X acceptance trial: draws X ~ X_(n) and a batch of `batch` noises,
// returns whether all are <= X. Succeeds with probability n/(n+batch).
inline bool batch_acceptance_trial(std::uint64_t n, std::size_t batch, double scale, Rng& rng) {
  const double x = sample_max_order_stat(n, scale, rng);
  for (std::size_t j = 0; j < batch; ++j)
    if (sample_exponential(scale, rng) > x) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Output grid and private median.

class OutputGrid {
 public:
  OutputGrid() = default;

  static OutputGrid from_points(std::vector<double> points) {
    if (points.empty()) throw ParameterError("OutputGrid: empty grid");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i])) throw ParameterError("OutputGrid: non-finite point");
      if (i > 0 && !(points[i - 1] < points[i]))
        throw ParameterError("OutputGrid: points must be strictly ascending");
    }
    OutputGrid g;
    g.points_ = std::move(points);
    return g;
  }

  // {0} U {+-(1+tau)^j * g_min : j >= 0, value <= g_max}.
  static OutputGrid signed_geometric(double tau = 0x1.0p-8, double g_min = 0x1.0p-30,
                                     double g_max = 0x1.0p30) {
    if (!(tau > 0) || !(g_min > 0) || !(g_max >= g_min))
      throw ParameterError("OutputGrid: invalid geometric parameters");
    std::vector<double> pos;
    for (std::uint64_t j = 0;; ++j) {
      const double v = std::pow(1.0 + tau, static_cast<double>(j)) * g_min;
      if (v > g_max) break;
      pos.push_back(v);
    }
    std::vector<double> pts;
    pts.reserve(2 * pos.size() + 1);
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) pts.push_back(-*it);
    pts.push_back(0.0);
    pts.insert(pts.end(), pos.begin(), pos.end());
    return from_points(std::move(pts));
  }

  static OutputGrid integers(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ParameterError("OutputGrid: empty integer range");
    std::vector<double> pts;
    for (std::int64_t v = lo; v <= hi; ++v) pts.push_back(static_cast<double>(v));
    return from_points(std::move(pts));
  }

  static OutputGrid uniform(double lo, double hi, std::size_t count) {
    if (count < 2 || !(hi > lo)) throw ParameterError("OutputGrid: invalid uniform grid");
    std::vector<double> pts(count);
    for (std::size_t i = 0; i < count; ++i)
      pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return from_points(std::move(pts));
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<double>& points() const { return points_; }
  double operator[](std::size_t i) const { return points_[i]; }
  double lowest() const { return points_.front(); }
  double highest() const { return points_.back(); }

  double clamp(double x) const { return std::clamp(x, lowest(), highest()); }

  // Nearest grid point; ties go to the lower point.
  double nearest(double x) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), x);
    if (it == points_.begin()) return *it;
    if (it == points_.end()) return points_.back();
    const double hi = *it, lo = *(it - 1);
    return (x - lo <= hi - x) ? lo : hi;
  }

  bool contains(double x) const { return std::binary_search(points_.begin(), points_.end(), x); }

  // Width of the grid cell containing x (0 outside the grid range).
  double step_at(double x) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), x);
    if (it == points_.begin() || it == points_.end()) return 0.0;
    return *it - *(it - 1);
  }

 private:
  std::vector<double> points_;
};

inline double private_median_gamma(std::size_t grid_size, double eps, double beta) {
  return (2.0 / eps) * std::log(static_cast<double>(grid_size) / beta);
}

// Exponential mechanism over the grid with utility -|below(x) - above(x)|.
// Values are first snapped to their nearest grid point; without snapping,
// samples that all fall inside one grid cell would give every grid point the
// same utility. Grid points with equal utility are grouped into cells between
// consecutive distinct values, so the cost is O(|values| log |grid|).
inline double private_median(std::span<const double> values, const OutputGrid& grid, double eps,
                             Rng& rng) {
  if (values.empty()) throw ParameterError("private_median: empty input");
  if (grid.size() == 0) throw ParameterError("private_median: empty grid");
  if (!(eps > 0)) throw ParameterError("private_median: eps must be positive");

  std::vector<double> v(values.begin(), values.end());
  for (double& x : v) {
    if (std::isnan(x)) throw ParameterError("private_median: NaN input");
    x = grid.nearest(x);
  }
  std::sort(v.begin(), v.end());
  const auto total = static_cast<std::int64_t>(v.size());
  const auto& pts = grid.points();

  struct Cell {
    std::size_t first, count;  // grid index range
    double log_weight;
  };
  std::vector<Cell> cells;
  auto push = [&](std::size_t first, std::size_t last, std::int64_t below, std::int64_t above) {
    if (last <= first) return;
    const double utility = -static_cast<double>(std::llabs(below - above));
    cells.push_back({first, last - first,
                     eps * utility / 2.0 + std::log(static_cast<double>(last - first))});
  };

  std::size_t gi = 0;
  std::int64_t below = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    const double w = v[i];
    std::size_t j = i;
    while (j < v.size() && v[j] == w) ++j;
    const auto mult = static_cast<std::int64_t>(j - i);
    const std::size_t lo = std::lower_bound(pts.begin(), pts.end(), w) - pts.begin();
    push(gi, lo, below, total - below);
    std::size_t hi = lo;
    if (hi < pts.size() && pts[hi] == w) {
      push(hi, hi + 1, below, total - below - mult);
      ++hi;
    }
    gi = hi;
    below += mult;
    i = j;
  }
  push(gi, pts.size(), below, 0);

  double max_lw = -INFINITY;
  for (const auto& c : cells) max_lw = std::max(max_lw, c.log_weight);
  double sum = 0;
  for (const auto& c : cells) sum += std::exp(c.log_weight - max_lw);
  double target = rng.uniform() * sum;
  std::size_t pick = cells.size() - 1;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    target -= std::exp(cells[c].log_weight - max_lw);
    if (target <= 0) {
      pick = c;
      break;
    }
  }
  return pts[cells[pick].first + rng.uniform_index(cells[pick].count)];
}

// ---------------------------------------------------------------------------
// Privacy parameter calculators.

struct DpParams {
  double eps_dp = 0.5;
  std::uint64_t l = 1;
  std::uint64_t k = 1;
  std::uint64_t T = 1;
  double beta = 0.01;
};

struct CompositionResult {
  double eps_total;
  double delta_total;
};

inline double amplified_epsilon(std::uint64_t l, std::uint64_t k, double eps) {
  if (k == 0) throw ParameterError("amplified_epsilon: k must be positive");
  if (2 * l > k) throw ParameterError("amplified_epsilon: requires l <= k/2");
  return 6.0 * static_cast<double>(l) / static_cast<double>(k) * eps;
}

inline CompositionResult advanced_composition(std::uint64_t folds, double eps, double delta,
                                              double delta0) {
  if (!(delta0 > 0) || !(delta0 < 1))
    throw ParameterError("advanced_composition: delta0 must lie in (0,1)");
  if (eps < 0 || delta < 0) throw ParameterError("advanced_composition: negative parameter");
  const auto f = static_cast<double>(folds);
  return {std::sqrt(2.0 * f * std::log(1.0 / delta0)) * eps + 2.0 * f * eps * eps,
          delta0 + f * delta};
}

// k = ceil(1200 * l * eps_dp * sqrt(2 T ln(100/beta))).
inline std::uint64_t ann_copy_count(std::uint64_t l, std::uint64_t T, double beta, double eps_dp) {
  const double k = 200.0 * 6.0 * static_cast<double>(l) * eps_dp *
                   std::sqrt(2.0 * static_cast<double>(T) * std::log(100.0 / beta));
  return static_cast<std::uint64_t>(std::ceil(k));
}

// l = ceil(C_l * s * ceil(log2(n/beta)^2)).
inline DpParams ann_parameters(std::uint64_t s, std::uint64_t n, std::uint64_t T, double beta,
                               double eps_dp, double C_l = 4.0) {
  if (s == 0 || n == 0 || T == 0) throw ParameterError("ann_parameters: s, n, T must be positive");
  if (!(beta > 0) || !(beta < 1)) throw ParameterError("ann_parameters: beta must lie in (0,1)");
  if (!(eps_dp > 0) || eps_dp > 1) throw ParameterError("ann_parameters: eps_dp must lie in (0,1]");
  if (!(C_l > 0)) throw ParameterError("ann_parameters: C_l must be positive");
  const double lg = std::log2(static_cast<double>(n) / beta);
  const double log_sq = std::ceil(lg * lg);
  DpParams p;
  p.eps_dp = eps_dp;
  p.l = static_cast<std::uint64_t>(
      std::max(1.0, std::ceil(C_l * static_cast<double>(s) * log_sq)));
  p.k = ann_copy_count(p.l, T, beta, eps_dp);
  p.T = T;
  p.beta = beta;
  return p;
}

}  // namespace advsearch
