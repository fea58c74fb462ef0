#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "advsearch/adaptive_ann.hpp"
#include "advsearch/adaptive_reg.hpp"
#include "advsearch/adversary.hpp"
#include "advsearch/harness/config.hpp"
#include "advsearch/harness/report.hpp"
#include "advsearch/instances.hpp"
#include "advsearch/lsh.hpp"
#include "advsearch/mechanisms.hpp"
#include "advsearch/sketch.hpp"

namespace advsearch::harness {

struct RunOptions {
  std::optional<std::uint64_t> seed;    // replaces the first configured seed; the rest follow consecutively
  std::optional<std::uint64_t> trials;  // overrides [params] trials
  std::size_t workers = 0;              // 0 = hardware concurrency
};

namespace detail {

inline std::vector<std::uint64_t> seeds(const ExperimentConfig& cfg, const RunOptions& opt) {
  auto s = cfg.get_uint_list("params", "seeds", std::vector<std::uint64_t>{1});
  if (opt.seed)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = *opt.seed + i;
  return s;
}

inline std::uint64_t trials(const ExperimentConfig& cfg, const RunOptions& opt, std::uint64_t fallback) {
  return opt.trials ? *opt.trials : cfg.get_uint("params", "trials", fallback);
}

inline std::size_t workers(const ExperimentConfig& cfg, const RunOptions& opt) {
  return opt.workers ? opt.workers : cfg.get_uint("params", "workers", 0);
}

inline LshConfig lsh_config(const ExperimentConfig& cfg) {
  LshConfig c;
  c.C_L = cfg.get_double("constants", "C_L", c.C_L);
  c.C_q = cfg.get_double("constants", "C_q", c.C_q);
  c.C_w = cfg.get_double("constants", "C_w", c.C_w);
  c.C_jl = cfg.get_double("constants", "C_jl", c.C_jl);
  c.jl_dim = cfg.get_uint("constants", "jl_dim", c.jl_dim);
  return c;
}

inline SketchConstants sketch_constants(const ExperimentConfig& cfg) {
  SketchConstants k;
  k.C_r = cfg.get_double("constants", "C_r", k.C_r);
  k.C_m = cfg.get_double("constants", "C_m", k.C_m);
  return k;
}

inline OutputGrid grid(const ExperimentConfig& cfg) {
  return OutputGrid::signed_geometric(cfg.get_double("constants", "grid_tau", 0x1.0p-8),
                                      cfg.get_double("constants", "grid_min", 0x1.0p-30),
                                      cfg.get_double("constants", "grid_max", 0x1.0p30));
}

// "a:b,c:d" -> {(a,b),(c,d)}
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(const ExperimentConfig& cfg, const std::string& key,
                                                                  const std::string& fallback) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  std::stringstream ss(cfg.get_string("params", key, fallback));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw cfg.field_error("params", key, "expected n:s pairs");
    try {
      out.emplace_back(std::stoull(item.substr(0, colon)), std::stoull(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw cfg.field_error("params", key, "bad pair '" + item + "'");
    }
  }
  if (out.empty()) throw cfg.field_error("params", key, "empty list");
  return out;
}

inline std::vector<double> doubles(const ExperimentConfig& cfg, const std::string& key, const std::string& fallback) {
  std::vector<double> out;
  std::stringstream ss(cfg.get_string("params", key, fallback));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw cfg.field_error("params", key, "bad number '" + item + "'");
    }
  }
  return out;
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dist-check

inline Report dist_check_equivalence(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto cases = detail::pairs(cfg, "cases", "4:1,4:2,8:1,8:4,16:2,16:8");
  const std::uint64_t trials = detail::trials(cfg, opt, 1000000);
  const double eps = cfg.get_double("params", "eps_dp", 0.5);
  const double threshold = cfg.get_double("params", "threshold", 0.01);
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  double worst = 0;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto [n, s] = cases[ci];
    if (s > n || n == 0) throw cfg.field_error("params", "cases", "need s <= n");
    Rng setup(derive_seed(RandomSeed{seed}, 3 * ci));
    std::vector<std::uint64_t> dense(n, 0);
    for (std::size_t j : sample_distinct(n, s, setup)) dense[j] = 1 + setup.uniform_index(3);
    const SparseCounts sparse = SparseCounts::from_dense(dense);
    Rng rs(derive_seed(RandomSeed{seed}, 3 * ci + 1)), rd(derive_seed(RandomSeed{seed}, 3 * ci + 2));
    std::vector<double> hs(n, 0), hd(n, 0);
    SparseArgmaxDiagnostics diag;
    Stopwatch sw;
    for (std::uint64_t t = 0; t < trials; ++t) {
      hs[sparse_noisy_argmax(sparse, eps, rs, &diag) - 1] += 1;
      hd[dense_noisy_argmax(dense, eps, rd) - 1] += 1;
    }
    double tv = 0;
    for (std::size_t j = 0; j < n; ++j) tv += std::abs(hs[j] - hd[j]);
    tv /= 2.0 * static_cast<double>(trials);
    worst = std::max(worst, tv);
    rep.add(seed, ci,
            {{"n", n}, {"s", s}, {"counts", dense}, {"tv", tv}, {"pass", tv <= threshold},
             {"mean_batches_per_call", static_cast<double>(diag.batches) / static_cast<double>(diag.calls)},
             {"head_fraction", static_cast<double>(diag.head_branches) / static_cast<double>(diag.calls)}},
            {{"seconds", sw.seconds()}});
  }
  rep.passed = worst <= threshold;
  rep.summary = {{"worst_tv", worst}, {"threshold", threshold}, {"trials", trials}};
  rep.headline = "max TV(sparse, dense) = " + detail::fmt(worst) + " over " + std::to_string(cases.size()) +
                 " counts vectors at " + std::to_string(trials) + " trials (threshold " + detail::fmt(threshold) + ")";
  return rep;
}

inline Report dist_check_acceptance(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto cases = detail::pairs(cfg, "cases", "10:10,100:10,100:1");
  const std::uint64_t batches = detail::trials(cfg, opt, 1000000);
  const double scale = cfg.get_double("params", "scale", 2.0);
  const double tol = cfg.get_double("params", "threshold", 0.01);
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  double worst = 0;
  std::string detail_text;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto [n, s] = cases[ci];
    Rng rng(derive_seed(RandomSeed{seed}, ci));
    std::uint64_t ok = 0;
    for (std::uint64_t b = 0; b < batches; ++b) ok += batch_acceptance_trial(n, s, scale, rng);
    const double rate = static_cast<double>(ok) / static_cast<double>(batches);
    const double expect = static_cast<double>(n) / static_cast<double>(n + s);
    worst = std::max(worst, std::abs(rate - expect));
    detail_text += " (" + std::to_string(n) + "," + std::to_string(s) + ")=" + detail::fmt(rate, 5);
    rep.add(seed, ci, {{"n", n}, {"s", s}, {"rate", rate}, {"expected", expect}, {"abs_error", std::abs(rate - expect)}});
  }
  rep.passed = worst <= tol;
  rep.summary = {{"worst_abs_error", worst}, {"tolerance", tol}, {"batches", batches}};
  rep.headline = "acceptance rates" + detail_text + "; max |rate - n/(n+s)| = " + detail::fmt(worst, 3);
  return rep;
}

inline Report dist_check_tail(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const std::uint64_t samples = detail::trials(cfg, opt, 10000000);
  const double b = cfg.get_double("params", "scale", 2.0);
  const double factor = cfg.get_double("params", "threshold", 1.05);
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  Rng rng(RandomSeed{seed});
  std::vector<std::uint64_t> above(11, 0);
  for (std::uint64_t i = 0; i < samples; ++i) {
    const double y = sample_exponential(b, rng) / b;
    for (int t = 1; t <= 10 && y >= t; ++t) ++above[t];
  }
  double worst = 0;
  for (int t = 1; t <= 10; ++t) {
    const double freq = static_cast<double>(above[t]) / static_cast<double>(samples);
    const double ratio = freq / std::exp(-t);
    worst = std::max(worst, ratio);
    rep.add(seed, static_cast<std::uint64_t>(t), {{"t", t}, {"frequency", freq}, {"bound", factor * std::exp(-t)},
                                                  {"ratio_to_exp", ratio}, {"pass", ratio <= factor}});
  }
  rep.passed = worst <= factor;
  rep.summary = {{"worst_ratio", worst}, {"factor", factor}, {"samples", samples}};
  rep.headline = "max over t of Pr[Y >= tb] / e^-t = " + detail::fmt(worst, 5) + " (limit " + detail::fmt(factor) + ")";
  return rep;
}

inline Report dist_check_runtime(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto n_values = cfg.get_uint_list("params", "n_values", std::vector<std::uint64_t>{10000, 1000000});
  const auto s_values = cfg.get_uint_list("params", "s_values", std::vector<std::uint64_t>{4, 8, 16, 32, 64, 128});
  const std::uint64_t calls = cfg.get_uint("params", "calls", 20000);
  const std::uint64_t dense_calls = cfg.get_uint("params", "trials", 20);
  const std::uint64_t reps = cfg.get_uint("params", "reps", 5);
  const std::uint64_t ref_n = cfg.get_uint("params", "n", 1000000);
  const std::uint64_t ref_s = cfg.get_uint("params", "s", 32);
  const double min_speedup = cfg.get_double("params", "threshold", 20.0);
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  const double eps = 0.5;

  struct Point {
    double units, seconds;
  };
  std::vector<Point> points;
  auto make_counts = [&](std::uint64_t n, std::uint64_t s, Rng& rng) {
    SparseCounts c(n);
    for (std::size_t j : sample_distinct(n, s, rng)) c.add(j + 1, 1 + rng.uniform_index(50));
    return c;
  };
  double sparse_ref = 0;
  for (std::uint64_t n : n_values)
    for (std::uint64_t s : s_values) {
      Rng rng(derive_seed(RandomSeed{seed}, n * 1000 + s));
      const SparseCounts counts = make_counts(n, s, rng);
      std::vector<double> per_call;
      std::uint64_t sink = 0;
      for (std::uint64_t r = 0; r < reps; ++r) {
        Stopwatch sw;
        for (std::uint64_t i = 0; i < calls; ++i) sink += sparse_noisy_argmax(counts, eps, rng);
        per_call.push_back(sw.seconds() / static_cast<double>(calls));
      }
      const double t = detail::median_of(per_call);
      const double units = static_cast<double>(s) * std::log(static_cast<double>(n));
      points.push_back({units, t});
      if (n == ref_n && s == ref_s) sparse_ref = t;
      rep.add(seed, points.size() - 1, {{"n", n}, {"s", s}, {"units_s_ln_n", units}, {"checksum", sink % 2}},
              {{"sparse_seconds_per_call", t}, {"seconds_per_unit", t / units}});
    }
  if (sparse_ref == 0) {
    Rng rng(derive_seed(RandomSeed{seed}, 7));
    const SparseCounts counts = make_counts(ref_n, ref_s, rng);
    Stopwatch sw;
    for (std::uint64_t i = 0; i < calls; ++i) sparse_noisy_argmax(counts, eps, rng);
    sparse_ref = sw.seconds() / static_cast<double>(calls);
  }
  Rng rng(derive_seed(RandomSeed{seed}, 9));
  const std::vector<std::uint64_t> dense = make_counts(ref_n, ref_s, rng).densify();
  std::vector<double> dense_times;
  for (std::uint64_t r = 0; r < std::max<std::uint64_t>(1, reps / 2); ++r) {
    Stopwatch sw;
    for (std::uint64_t i = 0; i < dense_calls; ++i) dense_noisy_argmax(dense, eps, rng);
    dense_times.push_back(sw.seconds() / static_cast<double>(dense_calls));
  }
  const double dense_t = detail::median_of(dense_times);
  const double speedup = dense_t / sparse_ref;

  // At most linear growth: least-squares slope of log(time) against
  // log(s ln n) across all configurations.
  const double slack = cfg.get_double("params", "slope_limit", 1.1);
  double mu = 0, mt = 0;
  for (const auto& p : points) {
    mu += std::log(p.units);
    mt += std::log(p.seconds);
  }
  mu /= static_cast<double>(points.size());
  mt /= static_cast<double>(points.size());
  double sxy = 0, sxx = 0;
  for (const auto& p : points) {
    sxy += (std::log(p.units) - mu) * (std::log(p.seconds) - mt);
    sxx += (std::log(p.units) - mu) * (std::log(p.units) - mu);
  }
  const double worst_growth = sxx > 0 ? sxy / sxx : 0.0;
  const bool linear = worst_growth <= slack;
  rep.passed = linear && speedup >= min_speedup;
  rep.summary = {{"speedup_threshold", min_speedup}, {"slope_limit", slack}, {"linear_ok", linear},
                 {"speedup_ok", speedup >= min_speedup}};
  rep.summary_timing = {{"dense_seconds_per_call", dense_t}, {"sparse_seconds_per_call", sparse_ref},
                        {"speedup", speedup}, {"loglog_slope", worst_growth}};
  rep.headline = "n=" + std::to_string(ref_n) + ", s=" + std::to_string(ref_s) + ": sparse " +
                 detail::fmt(sparse_ref * 1e6, 3) + " us vs dense " + detail::fmt(dense_t * 1e3, 3) + " ms (" +
                 detail::fmt(speedup, 4) + "x); log-log slope of time vs s ln n = " + detail::fmt(worst_growth, 3) + " (limit " + detail::fmt(slack) + ")";
  return rep;
}

namespace detail {

// Independent long-double evaluations of the closed forms.
inline std::uint64_t oracle_l(std::uint64_t s, std::uint64_t n, long double beta, long double C_l) {
  const long double lg = std::log(static_cast<long double>(n) / beta) / std::log(2.0L);
  return static_cast<std::uint64_t>(std::max(1.0L, std::ceil(C_l * s * std::ceil(lg * lg))));
}
inline std::uint64_t oracle_k(std::uint64_t l, std::uint64_t T, long double beta, long double eps) {
  return static_cast<std::uint64_t>(std::ceil(1200.0L * l * eps * std::sqrt(2.0L * T * std::log(100.0L / beta))));
}

// Explicit r x n matrices built from the sketches' defining parameters.
inline Eigen::MatrixXd materialize(const CountSketch& cs) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cs.output_dim()),
                                            static_cast<Eigen::Index>(cs.input_dim()));
  for (std::size_t i = 0; i < cs.input_dim(); ++i)
    M(static_cast<Eigen::Index>(cs.bucket(i)), static_cast<Eigen::Index>(i)) = cs.sign(i);
  return M;
}
inline Eigen::MatrixXd materialize(const Srht& s) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(s.output_dim()), static_cast<Eigen::Index>(s.input_dim()));
  for (std::size_t j = 0; j < s.output_dim(); ++j)
    for (std::size_t i = 0; i < s.input_dim(); ++i)
      M(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          s.scale() * hadamard_entry(s.sampled_row(j), i) * s.diagonal_sign(i);
  return M;
}
inline Eigen::MatrixXd materialize(const ComposedSketch& c) {
  return materialize(c.srht()) * materialize(c.count_sketch());
}
inline Eigen::MatrixXd materialize(const GaussianSketch& g) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(g.output_dim()), static_cast<Eigen::Index>(g.input_dim()));
  for (std::size_t i = 0; i < g.input_dim(); ++i) M.col(static_cast<Eigen::Index>(i)) = g.column(i);
  return M;
}

inline Eigen::VectorXd as_dense(const Eigen::VectorXd& v, std::size_t) { return v; }
inline Eigen::VectorXd as_dense(const std::vector<VectorEntry>& v, std::size_t dim) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& e : v) out(static_cast<Eigen::Index>(e.index)) += e.value;
  return out;
}

template <class Sketch>
double materialization_error(const Sketch& sk, std::size_t n, Rng& rng) {
  const Eigen::MatrixXd M = materialize(sk);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) A(i, j) = rng.normal();
  double err = (sk.apply(A) - M * A).norm() / std::max(1e-300, (M * A).norm());
  // Single-entry sparse updates against the matching column.
  for (std::size_t i = 0; i < n; i += 7) {
    const std::vector<VectorEntry> e{{i, 2.5}};
    const Eigen::VectorXd got = as_dense(sk.apply_sparse(std::span<const VectorEntry>(e)), sk.output_dim());
    const Eigen::VectorXd want = 2.5 * M.col(static_cast<Eigen::Index>(i));
    err = std::max(err, (got - want).norm() / std::max(1e-300, want.norm()));
  }
  return err;
}

}  // namespace detail

inline Report dist_check_closed_forms(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  Rng rng(RandomSeed{seed});
  std::map<std::string, int> failures;
  std::map<std::string, int> checked;
  auto check = [&](const std::string& group, bool ok, json info) {
    ++checked[group];
    if (!ok) ++failures[group];
    info["group"] = group;
    info["pass"] = ok;
    rep.add(seed, rep.records.size(), std::move(info));
  };
  auto rel = [](long double a, long double b) {
    return static_cast<double>(std::abs(a - b) / std::max(std::abs(b), 1e-300L));
  };

  // ann_parameters
  const std::uint64_t s_tab[] = {1, 2, 3, 5};
  const std::uint64_t n_tab[] = {2, 100, 1024, 65536, 1000000};
  const std::uint64_t T_tab[] = {1, 7, 100, 1000};
  const double beta_tab[] = {0.5, 0.1, 0.01, 0.001};
  const double eps_tab[] = {0.5, 0.25, 1.0};
  const double cl_tab[] = {4.0, 1.0, 0.125};
  for (int i = 0; i < 20; ++i) {
    const auto s = s_tab[i % 4], n = n_tab[i % 5], T = T_tab[(i / 2) % 4];
    const double beta = beta_tab[(i / 3) % 4], eps = eps_tab[i % 3], cl = cl_tab[(i / 4) % 3];
    const DpParams p = ann_parameters(s, n, T, beta, eps, cl);
    const auto l = detail::oracle_l(s, n, beta, cl);
    const auto k = detail::oracle_k(l, T, beta, eps);
    check("ann_parameters", p.l == l && p.k == k,
          {{"s", s}, {"n", n}, {"T", T}, {"beta", beta}, {"eps", eps}, {"C_l", cl}, {"l", p.l}, {"k", p.k},
           {"oracle_l", l}, {"oracle_k", k}});
  }
  // Frozen reference values.
  check("ann_parameters", ann_parameters(1, 2, 1, 0.5, 0.5).l == 16, {{"case", "s=1,n=2,beta=0.5 -> l=16"}});
  check("ann_parameters", ann_copy_count(100, 100, 0.01, 0.5) == 2575160,
        {{"case", "l=100,eps=0.5,T=100,beta=0.01 -> k=2575160"}, {"k", ann_copy_count(100, 100, 0.01, 0.5)}});

  // amplified_epsilon
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t l = static_cast<std::uint64_t>(i) * 3;
    const std::uint64_t k = 6 + static_cast<std::uint64_t>(i) * 97;
    const double eps = 0.05 + 0.05 * i;
    const double got = amplified_epsilon(l, k, eps);
    const long double want = 6.0L * l * static_cast<long double>(eps) / k;
    check("amplified_epsilon", rel(got, want) <= 1e-14 || (want == 0 && got == 0),
          {{"l", l}, {"k", k}, {"eps", eps}, {"value", got}});
  }
  check("amplified_epsilon", amplified_epsilon(1, 6, 1.0) == 1.0, {{"case", "l=1,k=6,eps=1 -> 1"}});
  check("amplified_epsilon", std::abs(amplified_epsilon(100, 1200, 0.5) - 0.25) < 1e-15, {{"case", "-> 0.25"}});

  // advanced_composition
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t folds = 1 + static_cast<std::uint64_t>(i) * 13;
    const double eps = 0.001 * (i + 1), delta = 1e-6 * i, delta0 = 0.01 + 0.004 * i;
    const auto got = advanced_composition(folds, eps, delta, delta0);
    const long double we = std::sqrt(2.0L * folds * std::log(1.0L / delta0)) * eps + 2.0L * folds * eps * eps;
    const long double wd = delta0 + static_cast<long double>(folds) * delta;
    check("advanced_composition", rel(got.eps_total, we) <= 1e-12 && rel(got.delta_total, wd) <= 1e-12,
          {{"folds", folds}, {"eps", eps}, {"delta", delta}, {"delta0", delta0}, {"eps_total", got.eps_total}});
  }
  check("advanced_composition", std::abs(advanced_composition(1, 0.1, 0, 0.05).eps_total - 0.264774) < 1e-6,
        {{"case", "folds=1,eps=0.1,delta0=0.05 -> 0.2648"}});

  // sketch_dims
  const SketchConstants k = detail::sketch_constants(cfg);
  for (int i = 0; i < 20; ++i) {
    const std::size_t d = 2 + static_cast<std::size_t>(i) * 3;
    const std::size_t n = 512u << (i % 5);
    const double a = 0.1 + 0.04 * i, b = 0.005 * (1 + i % 4);
    const SketchDims got = sketch_dims(d, n, a, b, k);
    const long double lg = std::log(static_cast<long double>(n) / b);
    auto r = static_cast<std::size_t>(std::ceil(static_cast<long double>(k.C_r) * d * lg * lg * lg / (a * a)));
    r = std::max(r, d);
    auto m = static_cast<std::size_t>(std::ceil(static_cast<long double>(k.C_m) * (1.0L * d * d + d / (a * a * b))));
    if (r >= m) m = 2 * r;
    check("sketch_dims", got.r == r && got.m == m,
          {{"d", d}, {"n", n}, {"alpha", a}, {"beta_prime", b}, {"r", got.r}, {"m", got.m}});
  }

  // FWHT involution on integer inputs.
  for (std::size_t p = 0; p <= 10; ++p) {
    const std::size_t len = std::size_t{1} << p;
    std::vector<double> x(len), y;
    for (auto& v : x) v = static_cast<double>(static_cast<std::int64_t>(rng.uniform_index(2001)) - 1000);
    y = x;
    fwht(y);
    fwht(y);
    bool exact = true;
    for (std::size_t i = 0; i < len; ++i) exact = exact && y[i] == static_cast<double>(len) * x[i];
    check("fwht", exact, {{"length", len}});
  }

  // Sketch action against explicitly materialized matrices.
  for (std::size_t n : {8, 33, 64}) {
    const RandomSeed s = derive_seed(RandomSeed{seed}, n);
    const double e1 = detail::materialization_error(CountSketch(n, 16, s), n, rng);
    const double e2 = detail::materialization_error(Srht(n, std::min<std::size_t>(12, n - 2), s), n, rng);
    const double e3 = detail::materialization_error(ComposedSketch(n, 24, 10, s), n, rng);
    const double e4 = detail::materialization_error(GaussianSketch(n, 10, s), n, rng);
    check("materialization", std::max({e1, e2, e3, e4}) <= 1e-9,
          {{"n", n}, {"count_sketch", e1}, {"srht", e2}, {"composed", e3}, {"gaussian", e4}});
  }

  int total_fail = 0;
  json per_group = json::object();
  for (const auto& [g, c] : checked) {
    per_group[g] = {{"checked", c}, {"failed", failures[g]}};
    total_fail += failures[g];
  }
  rep.passed = total_fail == 0;
  rep.summary = per_group;
  rep.headline = std::to_string(rep.records.size() - static_cast<std::size_t>(total_fail)) + "/" +
                 std::to_string(rep.records.size()) +
                 " closed-form, FWHT and materialization checks exact";
  return rep;
}

// ---------------------------------------------------------------------------
// ann-bench

inline Report ann_bench_recall(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const std::size_t n = cfg.get_uint("params", "n", 10000);
  const std::size_t d = cfg.get_uint("params", "d", 256);
  const double c = cfg.get_double("params", "c", 2.0);
  const std::size_t r = cfg.get_uint("params", "r", 8);
  const std::size_t builds = cfg.get_uint("params", "builds", 4);
  const std::size_t queries = detail::trials(cfg, opt, 1000);
  const double threshold = cfg.get_double("params", "threshold", 0.9);
  const LshConfig lc = detail::lsh_config(cfg);
  const std::uint64_t seed = detail::seeds(cfg, opt).front();
  const std::size_t per_build = (queries + builds - 1) / builds;

  struct Out {
    std::size_t success = 0, found_target = 0, asked = 0, max_examined = 0;
    LshParams params;
    double build_s = 0, query_s = 0;
  };
  auto results = parallel_map<Out>(builds, [&](std::size_t b) {
    Out o;
    Rng rng(derive_seed(RandomSeed{seed}, 2 * b));
    const std::size_t q = std::min(per_build, queries - std::min(queries, b * per_build));
    auto inst = make_planted_hamming(n, d, c, r, q, rng);
    auto data = std::make_shared<const HammingDataset>(std::move(inst.data));
    Stopwatch sw;
    HammingLsh index(data, c, static_cast<double>(r), derive_seed(RandomSeed{seed}, 2 * b + 1), lc);
    o.build_s = sw.seconds();
    o.params = index.params();
    Stopwatch qw;
    for (std::size_t i = 0; i < inst.queries.size(); ++i) {
      LshQueryStats st;
      const auto got = index.query_all(inst.queries.point(i), std::nullopt, &st);
      o.max_examined = std::max<std::size_t>(o.max_examined, st.candidates_examined);
      o.success += !got.empty();
      o.found_target += std::any_of(got.begin(), got.end(), [&](const Neighbor& nb) { return nb.id == inst.targets[i]; });
      ++o.asked;
    }
    o.query_s = qw.seconds();
    return o;
  }, detail::workers(cfg, opt));

  std::size_t succ = 0, asked = 0;
  for (std::size_t b = 0; b < builds; ++b) {
    const auto& o = results[b];
    succ += o.success;
    asked += o.asked;
    rep.add(seed, b,
            {{"queries", o.asked}, {"success", o.success}, {"found_target", o.found_target},
             {"max_candidates_examined", o.max_examined}, {"probe_budget", o.params.probe_budget},
             {"tables", o.params.tables}, {"key_length", o.params.key_length}, {"rho", o.params.rho},
             {"budget_respected", o.max_examined <= o.params.probe_budget}},
            {{"build_seconds", o.build_s}, {"query_seconds", o.query_s}});
  }
  const double rate = static_cast<double>(succ) / static_cast<double>(asked);
  rep.passed = rate >= threshold;
  rep.summary = {{"success_rate", rate}, {"queries", asked}, {"threshold", threshold}};
  rep.headline = "oblivious Hamming LSH success " + std::to_string(succ) + "/" + std::to_string(asked) + " = " +
                 detail::fmt(rate) + " (n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                 ", r=" + std::to_string(r) + "; threshold " + detail::fmt(threshold) + ")";
  return rep;
}

namespace detail {

struct LazyEagerOutcome {
  std::size_t queries = 0, deletions = 0, mismatches = 0, nulls = 0, flushes = 0, materializations = 0;
  double seconds = 0;
};

template <class Lsh, class Inst>
LazyEagerOutcome lazy_eager_sequence(const Inst& inst, const AnnConfig& base, std::size_t ops, double delete_fraction,
                                     RandomSeed seed) {
  using Dataset = typename Lsh::Dataset;
  LazyEagerOutcome out;
  Stopwatch sw;
  auto data = std::make_shared<const Dataset>(inst.data);
  AnnConfig lazy_cfg = base, eager_cfg = base;
  lazy_cfg.T = eager_cfg.T = ops;
  eager_cfg.theta = 1;
  AdaptiveAnnIndex<Lsh> lazy(data, lazy_cfg, derive_seed(seed, 1));
  AdaptiveAnnIndex<Lsh> eager(data, eager_cfg, derive_seed(seed, 1));
  Rng lazy_rng(derive_seed(seed, 2)), eager_rng(derive_seed(seed, 2)), ops_rng(derive_seed(seed, 3));
  std::vector<PointId> live(data->size());
  std::iota(live.begin(), live.end(), PointId{1});
  for (std::size_t op = 0; op < ops; ++op) {
    if (!live.empty() && ops_rng.uniform() < delete_fraction) {
      const std::size_t pos = ops_rng.uniform_index(live.size());
      lazy.delete_lazy(live[pos]);
      eager.delete_lazy(live[pos]);
      live[pos] = live.back();
      live.pop_back();
      ++out.deletions;
    } else {
      const auto q = inst.queries.point(ops_rng.uniform_index(inst.queries.size()));
      const AnnAnswer a = lazy.query(q, lazy_rng);
      const AnnAnswer b = eager.query(q, eager_rng);
      const bool same = a == b && lazy.last_counts() == eager.last_counts();
      out.mismatches += !same;
      out.nulls += a.is_null();
      ++out.queries;
    }
  }
  out.flushes = lazy.stats().flush_events;
  out.materializations = lazy.stats().materializations + eager.stats().materializations;
  out.seconds = sw.seconds();
  return out;
}

}  // namespace detail

inline Report ann_bench_lazy_eager(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::string metric = cfg.get_string("params", "metric", "mixed");
  const std::size_t n = cfg.get_uint("params", "n", 400);
  const std::size_t ops = cfg.get_uint("params", "ops", 500);
  const double del = cfg.get_double("params", "delete_fraction", 0.4);
  const std::size_t qpool = cfg.get_uint("params", "queries", 100);
  AnnConfig base;
  base.c = cfg.get_double("params", "c", 2.0);
  base.beta = cfg.get_double("params", "beta", 0.01);
  base.C_l = cfg.get_double("constants", "C_l", 0.0625);
  base.theta = cfg.get_uint("constants", "theta", 0);
  base.cache_capacity = cfg.get_uint("constants", "cache_capacity", 64);
  base.lsh = detail::lsh_config(cfg);
  if (metric != "mixed" && metric != "hamming" && metric != "l2")
    throw cfg.field_error("params", "metric", "expected hamming, l2 or mixed");

  auto outcomes = parallel_map<std::pair<std::string, detail::LazyEagerOutcome>>(
      seeds.size(),
      [&](std::size_t i) {
        const RandomSeed s{seeds[i]};
        Rng rng(derive_seed(s, 0));
        const bool hamming = metric == "hamming" || (metric == "mixed" && i % 2 == 0);
        if (hamming) {
          const std::size_t d = cfg.get_uint("params", "d", 128);
          const std::size_t r = static_cast<std::size_t>(cfg.get_double("params", "r", 4));
          AnnConfig c = base;
          c.r = static_cast<double>(r);
          auto inst = make_planted_hamming(n, d, c.c, r, qpool, rng);
          return std::make_pair(std::string("hamming"),
                                detail::lazy_eager_sequence<HammingLsh>(inst, c, ops, del, s));
        }
        const std::size_t d = cfg.get_uint("params", "d", 32);
        AnnConfig c = base;
        c.r = cfg.get_double("params", "r", 1.0);
        if (!cfg.has("constants", "jl_dim")) c.lsh.jl_dim = 24;
        auto inst = make_planted_l2(n, d, c.c, c.r, cfg.get_double("params", "spread", 1.0), qpool, rng);
        return std::make_pair(std::string("l2"), detail::lazy_eager_sequence<L2Lsh>(inst, c, ops, del, s));
      },
      detail::workers(cfg, opt));

  std::size_t total_q = 0, total_mis = 0, total_flush = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& [m, o] = outcomes[i];
    total_q += o.queries;
    total_mis += o.mismatches;
    total_flush += o.flushes;
    rep.add(seeds[i], 0,
            {{"metric", m}, {"queries", o.queries}, {"deletions", o.deletions}, {"mismatches", o.mismatches},
             {"null_answers", o.nulls}, {"lazy_flushes", o.flushes}, {"materializations", o.materializations}},
            {{"seconds", o.seconds}});
  }
  rep.passed = total_mis == 0;
  rep.summary = {{"sequences", seeds.size()}, {"queries", total_q}, {"mismatches", total_mis},
                 {"lazy_flushes", total_flush}};
  rep.headline = std::to_string(total_mis) + " lazy/eager mismatches over " + std::to_string(total_q) +
                 " queries in " + std::to_string(seeds.size()) + " sequences of " + std::to_string(ops) +
                 " ops (" + std::to_string(total_flush) + " block flushes)";
  return rep;
}

// ---------------------------------------------------------------------------
// attack

inline Report attack_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::size_t n = cfg.get_uint("params", "n", 1024);
  const std::size_t d = cfg.get_uint("params", "d", 512);
  const double c = cfg.get_double("params", "c", 2.0);
  const std::size_t r = cfg.get_uint("params", "r", 8);
  AttackConfig ac;
  ac.lambda = cfg.get_uint("params", "lambda", 16);
  ac.C_a = cfg.get_double("constants", "C_a", 1.0);
  ac.initial_flips = cfg.get_uint("params", "initial_flips", 0);
  const std::uint64_t budget = attack_budget(c, static_cast<double>(r), ac.lambda, ac.C_a);
  AnnConfig robust;
  robust.c = c;
  robust.r = static_cast<double>(r);
  robust.s_bound = cfg.get_uint("params", "s", 1);
  robust.T = budget;
  robust.beta = cfg.get_double("params", "beta", 0.01);
  robust.C_l = cfg.get_double("constants", "C_l", 0.125);
  robust.cache_capacity = cfg.get_uint("constants", "cache_capacity", 64);
  robust.lsh = detail::lsh_config(cfg);
  const std::uint64_t min_baseline = cfg.get_uint("params", "threshold", 5);
  const std::size_t min_robust = seeds.size() - seeds.size() / 20;

  struct Out {
    bool exact_success = false, baseline_success = false, robust_correct = false, robust_attack_success = false;
    std::uint64_t baseline_queries = 0, robust_queries = 0, robust_near_queries = 0, robust_near_nulls = 0;
    std::size_t baseline_flips = 0;
    std::uint64_t l = 0, k = 0;
    double baseline_s = 0, robust_s = 0;
    std::size_t transcript_steps = 0;
  };
  auto results = parallel_map<Out>(seeds.size(), [&](std::size_t i) {
    Out o;
    const RandomSeed s{seeds[i]};
    Rng irng(derive_seed(s, 0));
    const IsolatedInstance inst = make_isolated_instance(n, d, c, r, irng);
    auto data = std::make_shared<const HammingDataset>(inst.data);

    Rng erng(derive_seed(s, 6));
    o.exact_success = kms_attack(exact_oracle(inst.data, c, static_cast<double>(r)), inst, budget, erng, ac).success;

    Stopwatch sw;
    HammingLsh single(data, c, static_cast<double>(r), derive_seed(s, 1), robust.lsh);
    Rng brng(derive_seed(s, 2));
    const AttackResult base = kms_attack(lsh_oracle(single), inst, budget, brng, ac);
    o.baseline_success = base.success;
    o.baseline_queries = base.queries_used;
    o.baseline_flips = base.flips.size();
    o.baseline_s = sw.seconds();

    Stopwatch rw;
    AdaptiveAnnIndex<HammingLsh> index(data, robust, derive_seed(s, 3));
    o.l = index.dp().l;
    o.k = index.dp().k;
    Rng qrng(derive_seed(s, 5)), arng(derive_seed(s, 4));
    const AttackResult att = kms_attack(adaptive_oracle(index, qrng), inst, budget, arng, ac);
    o.robust_attack_success = att.success;
    o.robust_queries = att.queries_used;
    o.robust_correct = attack_queries_all_correct(att.transcript, static_cast<double>(r));
    for (const auto& st : att.transcript.steps())
      if (st.input.at("distance_to_z").get<double>() <= static_cast<double>(r)) {
        ++o.robust_near_queries;
        o.robust_near_nulls += st.output.at("id").is_null();
      }
    o.transcript_steps = att.transcript.size();
    o.robust_s = rw.seconds();
    return o;
  }, detail::workers(cfg, opt));

  std::size_t base_wins = 0, robust_ok = 0, exact_wins = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& o = results[i];
    base_wins += o.baseline_success;
    robust_ok += o.robust_correct;
    exact_wins += o.exact_success;
    rep.add(seeds[i], 0,
            {{"exact_oracle_attack_success", o.exact_success}, {"baseline_attack_success", o.baseline_success},
             {"baseline_queries", o.baseline_queries}, {"baseline_final_flips", o.baseline_flips},
             {"robust_all_correct", o.robust_correct}, {"robust_attack_success", o.robust_attack_success},
             {"robust_queries", o.robust_queries}, {"robust_queries_within_r", o.robust_near_queries},
             {"robust_nulls_within_r", o.robust_near_nulls}, {"robust_l", o.l}, {"robust_k", o.k},
             {"transcript_steps", o.transcript_steps}, {"budget", budget}},
            {{"baseline_seconds", o.baseline_s}, {"robust_seconds", o.robust_s}});
  }
  rep.passed = base_wins >= min_baseline && robust_ok >= min_robust && exact_wins == 0;
  rep.summary = {{"budget", budget}, {"baseline_successes", base_wins}, {"robust_correct_runs", robust_ok},
                 {"exact_oracle_successes", exact_wins}, {"runs", seeds.size()},
                 {"baseline_threshold", min_baseline}, {"robust_threshold", min_robust}};
  rep.headline = "attack beats single LSH in " + std::to_string(base_wins) + "/" + std::to_string(seeds.size()) +
                 " (need >= " + std::to_string(min_baseline) + "); robust index correct in " +
                 std::to_string(robust_ok) + "/" + std::to_string(seeds.size()) + " (need >= " +
                 std::to_string(min_robust) + "); budget " + std::to_string(budget) + " queries";
  return rep;
}

// ---------------------------------------------------------------------------
// reg-bench

inline Report reg_bench_linf(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::size_t n = cfg.get_uint("params", "n", 4096);
  const std::size_t d = cfg.get_uint("params", "d", 32);
  const double kappa = cfg.get_double("params", "kappa", 4.0);
  const double a = cfg.get_double("params", "alpha_eff", 0.25);
  const double bp = cfg.get_double("params", "beta_prime", 0.01);
  const double residual = cfg.get_double("params", "residual", 1.0);
  const double threshold = cfg.get_double("params", "threshold", 0.95);
  const SketchDims dims = sketch_dims(d, n, a, bp, detail::sketch_constants(cfg));

  struct Out {
    double err = 0, bound = 0;
    bool ok = false;
    double seconds = 0;
  };
  auto results = parallel_map<Out>(seeds.size(), [&](std::size_t i) {
    Out o;
    Stopwatch sw;
    const RandomSeed s{seeds[i]};
    Rng rng(derive_seed(s, 0));
    const RegressionInstance inst = make_regression_instance(n, d, kappa, residual, kappa, rng);
    const auto& P = inst.problem;
    const Eigen::VectorXd xs = solve_least_squares(P.U, P.b).x;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(P.U);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    ComposedSketch S(n, dims.m, dims.r, derive_seed(s, 1));
    const Eigen::VectorXd xt = solve_least_squares(S.apply(P.U), S.apply(P.b)).x;
    o.err = (xt - xs).cwiseAbs().maxCoeff();
    o.bound = a / std::sqrt(static_cast<double>(d)) * P.cost(xs) / smin;
    o.ok = o.err <= o.bound;
    o.seconds = sw.seconds();
    return o;
  }, detail::workers(cfg, opt));

  std::size_t ok = 0;
  double worst = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    ok += results[i].ok;
    worst = std::max(worst, results[i].err / results[i].bound);
    rep.add(seeds[i], 0, {{"linf_error", results[i].err}, {"bound", results[i].bound},
                          {"ratio", results[i].err / results[i].bound}, {"pass", results[i].ok}},
            {{"seconds", results[i].seconds}});
  }
  const double frac = static_cast<double>(ok) / static_cast<double>(seeds.size());
  rep.passed = frac >= threshold;
  rep.summary = {{"r", dims.r}, {"m", dims.m}, {"clamped", dims.clamped}, {"passing", ok},
                 {"trials", seeds.size()}, {"worst_ratio", worst}};
  rep.headline = "l_inf bound held in " + std::to_string(ok) + "/" + std::to_string(seeds.size()) +
                 " trials at r=" + std::to_string(dims.r) + ", m=" + std::to_string(dims.m) + " (need " +
                 detail::fmt(threshold) + ")";
  return rep;
}

namespace detail {

struct AdaptiveRunOut {
  double max_ratio = 0, mean_ratio = 0, max_kappa = 0;
  std::size_t clipped = 0, steps = 0, materializations = 0, rank_deficient = 0, regenerations = 0;
  std::uint64_t k = 0, s_med = 0, r = 0;
  bool ok = false;
  double seconds = 0;
};

inline AdaptiveRunOut summarize_run(const RegAdversaryResult& res, double alpha) {
  AdaptiveRunOut o;
  double sum = 0;
  for (const auto& s : res.steps) {
    o.max_ratio = std::max(o.max_ratio, s.ratio);
    o.max_kappa = std::max(o.max_kappa, s.kappa);
    o.clipped += s.clipped;
    sum += s.ratio;
  }
  o.steps = res.steps.size();
  o.mean_ratio = sum / static_cast<double>(std::max<std::size_t>(1, o.steps));
  o.ok = o.max_ratio <= 1.0 + alpha;
  return o;
}

}  // namespace detail

inline Report reg_bench_adaptive(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::string mode = cfg.get_string("params", "mode", "dp");
  std::vector<std::string> engines;
  if (mode == "dp+precond") engines = {"dp", "precond"};
  else if (mode == "dp" || mode == "precond" || mode == "path") engines = {mode};
  else throw cfg.field_error("params", "mode", "expected dp, precond, path or dp+precond");

  const std::size_t n = cfg.get_uint("params", "n", 4096);
  const std::size_t d = cfg.get_uint("params", "d", 16);
  const double kappa_bound = cfg.get_double("params", "kappa_bound", 4.0);
  const double kappa = cfg.get_double("params", "kappa", 3.0);
  const double alpha = cfg.get_double("params", "alpha", 0.5);
  const double beta = cfg.get_double("params", "beta", 0.1);
  const double eps = cfg.get_double("params", "eps_dp", 0.5);
  const double mult = cfg.get_double("params", "sample_multiplier", 100.0);
  const double residual = cfg.get_double("params", "residual", 1.0);
  const double threshold = cfg.get_double("params", "threshold", 0.9);
  const SketchConstants sk = detail::sketch_constants(cfg);
  const OutputGrid grid = detail::grid(cfg);

  bool all_pass = true;
  json summary = json::object();
  std::string headline;
  for (const std::string& engine : engines) {
    const std::uint64_t steps = engine == "precond" ? cfg.get_uint("params", "steps", 32) : cfg.get_uint("params", "T", 16);
    auto results = parallel_map<detail::AdaptiveRunOut>(seeds.size(), [&](std::size_t i) {
      Stopwatch sw;
      const RandomSeed s{seeds[i]};
      Rng irng(derive_seed(s, 0));
      const RegressionInstance inst = make_regression_instance(n, d, kappa, residual, kappa_bound, irng);
      RegAdversaryConfig ac;
      ac.steps = steps;
      ac.kappa_bound = kappa_bound;
      ac.eta_u = cfg.get_double("params", "eta_u", ac.eta_u);
      ac.eta_b = cfg.get_double("params", "eta_b", ac.eta_b);
      ac.shift_sparsity = cfg.get_uint("params", "shift_sparsity", 4);
      Rng arng(derive_seed(s, 2));
      detail::AdaptiveRunOut o;
      if (engine == "dp") {
        RegDpConfig c;
        c.alpha = alpha;
        c.beta = beta;
        c.T = steps;
        c.eps_dp = eps;
        c.sample_multiplier = mult;
        c.sketch = sk;
        c.grid = grid;
        c.cache_capacity = cfg.get_uint("constants", "cache_capacity", 64);
        RegDpEngine e(inst.problem, c, derive_seed(s, 1));
        EngineRef<RegDpEngine> h(e);
        o = detail::summarize_run(regression_adversary(h, inst.problem, ac, arng), alpha);
        o.k = e.k();
        o.s_med = e.s_med();
        o.r = e.dims().r;
        o.materializations = e.stats().materializations;
        o.rank_deficient = e.stats().rank_deficient_solves;
      } else if (engine == "precond") {
        RegPrecondConfig c;
        c.alpha = alpha;
        c.beta = beta;
        c.T = steps;
        c.batch = cfg.get_uint("params", "batch", 8);
        c.sparsity = ac.shift_sparsity;
        c.eps_dp = eps;
        c.sample_multiplier = mult;
        c.sketch = sk;
        c.grid = grid;
        c.C_pre = cfg.get_double("constants", "C_pre", 3.0);
        c.cache_capacity = cfg.get_uint("constants", "cache_capacity", 64);
        RegPrecondEngine e(inst.problem, c, derive_seed(s, 1));
        EngineRef<RegPrecondEngine> h(e);
        ac.mode = RegAdversaryMode::LabelShift;
        o = detail::summarize_run(regression_adversary(h, inst.problem, ac, arng), alpha);
        o.k = e.k();
        o.s_med = e.s_med();
        o.r = e.dims().r;
        o.materializations = e.stats().materializations;
        o.rank_deficient = e.stats().rank_deficient_solves;
        o.regenerations = e.stats().regenerations;
      } else {
        RegPathConfig c;
        c.alpha = alpha;
        c.beta = beta;
        c.T = steps;
        c.C_p = cfg.get_double("constants", "C_p", 1.0);
        c.path_budget = cfg.get_double("params", "path_budget", -1.0);
        c.grid = grid;
        RegPathEngine e(inst.problem, c, derive_seed(s, 1));
        EngineRef<RegPathEngine> h(e);
        o = detail::summarize_run(regression_adversary(h, inst.problem, ac, arng), alpha);
        o.r = e.r();
      }
      o.seconds = sw.seconds();
      return o;
    }, detail::workers(cfg, opt));

    std::size_t ok = 0;
    double worst = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& o = results[i];
      ok += o.ok;
      worst = std::max(worst, o.max_ratio);
      rep.add(seeds[i], 0,
              {{"engine", engine}, {"steps", o.steps}, {"max_ratio", o.max_ratio}, {"mean_ratio", o.mean_ratio},
               {"max_kappa", o.max_kappa}, {"clipped_steps", o.clipped}, {"pass", o.ok}, {"k", o.k},
               {"s_med", o.s_med}, {"r", o.r}, {"materializations", o.materializations},
               {"rank_deficient_solves", o.rank_deficient}, {"regenerations", o.regenerations}},
              {{"seconds", o.seconds}});
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(seeds.size());
    all_pass = all_pass && frac >= threshold;
    summary[engine] = {{"passing_runs", ok}, {"runs", seeds.size()}, {"worst_ratio", worst}, {"steps", steps}};
    if (!headline.empty()) headline += "; ";
    headline += engine + ": ratio <= " + detail::fmt(1 + alpha) + " at every step in " + std::to_string(ok) + "/" +
                std::to_string(seeds.size()) + " runs (worst " + detail::fmt(worst, 6) + ")";
  }
  rep.passed = all_pass;
  rep.summary = summary;
  rep.headline = headline + " (need " + detail::fmt(threshold) + ")";
  return rep;
}

inline Report reg_bench_precond_kappa(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::size_t n = cfg.get_uint("params", "n", 2048);
  const std::size_t d = cfg.get_uint("params", "d", 32);
  const auto kappas = detail::doubles(cfg, "kappas", "1e2,1e4,1e6");
  const double C_pre = cfg.get_double("constants", "C_pre", 3.0);
  const double alpha = cfg.get_double("params", "alpha", 0.5);
  const SketchConstants sk = detail::sketch_constants(cfg);
  double worst = 0;
  bool ok = true;
  std::size_t step = 0;
  for (double kappa : kappas)
    for (std::uint64_t seed : seeds) {
      Stopwatch sw;
      const RandomSeed s{seed};
      Rng rng(derive_seed(s, static_cast<std::uint64_t>(std::log10(kappa) * 1000)));
      const RegressionInstance inst = make_regression_instance(n, d, kappa, 1.0, kappa, rng);
      RegPrecondConfig c;
      c.alpha = alpha;
      c.T = 1;
      c.C_pre = C_pre;
      c.sketch = sk;
      RegPrecondEngine e(inst.problem, c, derive_seed(s, 1));
      const double measured_kappa_u = condition_number(inst.problem.U);
      worst = std::max(worst, e.kappa_UP());
      ok = ok && e.kappa_UP() <= C_pre;
      rep.add(seed, step++,
              {{"kappa_U", measured_kappa_u}, {"kappa_requested", kappa}, {"kappa_UP", e.kappa_UP()},
               {"attempts", e.preconditioner_attempts()}, {"pass", e.kappa_UP() <= C_pre}},
              {{"seconds", sw.seconds()}});
    }
  rep.passed = ok;
  rep.summary = {{"worst_kappa_UP", worst}, {"C_pre", C_pre}};
  rep.headline = "max kappa(UP) = " + detail::fmt(worst, 4) + " over kappa(U) in {" +
                 cfg.get_string("params", "kappas", "1e2,1e4,1e6") + "} (limit " + detail::fmt(C_pre) + ")";
  return rep;
}

// ---------------------------------------------------------------------------
// match-demo

inline Report match_demo(const ExperimentConfig& cfg, const RunOptions& opt) {
  Report rep;
  const auto seeds = detail::seeds(cfg, opt);
  const std::size_t n = cfg.get_uint("params", "n", 200);
  const std::size_t d = cfg.get_uint("params", "d", 32);
  const double noise = cfg.get_double("params", "noise", 0.5);
  const double threshold = cfg.get_double("params", "threshold", 0.8);
  AnnConfig ac;
  ac.c = cfg.get_double("params", "c", 2.0);
  ac.r = cfg.get_double("params", "r", 0.5);
  ac.beta = cfg.get_double("params", "beta", 0.01);
  ac.T = n;
  ac.C_l = cfg.get_double("constants", "C_l", 0.125);
  ac.lsh = detail::lsh_config(cfg);
  if (!cfg.has("constants", "jl_dim")) ac.lsh.jl_dim = 40;
  const double spread = cfg.get_double("params", "spread", 1.0);

  struct Out {
    double robust_weight = 0, exact_weight = 0;
    std::size_t robust_matched = 0, exact_matched = 0;
    bool distinct = true, within_cr = true;
    double seconds = 0;
  };
  auto results = parallel_map<Out>(seeds.size(), [&](std::size_t i) {
    Out o;
    Stopwatch sw;
    const RandomSeed s{seeds[i]};
    Rng rng(derive_seed(s, 0));
    auto inst = make_planted_l2(n, d, ac.c, ac.r, spread, 0, rng);
    auto data = std::make_shared<const EuclideanDataset>(std::move(inst.data));
    // Arrivals: every point once, in random order, displaced by noise * r.
    EuclideanDataset arrivals(d);
    std::vector<double> p(d);
    for (std::size_t idx : sample_distinct(n, n, rng)) {
      const auto base = data->point(idx);
      double norm = 0;
      for (auto& x : p) {
        x = rng.normal();
        norm += x * x;
      }
      for (std::size_t j = 0; j < d; ++j) p[j] = base[j] + noise * ac.r * p[j] / std::sqrt(norm);
      arrivals.push_back(p);
    }
    // Exact greedy baseline: nearest remaining point within cr.
    std::vector<char> taken(n + 1, 0);
    for (std::size_t a = 0; a < arrivals.size(); ++a) {
      double best = INFINITY;
      PointId id = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (taken[j + 1]) continue;
        const double dist = data->distance(arrivals.point(a), data->point(j));
        if (dist <= ac.c * ac.r && dist < best) {
          best = dist;
          id = static_cast<PointId>(j + 1);
        }
      }
      if (id) {
        taken[id] = 1;
        o.exact_weight += 1.0 / best;
        ++o.exact_matched;
      }
    }
    L2AnnIndex index(data, ac, derive_seed(s, 1));
    Rng qrng(derive_seed(s, 2));
    const auto matches = greedy_match(index, arrivals, qrng);
    std::vector<char> used(n + 1, 0);
    for (const auto& m : matches) {
      if (!m.id) continue;
      if (used[*m.id]) o.distinct = false;
      used[*m.id] = 1;
      if (m.distance > ac.c * ac.r) o.within_cr = false;
      o.robust_weight += 1.0 / m.distance;
      ++o.robust_matched;
    }
    o.seconds = sw.seconds();
    return o;
  }, detail::workers(cfg, opt));

  bool ok = true;
  double worst = INFINITY;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& o = results[i];
    const double ratio = o.robust_weight / o.exact_weight;
    worst = std::min(worst, ratio);
    const bool pass = o.distinct && o.within_cr && ratio >= threshold;
    ok = ok && pass;
    rep.add(seeds[i], 0,
            {{"robust_weight", o.robust_weight}, {"exact_weight", o.exact_weight}, {"weight_ratio", ratio},
             {"robust_matched", o.robust_matched}, {"exact_matched", o.exact_matched}, {"distinct", o.distinct},
             {"within_cr", o.within_cr}, {"pass", pass}},
            {{"seconds", o.seconds}});
  }
  rep.passed = ok;
  rep.summary = {{"worst_weight_ratio", worst}, {"threshold", threshold}, {"runs", seeds.size()}};
  rep.headline = "greedy matching weight >= " + detail::fmt(worst, 4) + " x exact-NN greedy over " +
                 std::to_string(seeds.size()) + " runs, ids distinct (need " + detail::fmt(threshold) + ")";
  return rep;
}

// ---------------------------------------------------------------------------

inline Report run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const std::string& k = cfg.kind();
  const std::string& t = cfg.test();
  auto unknown = [&]() { return cfg.field_error("experiment", "test", "unknown test '" + t + "' for kind " + k); };
  Report rep;
  Stopwatch sw;
  if (k == "dist-check") {
    if (t == "equivalence" || t.empty()) rep = dist_check_equivalence(cfg, opt);
    else if (t == "acceptance") rep = dist_check_acceptance(cfg, opt);
    else if (t == "tail") rep = dist_check_tail(cfg, opt);
    else if (t == "runtime") rep = dist_check_runtime(cfg, opt);
    else if (t == "closed-forms") rep = dist_check_closed_forms(cfg, opt);
    else throw unknown();
  } else if (k == "ann-bench") {
    if (t == "recall" || t.empty()) rep = ann_bench_recall(cfg, opt);
    else if (t == "lazy-eager") rep = ann_bench_lazy_eager(cfg, opt);
    else throw unknown();
  } else if (k == "attack") {
    if (t == "isolated" || t.empty()) rep = attack_experiment(cfg, opt);
    else throw unknown();
  } else if (k == "reg-bench") {
    if (t == "linf" || t.empty()) rep = reg_bench_linf(cfg, opt);
    else if (t == "adaptive") rep = reg_bench_adaptive(cfg, opt);
    else if (t == "precond-kappa") rep = reg_bench_precond_kappa(cfg, opt);
    else throw unknown();
  } else if (k == "match-demo") {
    if (t == "greedy" || t.empty()) rep = match_demo(cfg, opt);
    else throw unknown();
  }
  rep.kind = k;
  rep.test = t;
  rep.config_echo = cfg.text();
  rep.summary_timing["total_seconds"] = sw.seconds();
  return rep;
}

}  // namespace advsearch::harness
