#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "advsearch/errors.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

struct VectorEntry {
  std::size_t index;
  double value;
};

struct MatrixEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

// Unnormalized Walsh-Hadamard transform; applying it twice scales by the length.
inline void fwht(std::span<double> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw ParameterError("fwht: length must be a power of two");
  for (std::size_t j = 0; j + 1 < n; j += 2) {
    const double a = x[j], b = x[j + 1];
    x[j] = a + b;
    x[j + 1] = a - b;
  }
  // From stride 2 on, butterflies come in aligned pairs; same sums, two lanes at a time.
  double* p = x.data();
  for (std::size_t h = 2; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += h << 1)
      for (std::size_t j = i; j < i + h; j += 2) {
        const Eigen::Array2d a = Eigen::Map<const Eigen::Array2d>(p + j);
        const Eigen::Array2d b = Eigen::Map<const Eigen::Array2d>(p + j + h);
        Eigen::Map<Eigen::Array2d>(p + j) = a + b;
        Eigen::Map<Eigen::Array2d>(p + j + h) = a - b;
      }
}

// Entry (a, b) of the Sylvester Hadamard matrix.
inline double hadamard_entry(std::size_t a, std::size_t b) {
  return (std::popcount(a & b) & 1) ? -1.0 : 1.0;
}

// Polynomial hash of degree k-1 over GF(2^61 - 1): a k-wise independent family.
class PolynomialHash {
 public:
  static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

  PolynomialHash(std::size_t k, Rng& rng) : coeffs_(k) {
    for (auto& c : coeffs_) c = rng.uniform_index(kPrime);
  }

  std::uint64_t operator()(std::uint64_t x) const {
    x %= kPrime;
    std::uint64_t acc = 0;
    for (std::uint64_t c : coeffs_) acc = add(mul(acc, x), c);
    return acc;
  }

 private:
  static std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    const std::uint64_t lo = static_cast<std::uint64_t>(p & kPrime);
    const std::uint64_t hi = static_cast<std::uint64_t>(p >> 61);
    return add(lo, hi);
  }
  static std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a + b;
    return s >= kPrime ? s - kPrime : s;
  }

  std::vector<std::uint64_t> coeffs_;
};

// n -> m CountSketch with a pairwise independent bucket map and 4-wise
// independent signs.
class CountSketch {
 public:
  CountSketch(std::size_t n, std::size_t m, RandomSeed seed) : n_(n), m_(m), bucket_(n), sign_(n) {
    if (n == 0 || m == 0) throw ParameterError("CountSketch: dimensions must be positive");
    Rng rng(seed);
    PolynomialHash h(2, rng), s(4, rng);
    for (std::size_t i = 0; i < n; ++i) {
      bucket_[i] = static_cast<std::uint32_t>(h(i) % m);
      sign_[i] = (s(i) & 1) ? 1.0 : -1.0;
    }
  }

  std::size_t input_dim() const { return n_; }
  std::size_t output_dim() const { return m_; }
  std::size_t bucket(std::size_t i) const { return bucket_.at(i); }
  double sign(std::size_t i) const { return sign_.at(i); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& a) const {
    if (static_cast<std::size_t>(a.rows()) != n_) throw ParameterError("CountSketch: dimension mismatch");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m_, a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double* col = a.col(j).data();
      double* o = out.col(j).data();
      for (std::size_t i = 0; i < n_; ++i) o[bucket_[i]] += sign_[i] * col[i];
    }
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return apply(Eigen::MatrixXd(v)).col(0);
  }

  // Sparse input -> sparse output, duplicates merged, ascending by index.
  std::vector<VectorEntry> apply_sparse(std::span<const VectorEntry> v) const {
    std::vector<VectorEntry> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (e.index >= n_) throw ParameterError("CountSketch: index out of range");
      out.push_back({bucket_[e.index], sign_[e.index] * e.value});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const VectorEntry& a, const VectorEntry& b) { return a.index < b.index; });
    std::vector<VectorEntry> merged;
    for (const auto& e : out) {
      if (!merged.empty() && merged.back().index == e.index) merged.back().value += e.value;
      else merged.push_back(e);
    }
    return merged;
  }

 private:
  std::size_t n_, m_;
  std::vector<std::uint32_t> bucket_;
  std::vector<double> sign_;
};

// m -> r subsampled randomized Hadamard transform (1/sqrt(r)) P H D, with the
// input zero-padded to the next power of two and rows sampled with replacement.
class Srht {
 public:
  Srht(std::size_t m, std::size_t r, RandomSeed seed)
      : m_(m), padded_(next_power_of_two(m)), r_(r), signs_(padded_), rows_(r) {
    if (m == 0 || r == 0) throw ParameterError("Srht: dimensions must be positive");
    if (r > padded_) throw ParameterError("Srht: r exceeds padded input dimension");
    Rng rng(seed);
    for (double& s : signs_) s = (rng.next_u64() & 1) ? 1.0 : -1.0;
    for (auto& row : rows_) row = rng.uniform_index(padded_);
    scale_ = 1.0 / std::sqrt(static_cast<double>(r_));
  }

  std::size_t input_dim() const { return m_; }
  std::size_t padded_dim() const { return padded_; }
  std::size_t output_dim() const { return r_; }
  double scale() const { return scale_; }
  double diagonal_sign(std::size_t i) const { return signs_.at(i); }
  std::size_t sampled_row(std::size_t j) const { return rows_.at(j); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& y) const {
    if (static_cast<std::size_t>(y.rows()) != m_) throw ParameterError("Srht: dimension mismatch");
    Eigen::MatrixXd out(r_, y.cols());
    std::vector<double> buf(padded_);
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      transform_column(y.col(c).data(), buf);
      for (std::size_t j = 0; j < r_; ++j) out(j, c) = scale_ * buf[rows_[j]];
    }
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return apply(Eigen::MatrixXd(v)).col(0); }

  // Few nonzeros: direct Hadamard entries in O(r * nnz); otherwise one FWHT.
  Eigen::VectorXd apply_sparse(std::span<const VectorEntry> v) const {
    for (const auto& e : v)
      if (e.index >= m_) throw ParameterError("Srht: index out of range");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(r_);
    const double log_len = std::log2(static_cast<double>(padded_));
    if (static_cast<double>(v.size()) * static_cast<double>(r_) <=
        static_cast<double>(padded_) * log_len + static_cast<double>(r_)) {
      for (std::size_t j = 0; j < r_; ++j) {
        double acc = 0;
        for (const auto& e : v) acc += hadamard_entry(rows_[j], e.index) * signs_[e.index] * e.value;
        out[j] = scale_ * acc;
      }
      return out;
    }
    std::vector<double> dense(m_, 0.0), buf(padded_);
    for (const auto& e : v) dense[e.index] += e.value;
    transform_column(dense.data(), buf);
    for (std::size_t j = 0; j < r_; ++j) out[j] = scale_ * buf[rows_[j]];
    return out;
  }

 private:
  void transform_column(const double* col, std::vector<double>& buf) const {
    for (std::size_t i = 0; i < m_; ++i) buf[i] = signs_[i] * col[i];
    std::fill(buf.begin() + m_, buf.end(), 0.0);
    fwht(buf);
  }

  std::size_t m_, padded_, r_;
  std::vector<double> signs_;
  std::vector<std::size_t> rows_;
  double scale_ = 1.0;
};

// S_SRHT * S_CS : n -> m -> r.
class ComposedSketch {
 public:
  ComposedSketch(std::size_t n, std::size_t m, std::size_t r, RandomSeed seed)
      : cs_(n, m, derive_seed(seed, 0)), srht_(m, r, derive_seed(seed, 1)) {}

  const CountSketch& count_sketch() const { return cs_; }
  const Srht& srht() const { return srht_; }
  std::size_t input_dim() const { return cs_.input_dim(); }
  std::size_t output_dim() const { return srht_.output_dim(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& a) const { return srht_.apply(cs_.apply(a)); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return srht_.apply(cs_.apply(v)); }

  Eigen::VectorXd apply_sparse(std::span<const VectorEntry> v) const {
    const auto mid = cs_.apply_sparse(v);
    return srht_.apply_sparse(mid);
  }

  // Sketch of the sparse n x cols matrix given by entries.
  Eigen::MatrixXd apply_sparse(std::span<const MatrixEntry> entries, std::size_t cols) const {
    return apply_sparse_columns(*this, entries, cols);
  }

  template <class Sketch>
  static Eigen::MatrixXd apply_sparse_columns(const Sketch& s, std::span<const MatrixEntry> entries,
                                              std::size_t cols) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.output_dim(), cols);
    std::vector<std::vector<VectorEntry>> by_col(cols);
    for (const auto& e : entries) {
      if (e.col >= cols) throw ParameterError("sketch: column out of range");
      by_col[e.col].push_back({e.row, e.value});
    }
    for (std::size_t c = 0; c < cols; ++c)
      if (!by_col[c].empty()) out.col(c) = s.apply_sparse(by_col[c]);
    return out;
  }

 private:
  CountSketch cs_;
  Srht srht_;
};

// n -> r Gaussian sketch with i.i.d. N(0, 1/r) entries. Column i is generated
// from a counter-based stream keyed on (seed, i), so any column can be
// regenerated on its own.
class GaussianSketch {
 public:
  GaussianSketch(std::size_t n, std::size_t r, RandomSeed seed) : n_(n), r_(r), seed_(seed) {
    if (n == 0 || r == 0) throw ParameterError("GaussianSketch: dimensions must be positive");
    scale_ = 1.0 / std::sqrt(static_cast<double>(r));
  }

  std::size_t input_dim() const { return n_; }
  std::size_t output_dim() const { return r_; }

  Eigen::VectorXd column(std::size_t i) const {
    if (i >= n_) throw ParameterError("GaussianSketch: column out of range");
    Eigen::VectorXd col(r_);
    const std::uint64_t key = derive_seed(seed_.value, i);
    for (std::size_t j = 0; j < r_; ++j) col[j] = scale_ * normal_quantile(counter_uniform(key, j));
    return col;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& a) const {
    if (static_cast<std::size_t>(a.rows()) != n_) throw ParameterError("GaussianSketch: dimension mismatch");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r_, a.cols());
    for (std::size_t i = 0; i < n_; ++i) out.noalias() += column(i) * a.row(i);
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return apply(Eigen::MatrixXd(v)).col(0); }

  Eigen::VectorXd apply_sparse(std::span<const VectorEntry> v) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(r_);
    for (const auto& e : v) out += e.value * column(e.index);
    return out;
  }

  Eigen::MatrixXd apply_sparse(std::span<const MatrixEntry> entries, std::size_t cols) const {
    return ComposedSketch::apply_sparse_columns(*this, entries, cols);
  }

 private:
  std::size_t n_, r_;
  RandomSeed seed_;
  double scale_ = 1.0;
};

// Calibrated against the l_inf error of sketched least squares at n = 4096,
// d = 32, kappa 4, alpha' = 0.25, beta' = 0.01; see configs/calibration.
struct SketchConstants {
  double C_r = 0x1.0p-8;
  double C_m = 0.25;
};

struct SketchDims {
  std::size_t r = 0;
  std::size_t m = 0;
  bool clamped = false;  // m was raised to 2r
};

// r = ceil(C_r d ln^3(n/b') / a'^2), m = ceil(C_m (d^2 + d / (a'^2 b'))).
inline SketchDims sketch_dims(std::size_t d, std::size_t n, double alpha_eff, double beta_prime,
                              const SketchConstants& k = {}) {
  if (!(alpha_eff > 0 && alpha_eff < 1)) throw ParameterError("sketch_dims: alpha' must lie in (0,1)");
  if (!(beta_prime > 0 && beta_prime < 1)) throw ParameterError("sketch_dims: beta' must lie in (0,1)");
  if (d == 0 || n == 0) throw ParameterError("sketch_dims: d and n must be positive");
  const double dd = static_cast<double>(d);
  const double lg = std::log(static_cast<double>(n) / beta_prime);
  SketchDims out;
  out.r = static_cast<std::size_t>(std::ceil(k.C_r * dd * lg * lg * lg / (alpha_eff * alpha_eff)));
  out.m = static_cast<std::size_t>(
      std::ceil(k.C_m * (dd * dd + dd / (alpha_eff * alpha_eff * beta_prime))));
  out.r = std::max(out.r, d);
  if (out.r >= out.m) {
    out.m = 2 * out.r;
    out.clamped = true;
  }
  return out;
}

}  // namespace advsearch
