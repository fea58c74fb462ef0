#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "advsearch/errors.hpp"

namespace advsearch {

using PointId = std::uint32_t;  // 1-based; 0 is never a valid id

inline std::size_t words_for_bits(std::size_t d) { return (d + 63) / 64; }

inline std::uint64_t hamming_distance(std::span<const std::uint64_t> a,
                                      std::span<const std::uint64_t> b) {
  std::uint64_t dist = 0;
  for (std::size_t w = 0; w < a.size(); ++w) dist += std::popcount(a[w] ^ b[w]);
  return dist;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return std::sqrt(s);
}

// Bit-vectors packed LSB-first into 64-bit words; bit j lives in word j/64.
// Padding bits past d are always zero.
class HammingDataset {
 public:
  using Scalar = std::uint64_t;
  using PointView = std::span<const std::uint64_t>;
  using Point = std::vector<std::uint64_t>;

  explicit HammingDataset(std::size_t d = 0) : d_(d), words_(words_for_bits(d)) {}

  HammingDataset(std::size_t n, std::size_t d, std::vector<std::uint64_t> bits)
      : n_(n), d_(d), words_(words_for_bits(d)), bits_(std::move(bits)) {
    if (bits_.size() != n_ * words_) throw ParameterError("HammingDataset: size mismatch");
    for (std::size_t i = 0; i < n_; ++i) check_padding(point(i));
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t words_per_point() const { return words_; }
  std::size_t point_width() const { return words_; }

  PointView point(std::size_t index) const { return {bits_.data() + index * words_, words_}; }
  PointView by_id(PointId id) const { return point(id - 1); }

  bool bit(std::size_t index, std::size_t j) const {
    return (bits_[index * words_ + j / 64] >> (j % 64)) & 1u;
  }

  PointId push_back(PointView p) {
    if (p.size() != words_) throw ParameterError("HammingDataset: dimension mismatch");
    check_padding(p);
    bits_.insert(bits_.end(), p.begin(), p.end());
    return static_cast<PointId>(++n_);
  }

  const std::vector<std::uint64_t>& raw() const { return bits_; }

  double distance(PointView a, PointView b) const {
    return static_cast<double>(hamming_distance(a, b));
  }

  static void flip(Point& p, std::size_t j) { p[j / 64] ^= (std::uint64_t{1} << (j % 64)); }
  static bool get(PointView p, std::size_t j) { return (p[j / 64] >> (j % 64)) & 1u; }

 private:
  void check_padding(PointView p) const {
    if (d_ % 64 == 0 || words_ == 0) return;
    if (p[words_ - 1] >> (d_ % 64)) throw ParameterError("HammingDataset: nonzero padding bits");
  }

  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

// Real vectors stored row-major.
class EuclideanDataset {
 public:
  using Scalar = double;
  using PointView = std::span<const double>;
  using Point = std::vector<double>;

  explicit EuclideanDataset(std::size_t d = 0) : d_(d) {}

  EuclideanDataset(std::size_t n, std::size_t d, std::vector<double> data)
      : n_(n), d_(d), data_(std::move(data)) {
    if (data_.size() != n_ * d_) throw ParameterError("EuclideanDataset: size mismatch");
    for (double v : data_)
      if (!std::isfinite(v)) throw ParameterError("EuclideanDataset: non-finite coordinate");
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t point_width() const { return d_; }

  PointView point(std::size_t index) const { return {data_.data() + index * d_, d_}; }
  PointView by_id(PointId id) const { return point(id - 1); }

  PointId push_back(PointView p) {
    if (p.size() != d_) throw ParameterError("EuclideanDataset: dimension mismatch");
    for (double v : p)
      if (!std::isfinite(v)) throw ParameterError("EuclideanDataset: non-finite coordinate");
    data_.insert(data_.end(), p.begin(), p.end());
    return static_cast<PointId>(++n_);
  }

  const std::vector<double>& raw() const { return data_; }

  double distance(PointView a, PointView b) const { return euclidean_distance(a, b); }

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> data_;
};

}  // namespace advsearch
