#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "advsearch/adaptive_reg.hpp"
#include "advsearch/dataset.hpp"
#include "advsearch/errors.hpp"
#include "advsearch/random.hpp"

namespace advsearch {

// k distinct indices from [0, n), in random order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ParameterError("sample_distinct: k exceeds n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  idx.resize(k);
  return idx;
}

inline HammingDataset::Point random_bits(std::size_t d, Rng& rng) {
  HammingDataset::Point p(words_for_bits(d), 0);
  for (std::size_t w = 0; w < p.size(); ++w) p[w] = rng.next_u64();
  if (d % 64) p.back() &= (std::uint64_t{1} << (d % 64)) - 1;
  return p;
}

template <class Dataset>
struct PlantedInstance {
  Dataset data;
  Dataset queries;
  std::vector<PointId> targets;  // the unique point within r of each query
  double c = 2;
  double r = 1;
};

// Uniform random points; each query is a random base point with exactly r
// bits flipped. Queries whose r-ball holds any other point are redrawn.
inline PlantedInstance<HammingDataset> make_planted_hamming(std::size_t n, std::size_t d, double c, std::size_t r,
                                                            std::size_t queries, Rng& rng) {
  if (r == 0 || r > d) throw ParameterError("planted: need 1 <= r <= d");
  PlantedInstance<HammingDataset> inst{HammingDataset(d), HammingDataset(d), {}, c, static_cast<double>(r)};
  for (std::size_t i = 0; i < n; ++i) inst.data.push_back(random_bits(d, rng));
  std::size_t attempts = 0;
  while (inst.queries.size() < queries) {
    if (++attempts > 100 * queries + 100) throw InstanceError("planted: could not isolate query neighborhoods");
    const auto target = static_cast<PointId>(1 + rng.uniform_index(n));
    const auto base = inst.data.by_id(target);
    HammingDataset::Point q(base.begin(), base.end());
    for (std::size_t j : sample_distinct(d, r, rng)) HammingDataset::flip(q, j);
    bool unique = true;
    for (std::size_t i = 0; i < n && unique; ++i)
      if (i + 1 != target && hamming_distance(q, inst.data.point(i)) <= r) unique = false;
    if (!unique) continue;
    inst.queries.push_back(q);
    inst.targets.push_back(target);
  }
  return inst;
}

// Gaussian points with per-coordinate scale `spread`; queries sit at distance
// exactly r from their target.
inline PlantedInstance<EuclideanDataset> make_planted_l2(std::size_t n, std::size_t d, double c, double r,
                                                         double spread, std::size_t queries, Rng& rng) {
  if (!(r > 0) || !(spread > 0)) throw ParameterError("planted: r and spread must be positive");
  PlantedInstance<EuclideanDataset> inst{EuclideanDataset(d), EuclideanDataset(d), {}, c, r};
  std::vector<double> p(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : p) x = spread * rng.normal();
    inst.data.push_back(p);
  }
  std::size_t attempts = 0;
  while (inst.queries.size() < queries) {
    if (++attempts > 100 * queries + 100) throw InstanceError("planted: could not isolate query neighborhoods");
    const auto target = static_cast<PointId>(1 + rng.uniform_index(n));
    const auto base = inst.data.by_id(target);
    double norm = 0;
    for (auto& x : p) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) p[j] = base[j] + r * p[j] / norm;
    bool unique = true;
    for (std::size_t i = 0; i < n && unique; ++i)
      if (i + 1 != target && euclidean_distance(p, inst.data.point(i)) <= r) unique = false;
    if (!unique) continue;
    inst.queries.push_back(p);
    inst.targets.push_back(target);
  }
  return inst;
}

// Random n x d matrix with orthonormal columns.
inline Eigen::MatrixXd random_orthonormal(std::size_t n, std::size_t d, Rng& rng) {
  Eigen::MatrixXd g(n, d);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
}

struct RegressionInstance {
  RegProblem problem;
  Eigen::VectorXd x_star;
  double optimal_cost = 0;
  double kappa = 1;
};

// U = A diag(sigma) B^T with sigma geometric from 1 down to 1/kappa;
// b = U x0 + noise, noise orthogonal to range(U) with norm `residual`.
inline RegressionInstance make_regression_instance(std::size_t n, std::size_t d, double kappa, double residual,
                                                   double kappa_bound, Rng& rng) {
  if (n < d + 1) throw ParameterError("regression instance: need n > d");
  if (!(kappa >= 1) || !(kappa_bound >= kappa)) throw ParameterError("regression instance: need 1 <= kappa <= bound");
  const Eigen::MatrixXd Q = random_orthonormal(n, d + 1, rng);
  const Eigen::MatrixXd A = Q.leftCols(static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd B = random_orthonormal(d, d, rng);
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    sigma(static_cast<Eigen::Index>(i)) =
        d == 1 ? 1.0 : std::pow(kappa, -static_cast<double>(i) / static_cast<double>(d - 1));
  RegressionInstance out;
  out.problem.U = A * sigma.asDiagonal() * B.transpose();
  out.x_star = Eigen::VectorXd(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < out.x_star.size(); ++i) out.x_star(i) = rng.normal();
  out.problem.b = out.problem.U * out.x_star + residual * Q.col(static_cast<Eigen::Index>(d));
  out.problem.kappa_bound = kappa_bound;
  out.optimal_cost = residual;
  out.kappa = kappa;
  return out;
}

}  // namespace advsearch
