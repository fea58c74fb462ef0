#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "advsearch/instances.hpp"
#include "advsearch/least_squares.hpp"
#include "advsearch/sketch.hpp"

using namespace advsearch;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

Eigen::MatrixXd hadamard(std::size_t n) {
  Eigen::MatrixXd h(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) h(a, b) = hadamard_entry(a, b);
  return h;
}

// Explicit matrices from the sketches' defining parameters.
Eigen::MatrixXd dense(const CountSketch& cs) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cs.output_dim(), cs.input_dim());
  for (std::size_t i = 0; i < cs.input_dim(); ++i) m(cs.bucket(i), i) = cs.sign(i);
  return m;
}

Eigen::MatrixXd dense(const Srht& s) {
  Eigen::MatrixXd m(s.output_dim(), s.input_dim());
  for (std::size_t j = 0; j < s.output_dim(); ++j)
    for (std::size_t i = 0; i < s.input_dim(); ++i)
      m(j, i) = s.scale() * hadamard_entry(s.sampled_row(j), i) * s.diagonal_sign(i);
  return m;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace

TEST(Fwht, FirstColumnAndInvolution) {
  std::vector<double> e(16, 0.0);
  e[0] = 1;
  fwht(e);
  for (double v : e) EXPECT_EQ(v, 1.0);
  Rng rng(RandomSeed{1});
  for (std::size_t p = 0; p <= 8; ++p) {
    std::vector<double> x(std::size_t{1} << p);
    for (auto& v : x) v = static_cast<double>(static_cast<int>(rng.uniform_index(201)) - 100);
    auto y = x;
    fwht(y);
    fwht(y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], static_cast<double>(x.size()) * x[i]);
  }
}

TEST(Fwht, MatchesNaiveProduct) {
  Rng rng(RandomSeed{2});
  for (std::size_t p = 0; p <= 6; ++p) {
    const std::size_t n = std::size_t{1} << p;
    Eigen::VectorXd x = gaussian(static_cast<Eigen::Index>(n), 1, rng);
    std::vector<double> y(x.data(), x.data() + n);
    fwht(y);
    const Eigen::VectorXd want = hadamard(n) * x;
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], want(i), 1e-12);
  }
}

TEST(SketchDims, ClosedFormsAtDefaults) {
  const SketchDims s = sketch_dims(16, 4096, 0.25, 0.01);
  EXPECT_EQ(s.r, 2159u);
  EXPECT_EQ(s.m, 6464u);
  EXPECT_FALSE(s.clamped);
  // Halving alpha quadruples r before rounding up.
  const SketchDims h = sketch_dims(16, 4096, 0.125, 0.01);
  EXPECT_GE(h.r, 4 * s.r - 3);
  EXPECT_LE(h.r, 4 * s.r);
  // beta' 0.01 -> 0.02 removes C_m * d / (alpha^2 beta') / 2 = 3200 rows.
  EXPECT_EQ(sketch_dims(16, 4096, 0.25, 0.02).m, 3264u);
  EXPECT_THROW(sketch_dims(16, 4096, 1.5, 0.01), ParameterError);
}

TEST(SketchDims, FloorsAtDimension) {
  SketchConstants k;
  k.C_r = 1e-9;
  EXPECT_EQ(sketch_dims(32, 4096, 0.5, 0.01, k).r, 32u);
}

TEST(Sketch, ApplyMatchesMaterialized) {
  Rng rng(RandomSeed{3});
  for (std::size_t n : {5, 16, 37, 64}) {
    const Eigen::MatrixXd a = gaussian(static_cast<Eigen::Index>(n), 3, rng);
    CountSketch cs(n, 20, RandomSeed{n});
    EXPECT_LT(rel(cs.apply(a), dense(cs) * a), 1e-9);
    Srht s(n, 4, RandomSeed{n + 1});
    EXPECT_LT(rel(s.apply(a), dense(s) * a), 1e-9);
    ComposedSketch c(n, 20, 8, RandomSeed{n + 2});
    EXPECT_LT(rel(c.apply(a), dense(c.srht()) * dense(c.count_sketch()) * a), 1e-9);
    GaussianSketch g(n, 6, RandomSeed{n + 3});
    Eigen::MatrixXd G(6, n);
    for (std::size_t i = 0; i < n; ++i) G.col(static_cast<Eigen::Index>(i)) = g.column(i);
    EXPECT_LT(rel(g.apply(a), G * a), 1e-9);
  }
}

TEST(Sketch, ComposedUsesDerivedSeeds) {
  ComposedSketch c(40, 20, 8, RandomSeed{9});
  CountSketch cs(40, 20, derive_seed(RandomSeed{9}, 0));
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(c.count_sketch().bucket(i), cs.bucket(i));
}

TEST(Sketch, SparseUpdatesMatchColumns) {
  ComposedSketch c(48, 24, 8, RandomSeed{4});
  const Eigen::MatrixXd S = dense(c.srht()) * dense(c.count_sketch());
  for (std::size_t i = 0; i < 48; i += 5) {
    const std::vector<VectorEntry> e{{i, -1.5}};
    EXPECT_LT(rel(c.apply_sparse(std::span<const VectorEntry>(e)), -1.5 * S.col(static_cast<Eigen::Index>(i))), 1e-9);
  }
  EXPECT_EQ(c.apply_sparse(std::span<const VectorEntry>()).norm(), 0.0);
  const std::vector<VectorEntry> u{{1, 2.0}, {7, -1.0}}, v{{7, 3.0}, {30, 0.5}}, sum{{1, 2.0}, {7, 2.0}, {30, 0.5}};
  EXPECT_LT(rel(c.apply_sparse(std::span<const VectorEntry>(u)) + c.apply_sparse(std::span<const VectorEntry>(v)),
                c.apply_sparse(std::span<const VectorEntry>(sum))),
            1e-12);
  const std::vector<MatrixEntry> m{{3, 0, 1.0}, {9, 2, -2.0}};
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(48, 3);
  want(3, 0) = 1.0;
  want(9, 2) = -2.0;
  EXPECT_LT(rel(c.apply_sparse(std::span<const MatrixEntry>(m), 3), c.apply(want)), 1e-12);
}

TEST(Sketch, Linearity) {
  Rng rng(RandomSeed{5});
  const Eigen::MatrixXd a = gaussian(100, 4, rng), b = gaussian(100, 4, rng);
  ComposedSketch c(100, 40, 16, RandomSeed{6});
  GaussianSketch g(100, 16, RandomSeed{7});
  EXPECT_LT(rel(c.apply(Eigen::MatrixXd(a + b)), c.apply(a) + c.apply(b)), 1e-10);
  EXPECT_LT(rel(c.apply(Eigen::MatrixXd(2.5 * a)), 2.5 * c.apply(a)), 1e-10);
  EXPECT_LT(rel(g.apply(Eigen::MatrixXd(a + b)), g.apply(a) + g.apply(b)), 1e-10);
  EXPECT_EQ(c.apply(Eigen::MatrixXd(Eigen::MatrixXd::Zero(100, 2))).norm(), 0.0);
}

TEST(Sketch, GaussianColumnsDeterministicWithUnitNorm) {
  GaussianSketch g(10000, 256, RandomSeed{8});
  EXPECT_EQ(g.column(17), g.column(17));
  double s = 0;
  for (std::size_t i = 0; i < 10000; ++i) s += g.column(i).squaredNorm();
  EXPECT_NEAR(s / 10000, 1.0, 0.02);
}

TEST(Sketch, GaussianSubspaceEmbedding) {
  Rng rng(RandomSeed{9});
  const Eigen::MatrixXd U = gaussian(2048, 8, rng);
  const double alpha = 0.5, beta = 0.1;
  const auto r = static_cast<std::size_t>(std::ceil((8 + 8 * std::log(2.0 / beta)) / (alpha * alpha)));
  GaussianSketch g(2048, r, RandomSeed{10});
  const Eigen::MatrixXd SU = g.apply(U);
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd x = gaussian(8, 1, rng);
    const double ratio = (SU * x).squaredNorm() / (U * x).squaredNorm();
    bad += ratio < 1 - alpha || ratio > 1 + alpha;
  }
  EXPECT_LE(bad, 100);
}

TEST(LeastSquares, IdentityConsistentAndNormalEquations) {
  Rng rng(RandomSeed{11});
  const Eigen::VectorXd y = gaussian(6, 1, rng);
  EXPECT_LT(rel(solve_least_squares(Eigen::MatrixXd::Identity(6, 6), y).x, y), 1e-14);
  const Eigen::MatrixXd a = gaussian(64, 8, rng);
  const Eigen::VectorXd x0 = gaussian(8, 1, rng);
  EXPECT_LT(rel(solve_least_squares(a, a * x0).x, x0), 1e-10);
  const Eigen::VectorXd b = gaussian(64, 1, rng);
  const Eigen::VectorXd ne = (a.transpose() * a).inverse() * a.transpose() * b;
  EXPECT_LT(rel(solve_least_squares(a, b).x, ne), 1e-8);
  Eigen::MatrixXd def = a;
  def.col(3) = def.col(2);
  EXPECT_TRUE(solve_least_squares(def, b).rank_deficient);
}

TEST(LeastSquares, PseudoInverseMatchesCodOnBothPaths) {
  Rng rng(RandomSeed{12});
  const Eigen::MatrixXd a = gaussian(300, 10, rng);
  const PseudoInverse full = pseudo_inverse(a);
  EXPECT_EQ(full.rank, 10);
  EXPECT_LT(rel(full.pinv, a.completeOrthogonalDecomposition().pseudoInverse()), 1e-12);
  EXPECT_LT(rel(full.pinv * a, Eigen::MatrixXd::Identity(10, 10)), 1e-13);
  Eigen::MatrixXd def = a;
  def.col(7) = 2.0 * def.col(1);
  const PseudoInverse low = pseudo_inverse(def);
  EXPECT_EQ(low.rank, 9);
  EXPECT_LT(rel(low.pinv, def.completeOrthogonalDecomposition().pseudoInverse()), 1e-12);
  EXPECT_THROW(pseudo_inverse(Eigen::MatrixXd::Zero(3, 5)), ParameterError);
}

TEST(Instances, RegressionConditionNumberAndOptimum) {
  Rng rng(RandomSeed{12});
  for (double kappa : {1.0, 4.0, 1e3, 1e6}) {
    const RegressionInstance inst = make_regression_instance(512, 16, kappa, 2.0, kappa, rng);
    EXPECT_NEAR(condition_number(inst.problem.U) / kappa, 1.0, 1e-6);
    EXPECT_NEAR(inst.problem.cost(inst.x_star), 2.0, 1e-8);
    EXPECT_NEAR(inst.optimal_cost, 2.0, 1e-8);
  }
}
