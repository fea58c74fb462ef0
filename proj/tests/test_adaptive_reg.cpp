#include <gtest/gtest.h>

#include <cmath>

#include "advsearch/adaptive_reg.hpp"
#include "advsearch/instances.hpp"

using namespace advsearch;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

Eigen::MatrixXd dense(const ComposedSketch& c) {
  const auto& cs = c.count_sketch();
  const auto& s = c.srht();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(cs.output_dim(), cs.input_dim());
  for (std::size_t i = 0; i < cs.input_dim(); ++i) C(cs.bucket(i), i) = cs.sign(i);
  Eigen::MatrixXd H(s.output_dim(), s.input_dim());
  for (std::size_t j = 0; j < s.output_dim(); ++j)
    for (std::size_t i = 0; i < s.input_dim(); ++i)
      H(j, i) = s.scale() * hadamard_entry(s.sampled_row(j), i) * s.diagonal_sign(i);
  return H * C;
}

RegDpConfig small_dp(std::uint64_t T = 8) {
  RegDpConfig c;
  c.T = T;
  c.sample_multiplier = 0.1;
  c.cache_capacity = 4;
  return c;
}

RegUpdate random_sparse_update(const RegProblem& p, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    SparseBUpdate u;
    for (int j = 0; j < 3; ++j) u.entries.push_back({rng.uniform_index(p.rows()), 0.1 * rng.normal()});
    return u;
  }
  SparseUUpdate u;
  for (int j = 0; j < 3; ++j) u.entries.push_back({rng.uniform_index(p.rows()), rng.uniform_index(p.cols()), 0.05 * rng.normal()});
  return u;
}

}  // namespace

TEST(RegFormulas, CopyCountAndGamma) {
  const long double want = std::ceil(1200.0L * 10 * 0.5L * std::sqrt(2.0L * 4 * 4 * std::log(1000.0L)));
  EXPECT_EQ(reg_copy_count(10, 0.5, 4, 4, 0.1), static_cast<std::uint64_t>(want));
  EXPECT_LT(reg_copy_count(10, 0.5, 4, 4, 0.1), reg_copy_count(10, 0.5, 5, 4, 0.1));
  EXPECT_LT(reg_copy_count(10, 0.5, 4, 4, 0.1), reg_copy_count(10, 0.5, 4, 5, 0.1));
  EXPECT_NEAR(reg_median_gamma(16, 4, 1000, 0.5, 0.1), 4.0 * std::log(640000.0), 1e-12);
}

TEST(RegUpdates, ApplyAndValidate) {
  RegProblem p{Eigen::MatrixXd::Zero(5, 2), Eigen::VectorXd::Zero(5), 1.0};
  apply_update(p, SparseUUpdate{{{1, 1, 2.0}}});
  apply_update(p, SparseBUpdate{{{4, -1.0}}});
  apply_update(p, RankOneUUpdate{{{0, 2.0}}, Eigen::Vector2d(1.0, 3.0)});
  EXPECT_EQ(p.U(1, 1), 2.0);
  EXPECT_EQ(p.U(0, 1), 6.0);
  EXPECT_EQ(p.b(4), -1.0);
  EXPECT_THROW(apply_update(p, SparseBUpdate{{{5, 1.0}}}), ParameterError);
  EXPECT_THROW(apply_update(p, DenseUUpdate{Eigen::MatrixXd::Zero(4, 2)}), ParameterError);
  EXPECT_TRUE(touches_b(DenseBUpdate{Eigen::VectorXd::Zero(5)}));
  EXPECT_FALSE(touches_b(SparseUUpdate{}));
}

TEST(RegDp, InitialSketchesMatchMaterializedOracle) {
  Rng rng(RandomSeed{1});
  RegProblem p{gaussian(64, 4, rng), gaussian(64, 1, rng), 1.0};
  RegDpEngine e(p, small_dp(), RandomSeed{2});
  for (std::uint64_t i : {std::uint64_t{0}, std::uint64_t{5}, e.k() - 1}) {
    const Eigen::MatrixXd S = dense(e.copy_sketch(i));
    auto [sU, sb] = e.copy_state(i);
    EXPECT_LT(rel(sU, S * p.U), 1e-9);
    EXPECT_LT(rel(sb, S * p.b), 1e-9);
  }
}

TEST(RegDp, ZeroUpdateIsNoOpAndNegationRestores) {
  Rng rng(RandomSeed{3});
  RegProblem p{gaussian(256, 4, rng), gaussian(256, 1, rng), 1.0};
  RegDpEngine e(p, small_dp(), RandomSeed{4});
  const auto before = e.copy_state(1);
  e.update(SparseBUpdate{});
  e.update(DenseUUpdate{Eigen::MatrixXd::Zero(256, 4)});
  const auto after = e.copy_state(1);
  EXPECT_TRUE(before.first == after.first);
  EXPECT_TRUE(before.second == after.second);
  const Eigen::MatrixXd D = 0.1 * gaussian(256, 4, rng);
  e.update(DenseUUpdate{D});
  e.update(DenseUUpdate{-D});
  EXPECT_LT(rel(e.copy_state(1).first, before.first), 1e-10);
}

TEST(RegDp, IncrementalEqualsFromScratch) {
  Rng rng(RandomSeed{5});
  RegProblem p{gaussian(512, 6, rng), gaussian(512, 1, rng), 1.0};
  RegDpEngine e(p, small_dp(), RandomSeed{6});
  e.copy_state(0);
  e.copy_state(1);
  for (int t = 0; t < 10; ++t) e.update(random_sparse_update(e.problem(), rng));
  for (std::uint64_t i : {0ull, 1ull}) {
    ASSERT_TRUE(e.is_resident(i));
    const ComposedSketch s = e.copy_sketch(i);
    auto [sU, sb] = e.copy_state(i);
    EXPECT_LT(rel(sU, s.apply(e.problem().U)), 1e-8);
    EXPECT_LT(rel(sb, s.apply(e.problem().b)), 1e-8);
  }
}

TEST(RegDp, ZeroResidualAnswerIsExactOnIntegerGrid) {
  Rng rng(RandomSeed{7});
  const Eigen::MatrixXd U = random_orthonormal(512, 4, rng);
  const Eigen::Vector4d x0(2, -3, 0, 1);
  RegDpConfig c;
  c.T = 2;
  c.eps_dp = 1.0;
  c.sample_multiplier = 2.0;
  c.grid = OutputGrid::integers(-5, 5);
  RegDpEngine e(RegProblem{U, U * x0, 1.0}, c, RandomSeed{8});
  Rng q(RandomSeed{9});
  const Eigen::VectorXd g = e.query(q);
  EXPECT_TRUE(g == Eigen::VectorXd(x0));
  for (const auto& x : e.last_solutions()) EXPECT_LT((x - x0).norm(), 1e-9);
}

TEST(RegDp, BudgetAndCacheBehaviour) {
  Rng rng(RandomSeed{10});
  RegProblem p{gaussian(256, 4, rng), gaussian(256, 1, rng), 1.0};
  RegDpEngine e(p, small_dp(2), RandomSeed{11});
  ASSERT_GT(e.k(), e.config().cache_capacity);
  Rng q(RandomSeed{12});
  e.query(q);
  e.query(q);
  EXPECT_THROW(e.query(q), BudgetError);
  EXPECT_LE(e.stats().materializations - e.stats().evictions, e.config().cache_capacity);
  EXPECT_EQ(e.last_solutions().size(), e.s_med());
}

TEST(RegDp, CacheSizeDoesNotChangeAnswers) {
  Rng rng(RandomSeed{13});
  RegProblem p{gaussian(256, 4, rng), gaussian(256, 1, rng), 1.0};
  RegDpConfig small = small_dp(6), big = small_dp(6);
  big.cache_capacity = 1000;
  RegDpEngine a(p, small, RandomSeed{14}), b(p, big, RandomSeed{14});
  Rng qa(RandomSeed{15}), qb(RandomSeed{15}), up(RandomSeed{16});
  for (int t = 0; t < 6; ++t) {
    const RegUpdate u = random_sparse_update(a.problem(), up);
    a.update(u);
    b.update(u);
    const Eigen::VectorXd ga = a.query(qa), gb = b.query(qb);
    for (Eigen::Index l = 0; l < ga.size(); ++l)
      EXPECT_LE(std::abs(ga(l) - gb(l)), 2 * a.config().grid.step_at(ga(l)) + 1e-12);
  }
}

TEST(RegPath, DeterministicAndRoundingIdempotent) {
  Rng rng(RandomSeed{17});
  RegProblem p{gaussian(1024, 4, rng), gaussian(1024, 1, rng), 1.0};
  RegPathEngine e(p, RegPathConfig{}, RandomSeed{18});
  const Eigen::VectorXd a = e.query(), b = e.query();
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(RegPathEngine::round_to_grid(a, e.config().grid) == a);
  EXPECT_GE(e.r(), 4u);
  EXPECT_LE(e.last_rounding().cost_rounded, e.last_rounding().factor_bound * e.last_rounding().cost_unrounded + 1e-12);
}

TEST(RegPath, IncrementalSketchEqualsFromScratch) {
  Rng rng(RandomSeed{19});
  RegProblem p{gaussian(300, 4, rng), gaussian(300, 1, rng), 1.0};
  RegPathEngine e(p, RegPathConfig{}, RandomSeed{20});
  for (int t = 0; t < 10; ++t) e.update(random_sparse_update(e.problem(), rng));
  EXPECT_LT(rel(e.sketched_U(), e.sketch().apply(e.problem().U)), 1e-8);
  EXPECT_LT(rel(e.sketched_b(), e.sketch().apply(e.problem().b)), 1e-8);
}

TEST(RegPath, ObliviousStreamUtility) {
  int good = 0;
  const int runs = 100;
  const double alpha = 0.5;
  for (int run = 0; run < runs; ++run) {
    Rng rng(RandomSeed{1000 + static_cast<std::uint64_t>(run)});
    const RegressionInstance inst = make_regression_instance(2048, 8, 3.0, 1.0, 4.0, rng);
    RegPathConfig c;
    c.alpha = alpha;
    c.T = 8;
    RegPathEngine e(inst.problem, c, RandomSeed{2000 + static_cast<std::uint64_t>(run)});
    bool ok = true;
    for (int t = 0; t < 8; ++t) {
      SparseBUpdate u;
      for (int j = 0; j < 4; ++j) u.entries.push_back({rng.uniform_index(2048), 0.2 * rng.normal()});
      e.update(u);
      const Eigen::VectorXd g = e.query();
      ok = ok && e.problem().cost(g) <= (1 + alpha) * e.problem().optimal_cost();
    }
    good += ok;
  }
  EXPECT_GE(good, 90);
}

TEST(RegPrecond, PreconditionerOnOrthonormalAndIllConditioned) {
  Rng rng(RandomSeed{21});
  const Eigen::MatrixXd Q = random_orthonormal(2048, 8, rng);
  const SketchDims dims = sketch_dims(8, 2048, 0.5, 0.01);
  const Preconditioner pq = sketch_preconditioner(Q, dims, RandomSeed{22}, 3.0, 8);
  // A sketched QR gives kappa(QP) = kappa(S Q): near 1, never exactly 1.
  EXPECT_GE(pq.kappa_UP, 1.0);
  EXPECT_LE(pq.kappa_UP, 3.0);
  const RegressionInstance inst = make_regression_instance(2048, 32, 1e6, 1.0, 1e6, rng);
  const Preconditioner pi = sketch_preconditioner(inst.problem.U, sketch_dims(32, 2048, 0.5, 0.01), RandomSeed{23}, 3.0, 8);
  EXPECT_LE(pi.kappa_UP, 3.0);
  EXPECT_NEAR(condition_number(inst.problem.U * pi.P), pi.kappa_UP, 1e-9 * pi.kappa_UP);
}

TEST(RegPrecond, CopiesMatchPseudoInverseOracle) {
  Rng rng(RandomSeed{24});
  RegProblem p{gaussian(128, 4, rng), gaussian(128, 1, rng), 1.0};
  RegPrecondConfig c;
  c.sample_multiplier = 0.1;
  c.cache_capacity = 4;
  RegPrecondEngine e(p, c, RandomSeed{25});
  for (std::uint64_t i : {0ull, 3ull}) {
    const Eigen::MatrixXd S = dense(e.copy_sketch(i));
    const Eigen::MatrixXd A = S * p.U * e.preconditioner();
    const Eigen::MatrixXd Apinv = A.completeOrthogonalDecomposition().pseudoInverse();
    auto [N, sk] = e.copy_state(i);
    EXPECT_LT(rel(N, Apinv), 1e-8);
    EXPECT_LT(rel(sk, Apinv * (S * p.b)), 1e-8);
  }
}

TEST(RegPrecond, UpdatesCountersAndRegeneration) {
  Rng rng(RandomSeed{26});
  RegProblem p{gaussian(512, 4, rng), gaussian(512, 1, rng), 1.0};
  RegPrecondConfig c;
  c.sample_multiplier = 0.1;
  c.cache_capacity = 4;
  c.batch = 4;
  RegPrecondEngine e(p, c, RandomSeed{27});
  e.copy_state(2);
  const auto before = e.copy_state(2);
  e.update(SparseBUpdate{});
  EXPECT_EQ(e.counter(), 1u);
  EXPECT_TRUE(e.copy_state(2).second == before.second);
  for (int t = 0; t < 2; ++t) {
    SparseBUpdate u;
    u.entries = {{rng.uniform_index(512), rng.normal()}, {rng.uniform_index(512), rng.normal()}};
    e.update(u);
    auto [N, sk] = e.copy_state(2);
    const ComposedSketch s = e.copy_sketch(2);
    EXPECT_LT(rel(sk, N * s.apply(e.problem().b)), 1e-8);
  }
  EXPECT_EQ(e.stats().regenerations, 0u);
  e.update(SparseBUpdate{{{0, 1.0}}});
  EXPECT_EQ(e.stats().regenerations, 1u);
  EXPECT_EQ(e.epoch(), 1u);
  EXPECT_EQ(e.counter(), 0u);
  EXPECT_FALSE(e.is_resident(2));
  SparseBUpdate dense_up;
  for (std::size_t j = 0; j < 5; ++j) dense_up.entries.push_back({j, 1.0});
  EXPECT_THROW(e.update(dense_up), ParameterError);
  EXPECT_THROW(e.update(RegUpdate{DenseBUpdate{Eigen::VectorXd::Zero(512)}}), ParameterError);
}

TEST(RegPrecond, ZeroResidualAnswer) {
  Rng rng(RandomSeed{28});
  const Eigen::MatrixXd U = random_orthonormal(512, 4, rng);
  const Eigen::Vector4d x0(2, -3, 0, 1);
  RegPrecondConfig c;
  c.T = 2;
  c.eps_dp = 1.0;
  c.sample_multiplier = 2.0;
  c.grid = OutputGrid::integers(-20, 20);
  RegPrecondEngine e(RegProblem{U, U * x0, 1.0}, c, RandomSeed{29});
  Rng q(RandomSeed{30});
  const Eigen::VectorXd g = e.query(q);
  // The median runs on y = P^-1 x, so the answer is P times a grid point near P^-1 x0.
  const Eigen::MatrixXd UP = U * e.preconditioner();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(UP);
  EXPECT_LE(e.problem().cost(g), 0.5 * std::sqrt(4.0) * svd.singularValues()(0) + 1e-9);
}
