#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <sstream>

#include "advsearch/instances.hpp"
#include "advsearch/io.hpp"

using namespace advsearch;
using json = nlohmann::json;

namespace {

HammingDataset sample_hamming() {
  Rng rng(RandomSeed{1});
  HammingDataset d(70);
  for (int i = 0; i < 9; ++i) d.push_back(random_bits(70, rng));
  return d;
}

EuclideanDataset sample_l2() {
  EuclideanDataset d(3);
  d.push_back(std::vector<double>{0.5, -1.25, 3.0});
  d.push_back(std::vector<double>{1e-3f, 2.0, -0.0625});
  return d;
}

void expect_same(const HammingDataset& a, const HammingDataset& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.dim(), b.dim());
  EXPECT_EQ(a.raw(), b.raw());
}

void expect_same(const EuclideanDataset& a, const EuclideanDataset& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.dim(), b.dim());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) EXPECT_EQ(static_cast<float>(a.point(i)[j]), b.point(i)[j]);
}

bool same_update(const RegUpdate& a, const RegUpdate& b) {
  if (a.index() != b.index()) return false;
  if (const auto* u = std::get_if<SparseUUpdate>(&a)) {
    const auto& v = std::get<SparseUUpdate>(b);
    if (u->entries.size() != v.entries.size()) return false;
    for (std::size_t i = 0; i < u->entries.size(); ++i)
      if (u->entries[i].row != v.entries[i].row || u->entries[i].col != v.entries[i].col ||
          u->entries[i].value != v.entries[i].value)
        return false;
    return true;
  }
  const auto& u = std::get<SparseBUpdate>(a);
  const auto& v = std::get<SparseBUpdate>(b);
  if (u.entries.size() != v.entries.size()) return false;
  for (std::size_t i = 0; i < u.entries.size(); ++i)
    if (u.entries[i].index != v.entries[i].index || u.entries[i].value != v.entries[i].value) return false;
  return true;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / ("advsearch_io_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST(IoDatasets, HammingBinaryAndCsv) {
  const HammingDataset d = sample_hamming();
  std::stringstream bin, csv;
  io::write_hamming(bin, d);
  expect_same(d, io::read_hamming(bin));
  io::write_hamming_csv(csv, d);
  expect_same(d, io::read_hamming_csv(csv));
}

TEST(IoDatasets, L2BinaryAndCsv) {
  const EuclideanDataset d = sample_l2();
  std::stringstream bin, csv;
  io::write_l2(bin, d);
  expect_same(d, io::read_l2(bin));
  io::write_l2_csv(csv, d);
  const EuclideanDataset back = io::read_l2_csv(csv);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.dim(); ++j) EXPECT_EQ(back.point(i)[j], d.point(i)[j]);
}

TEST(IoDatasets, MalformedInputsAreRejected) {
  std::stringstream wrong_magic("ADVX\x01\x00\x00\x00");
  EXPECT_THROW(io::read_hamming(wrong_magic), FormatError);
  std::stringstream bits("0,1,1\n1,0\n");
  EXPECT_THROW(io::read_hamming_csv(bits), FormatError);
  std::stringstream nonbinary("0,2,1\n");
  EXPECT_THROW(io::read_hamming_csv(nonbinary), FormatError);
  std::stringstream reals("1.0,abc\n");
  EXPECT_THROW(io::read_l2_csv(reals), FormatError);
  // Truncated after the header.
  std::stringstream full;
  io::write_hamming(full, sample_hamming());
  std::stringstream cut(full.str().substr(0, 30));
  EXPECT_THROW(io::read_hamming(cut), FormatError);
}

TEST(IoDatasets, FilesByExtension) {
  TempDir dir;
  const HammingDataset d = sample_hamming();
  io::save_hamming(dir / "h.bin", d);
  io::save_hamming(dir / "h.csv", d);
  expect_same(d, io::load_hamming(dir / "h.bin"));
  expect_same(d, io::load_hamming(dir / "h.csv"));
  EXPECT_THROW(io::load_hamming(dir / "missing.bin"), FormatError);
}

TEST(IoRegression, ProblemRoundTrip) {
  Rng rng(RandomSeed{2});
  const RegressionInstance inst = make_regression_instance(20, 3, 2.0, 1.0, 2.5, rng);
  std::stringstream ss;
  io::write_problem(ss, inst.problem);
  const RegProblem p = io::read_problem(ss);
  EXPECT_TRUE(p.U == inst.problem.U);
  EXPECT_TRUE(p.b == inst.problem.b);
  EXPECT_EQ(p.kappa_bound, 2.5);
}

TEST(IoRegression, UpdateStreamsTextAndBinary) {
  const std::vector<RegUpdate> ups{SparseUUpdate{{{1, 2, 0.1}, {3, 0, -2.5e-7}}}, SparseBUpdate{{{4, 1.0 / 3.0}}},
                                   SparseBUpdate{}};
  std::stringstream text, bin;
  io::write_updates_text(text, ups);
  io::write_updates_binary(bin, ups);
  const auto a = io::read_updates_text(text), b = io::read_updates_binary(bin);
  ASSERT_EQ(a.size(), ups.size());
  ASSERT_EQ(b.size(), ups.size());
  for (std::size_t i = 0; i < ups.size(); ++i) {
    EXPECT_TRUE(same_update(a[i], ups[i])) << i;
    EXPECT_TRUE(same_update(b[i], ups[i])) << i;
  }
  std::stringstream bad("b 3:1.0\nX 1:2\n");
  try {
    io::read_updates_text(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::stringstream out;
  EXPECT_THROW(io::write_updates_text(out, {DenseBUpdate{Eigen::VectorXd::Zero(2)}}), ParameterError);
}

TEST(IoState, AnnIndexSaveLoad) {
  Rng rng(RandomSeed{3});
  auto inst = make_planted_hamming(200, 128, 2.0, 4, 5, rng);
  auto data = std::make_shared<const HammingDataset>(inst.data);
  AnnConfig c;
  c.r = 4;
  c.T = 10;
  c.C_l = 0.0625;
  HammingAnnIndex a(data, c, RandomSeed{4});
  Rng q(RandomSeed{5});
  a.delete_lazy(7);
  a.delete_lazy(inst.targets[1]);
  a.query(inst.queries.point(0), q);
  const json doc = io::save_index(a);
  auto b = io::load_index<HammingLsh>(json::parse(doc.dump()), data);
  EXPECT_EQ(b->queries_answered(), 1u);
  EXPECT_TRUE(b->is_deleted(7));
  EXPECT_EQ(b->dp().k, a.dp().k);
  a.flush_block();
  for (std::uint64_t i : {0ull, 3ull}) EXPECT_EQ(a.copy(i).snapshot(), b->copy(i).snapshot());
  Rng qa(RandomSeed{6}), qb(RandomSeed{6});
  for (std::size_t i = 2; i < 5; ++i) EXPECT_EQ(a.query(inst.queries.point(i), qa), b->query(inst.queries.point(i), qb));
  auto wrong = doc;
  wrong["metric"] = "l2";
  EXPECT_THROW(io::load_index<HammingLsh>(wrong, data), FormatError);
}

TEST(IoState, RegressionEnginesSaveLoad) {
  Rng rng(RandomSeed{7});
  const RegressionInstance inst = make_regression_instance(256, 4, 2.0, 1.0, 2.0, rng);
  RegDpConfig dc;
  dc.T = 4;
  dc.sample_multiplier = 0.1;
  RegDpEngine dp(inst.problem, dc, RandomSeed{8});
  Rng q(RandomSeed{9});
  dp.update(SparseBUpdate{{{3, 0.5}}});
  dp.query(q);
  auto dp2 = io::load_dp_engine(json::parse(io::save_engine(dp).dump()));
  EXPECT_EQ(dp2->queries_answered(), 1u);
  EXPECT_TRUE(dp2->problem().b == dp.problem().b);
  Rng qa(RandomSeed{10}), qb(RandomSeed{10});
  EXPECT_LT((dp.query(qa) - dp2->query(qb)).norm(), 1e-9);

  RegPathEngine path(inst.problem, RegPathConfig{}, RandomSeed{11});
  path.update(SparseUUpdate{{{0, 0, 0.25}}});
  auto path2 = io::load_path_engine(io::save_engine(path));
  EXPECT_LT((path.query() - path2->query()).norm(), 1e-12);

  RegPrecondConfig pc;
  pc.sample_multiplier = 0.1;
  pc.batch = 3;
  RegPrecondEngine pre(inst.problem, pc, RandomSeed{12});
  for (int t = 0; t < 4; ++t) pre.update(SparseBUpdate{{{static_cast<std::size_t>(t), 0.1}}});
  auto pre2 = io::load_precond_engine(io::save_engine(pre));
  EXPECT_EQ(pre2->epoch(), 1u);
  EXPECT_EQ(pre2->counter(), 1u);
  EXPECT_TRUE(pre2->preconditioner() == pre.preconditioner());
  Rng pa(RandomSeed{13}), pb(RandomSeed{13});
  EXPECT_LT((pre.query(pa) - pre2->query(pb)).norm(), 1e-9);

  EXPECT_THROW(io::load_path_engine(io::save_engine(dp)), FormatError);
}
