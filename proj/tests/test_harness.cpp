#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "advsearch/harness/config.hpp"
#include "advsearch/harness/experiments.hpp"
#include "advsearch/harness/report.hpp"
#include "advsearch/harness/synth.hpp"

using namespace advsearch;
using namespace advsearch::harness;

namespace {

std::string error_of(const std::string& text) {
  try {
    ExperimentConfig::parse(text, "t.ini");
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

std::string jsonl(const Report& r) {
  std::ostringstream os;
  r.write_jsonl(os);
  return os.str();
}

}  // namespace

TEST(Config, ParsesTypedValuesAndRanges) {
  const auto cfg = ExperimentConfig::parse(
      "[experiment]\nkind = reg-bench\ntest = linf\n\n[params]\nn = 1e6\nalpha = 0.25\nseeds = 1..3, 7\n"
      "[constants]\nC_r = 0.5\n");
  EXPECT_EQ(cfg.kind(), "reg-bench");
  EXPECT_EQ(cfg.test(), "linf");
  EXPECT_EQ(cfg.get_uint("params", "n"), 1000000u);
  EXPECT_EQ(cfg.get_double("params", "alpha"), 0.25);
  EXPECT_EQ(cfg.get_uint_list("params", "seeds"), (std::vector<std::uint64_t>{1, 2, 3, 7}));
  EXPECT_EQ(cfg.get_double("params", "beta", 0.1), 0.1);
  EXPECT_EQ(cfg.get_double("constants", "C_r"), 0.5);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("[experiment]\nkind = attack\n[params]\nbogus = 1\n").find("t.ini:4"), std::string::npos);
  EXPECT_NE(error_of("[experiment]\nkind = teleport\n").find("t.ini:2"), std::string::npos);
  EXPECT_NE(error_of("[experiment]\nkind = attack\n[nowhere]\nx = 1\n").find("unknown section"), std::string::npos);
  EXPECT_NE(error_of("[experiment\nkind = attack\n").find("t.ini:1"), std::string::npos);
  const auto cfg = ExperimentConfig::parse("[experiment]\nkind = attack\n\n[params]\nn = -3\nr = abc\n", "t.ini");
  try {
    cfg.get_uint("params", "n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("t.ini:5"), std::string::npos);
  }
  try {
    cfg.get_double("params", "r");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("t.ini:6"), std::string::npos);
  }
  EXPECT_THROW(cfg.get_uint("params", "d"), FormatError);
}

TEST(Report, JsonlAndCsvLayout) {
  Report r;
  r.kind = "dist-check";
  r.test = "tail";
  r.config_echo = "[experiment]\n";
  r.add(1, 0, {{"x", 1.5}, {"name", "a"}, {"list", {1, 2}}}, {{"seconds", 0.1}});
  r.add(1, 1, {{"x", 2}}, {});
  r.headline = "ok";
  const std::string text = jsonl(r);
  std::istringstream is(text);
  std::string line;
  std::vector<json> lines;
  while (std::getline(is, line)) lines.push_back(json::parse(line));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0]["type"], "header");
  EXPECT_EQ(lines[0]["config_echo"], "[experiment]\n");
  EXPECT_EQ(lines[1]["metrics"]["x"], 1.5);
  EXPECT_EQ(lines[3]["type"], "summary");
  std::ostringstream csv;
  r.write_csv(csv);
  EXPECT_EQ(csv.str(), "seed,step,name,x,timing_seconds\n1,0,a,1.5,0.1\n1,1,,2,\n");
  EXPECT_EQ(strip_timing(text).find("seconds"), std::string::npos);
}

TEST(Report, ParallelMapKeepsOrderAndPropagatesErrors) {
  const auto v = parallel_map<int>(50, [](std::size_t i) { return static_cast<int>(i * i); }, 4);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
  EXPECT_THROW(parallel_map<int>(
                   10, [](std::size_t i) -> int { if (i == 7) throw ParameterError("x"); return 0; }, 3),
               ParameterError);
}

TEST(Experiments, DeterministicModuloTiming) {
  const auto cfg = ExperimentConfig::parse(
      "[experiment]\nkind = dist-check\ntest = equivalence\n[params]\ncases = 4:1,8:2\ntrials = 20000\n"
      "threshold = 0.05\nseeds = 5\n");
  RunOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const Report a = run_experiment(cfg, one), b = run_experiment(cfg, four);
  EXPECT_EQ(strip_timing(jsonl(a)), strip_timing(jsonl(b)));
  EXPECT_TRUE(a.passed);
  RunOptions other;
  other.seed = 6;
  EXPECT_NE(strip_timing(jsonl(run_experiment(cfg, other))), strip_timing(jsonl(a)));
}

TEST(Experiments, UnknownTestIsRejected) {
  const auto cfg = ExperimentConfig::parse("[experiment]\nkind = attack\ntest = nope\n", "t.ini");
  EXPECT_THROW(run_experiment(cfg), FormatError);
}

TEST(Synth, WritesInstancesWithMetadata) {
  const auto dir = std::filesystem::temp_directory_path() / ("advsearch_synth_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  SynthParams p;
  p.type = "regression";
  p.n = 200;
  p.d = 5;
  p.kappa = 8;
  p.residual = 0.5;
  const auto files = synth_instance(p, (dir / "reg").string());
  ASSERT_EQ(files.size(), 2u);
  std::ifstream mf((dir / "reg.meta.json").string());
  const json meta = json::parse(mf);
  EXPECT_NEAR(meta["kappa"].get<double>(), 8.0, 1e-6);
  EXPECT_NEAR(meta["optimal_cost"].get<double>(), 0.5, 1e-9);
  const RegProblem prob = io::load_problem((dir / "reg.problem.bin").string());
  EXPECT_NEAR(prob.optimal_cost(), 0.5, 1e-9);

  p.type = "planted-hamming";
  p.n = 300;
  p.d = 128;
  p.r = 4;
  p.queries = 10;
  synth_instance(p, (dir / "ham").string());
  const HammingDataset data = io::load_hamming((dir / "ham.data.bin").string());
  const HammingDataset queries = io::load_hamming((dir / "ham.queries.bin").string());
  std::ifstream hf((dir / "ham.meta.json").string());
  const json hmeta = json::parse(hf);
  const auto targets = hmeta["targets"].get<std::vector<PointId>>();
  ASSERT_EQ(targets.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(data.distance(queries.point(i), data.by_id(targets[i])), 4.0);
  p.type = "spiral";
  EXPECT_THROW(synth_instance(p, (dir / "x").string()), ParameterError);
  std::filesystem::remove_all(dir);
}

TEST(RadiusLadder, MatchesLinearScan) {
  Rng rng(RandomSeed{40});
  auto inst = make_planted_l2(300, 8, 2.0, 0.5, 1.0, 0, rng);
  const auto levels = geometric_ladder(0.05, 1.5, 12);
  EXPECT_THROW(geometric_ladder(1.0, 1.0, 3), ParameterError);
  for (std::size_t t = 0; t < 30; ++t) {
    std::vector<double> q(8);
    for (auto& x : q) x = rng.normal();
    std::optional<std::size_t> want;
    for (std::size_t l = 0; l < levels.size() && !want; ++l)
      if (count_within(inst.data, q, levels[l]) > 0) want = l;
    EXPECT_EQ(radius_ladder_search(inst.data, q, levels), want);
  }
}
