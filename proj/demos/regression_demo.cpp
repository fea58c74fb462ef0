// Adaptive least squares: an adversary perturbs (U, b) based on the previous
// answers while the engines keep returning approximate solutions.

#include <cstdio>

#include "advsearch/adaptive_reg.hpp"
#include "advsearch/adversary.hpp"
#include "advsearch/instances.hpp"

using namespace advsearch;

namespace {

template <class Engine>
void run(const char* name, Engine& engine, const RegProblem& start, std::uint64_t steps) {
  EngineRef<Engine> handle(engine);
  RegAdversaryConfig adv;
  adv.steps = steps;
  adv.kappa_bound = start.kappa_bound;
  Rng rng(RandomSeed{11});
  const RegAdversaryResult res = regression_adversary(handle, start, adv, rng);
  std::printf("%s\n", name);
  for (const auto& s : res.steps)
    std::printf("  step %2llu  %s-update  cost/opt = %.4f  kappa(U) = %.2f%s\n", static_cast<unsigned long long>(s.step),
                s.kind.c_str(), s.ratio, s.kappa, s.clipped ? "  (clipped)" : "");
  std::printf("  worst ratio %.4f\n", res.max_ratio());
}

}  // namespace

int main() {
  Rng rng(RandomSeed{5});
  const RegressionInstance inst = make_regression_instance(2048, 8, 3.0, 1.0, 4.0, rng);
  const std::uint64_t steps = 8;

  RegPathConfig pc;
  pc.T = steps;
  RegPathEngine path(inst.problem, pc, RandomSeed{6});
  std::printf("Gaussian sketch engine: r = %zu rows\n", path.r());
  run("path engine", path, inst.problem, steps);

  RegDpConfig dc;
  dc.T = steps;
  dc.eps_dp = 1.0;
  dc.sample_multiplier = 2.0;
  RegDpEngine dp(inst.problem, dc, RandomSeed{7});
  std::printf("private-median engine: k = %llu copies, %llu sampled per query, sketch %zu x %zu\n",
              static_cast<unsigned long long>(dp.k()), static_cast<unsigned long long>(dp.s_med()), dp.dims().r,
              dp.dims().m);
  run("dp engine", dp, inst.problem, steps);
  return 0;
}
