// advsearch: benchmark and experiment driver.
//
//   advsearch <kind> [--config FILE] [--seed S] [--trials N] [--out PATH] [--csv] [--check]
//   advsearch synth --type T --out PREFIX [instance flags]
//
// Without --config an experiment subcommand runs every bundled config of its
// kind. Reports go to --out, else [output] path, else $ADVSEARCH_OUT_DIR/<name>.jsonl
// (default directory ./results).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advsearch/harness/config.hpp"
#include "advsearch/harness/experiments.hpp"
#include "advsearch/harness/synth.hpp"

#ifndef ADVSEARCH_CONFIG_DIR
#define ADVSEARCH_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using namespace advsearch;
using namespace advsearch::harness;

namespace {

struct ExperimentFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::string out;
  std::size_t workers = 0;
  bool check = false;
  bool csv = false;
};

fs::path config_dir() {
  if (const char* env = std::getenv("ADVSEARCH_CONFIG_DIR")) return env;
  return ADVSEARCH_CONFIG_DIR;
}

fs::path default_out_dir() {
  if (const char* env = std::getenv("ADVSEARCH_OUT_DIR")) return env;
  return "results";
}

std::vector<fs::path> bundled_configs(const std::string& kind) {
  std::vector<fs::path> out;
  const fs::path dir = config_dir();
  if (!fs::is_directory(dir)) throw FormatError("config directory not found: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ini" && ExperimentConfig::load(e.path().string()).kind() == kind)
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

int run_kind(const std::string& kind, const ExperimentFlags& f) {
  std::vector<fs::path> configs;
  if (!f.config.empty()) configs.push_back(f.config);
  else configs = bundled_configs(kind);
  if (configs.empty()) throw FormatError("no bundled configs of kind " + kind);

  RunOptions opt;
  opt.seed = f.seed;
  opt.trials = f.trials;
  opt.workers = f.workers;
  bool all_passed = true;
  for (const auto& path : configs) {
    const ExperimentConfig cfg = ExperimentConfig::load(path.string());
    if (cfg.kind() != kind)
      throw FormatError(path.string() + ": config kind is '" + cfg.kind() + "', subcommand is '" + kind + "'");
    const Report rep = run_experiment(cfg, opt);

    fs::path out;
    if (!f.out.empty()) out = configs.size() == 1 ? fs::path(f.out) : fs::path(f.out) / (path.stem().string() + ".jsonl");
    else if (cfg.has("output", "path")) out = cfg.get_string("output", "path");
    else out = default_out_dir() / (path.stem().string() + ".jsonl");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    rep.save(out.string());
    if (f.csv || cfg.get_string("output", "csv", "false") == "true") {
      fs::path csv = out;
      csv.replace_extension(".csv");
      rep.save_csv(csv.string());
    }
    all_passed = all_passed && rep.passed;
    std::cout << (rep.passed ? "[PASS] " : "[FAIL] ") << path.stem().string() << ": " << rep.headline << "\n"
              << "       report: " << out.string() << std::endl;
  }
  return f.check && !all_passed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially robust near-neighbor search and sketched regression experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kLibraryVersion));

  ExperimentFlags flags;
  const std::vector<std::pair<std::string, std::string>> kinds = {
      {"ann-bench", "oblivious LSH recall and lazy/eager deletion equivalence"},
      {"reg-bench", "sketched regression: l_inf bound, adaptive utility, preconditioning"},
      {"attack", "bit-flip false-negative attack against single and robust indexes"},
      {"match-demo", "online greedy matching through the robust L2 index"},
      {"dist-check", "mechanism distribution, runtime and closed-form checks"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, desc] : kinds) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", flags.config, "experiment config (INI); default: all bundled configs of this kind")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "first seed; configured seeds are replaced by consecutive values");
    sub->add_option("--trials", flags.trials, "override the trial count");
    sub->add_option("--out", flags.out, "report path (a directory when several configs run)");
    sub->add_option("--workers", flags.workers, "worker threads (0 = all cores)");
    sub->add_flag("--csv", flags.csv, "also write a CSV table of record metrics");
    sub->add_flag("--check", flags.check, "exit nonzero if any acceptance threshold fails");
    subs.push_back(sub);
  }

  SynthParams sp;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic instance and its metadata sidecar");
  synth->add_option("--type", sp.type, "planted-hamming | planted-l2 | isolated | regression")
      ->check(CLI::IsMember({"planted-hamming", "planted-l2", "isolated", "regression"}));
  synth->add_option("--out", synth_out, "output prefix")->required();
  synth->add_option("--n", sp.n);
  synth->add_option("--d", sp.d);
  synth->add_option("--c", sp.c);
  synth->add_option("--r", sp.r);
  synth->add_option("--queries", sp.queries);
  synth->add_option("--spread", sp.spread);
  synth->add_option("--kappa", sp.kappa);
  synth->add_option("--residual", sp.residual);
  synth->add_option("--seed", sp.seed);

  CLI11_PARSE(app, argc, argv);
  try {
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return run_kind(kinds[i].first, flags);
    if (synth->parsed()) {
      const fs::path prefix(synth_out);
      if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
      for (const auto& p : synth_instance(sp, synth_out)) std::cout << p << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "advsearch: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
