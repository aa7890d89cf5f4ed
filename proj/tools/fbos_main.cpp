#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fbos/compare.hpp"
#include "fbos/config.hpp"
#include "fbos/experiment.hpp"
#include "fbos/gradcheck.hpp"
#include "fbos/invariants.hpp"
#include "fbos/task_io.hpp"
#include "fbos/trainer.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailed = 1,  // check did not pass
  kBadConfig = 2,
  kNonFinite = 3,
  kIoError = 4,
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> methods;
  std::optional<int> repeats;
};

fbos::config::ExperimentConfig load(const Common& c) {
  fbos::config::ExperimentConfig cfg =
      c.config.empty() ? fbos::config::ExperimentConfig{} : fbos::config::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.repeats) cfg.repeats = *c.repeats;
  if (!c.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : c.methods) {
      try {
        cfg.methods.push_back(fbos::trainer::method_from_string(m));
      } catch (const std::invalid_argument& e) {
        throw fbos::config::ConfigError("--methods", 0, 0, e.what());
      }
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw fbos::config::ConfigError(c.config.empty() ? "<defaults>" : c.config, 0, 0, e.what());
  }
  return cfg;
}

int cmd_train(const Common& c, bool quiet) {
  const auto cfg = load(c);
  const auto res = fbos::experiment::train_to_directory(cfg, quiet ? nullptr : &std::cerr);
  std::cout << fbos::experiment::summary_text(res);
  std::cout << fmt::format("artifacts written to {}\n", cfg.output_dir);
  return kOk;
}

int cmd_gradcheck(const Common& c, std::optional<int> instances, bool inject_fault) {
  auto cfg = load(c).gradcheck;
  if (c.seed) cfg.seed = *c.seed;
  if (instances) cfg.instances = *instances;
  if (inject_fault) cfg.fault = fbos::objectives::Fault::kFlipFapRatioGradient;
  const auto report = fbos::gradcheck::run(cfg);
  double epa = 0.0, ecc = 0.0;
  for (const auto& r : report.results) {
    epa = std::max(epa, r.epa_rel_error);
    ecc = std::max(ecc, r.ecc_rel_error);
  }
  std::cout << fmt::format("instances: {}\nmax relative error: {:.3e} (epa {:.3e}, ecc {:.3e})\n"
                           "threshold: {:.1e}\n",
                           report.results.size(), report.max_rel_error(), epa, ecc,
                           report.threshold);
  if (report.passed()) {
    std::cout << "PASS\n";
    return kOk;
  }
  std::cout << "FAIL; failing instance seeds:";
  for (auto s : report.failing_seeds()) std::cout << ' ' << s;
  std::cout << '\n';
  return kFailed;
}

int cmd_make_suite(const Common& c, const std::string& split) {
  const auto cfg = load(c);
  const auto env = fbos::config::make_environment(cfg.environment);
  fbos::envs::SuiteSpec spec = split == "train" ? cfg.train_suite : cfg.validation_suite;
  if (c.seed) spec.seed = *c.seed;
  const auto tasks = env->make_suite(spec);
  if (c.out.empty() || c.out == "-") {
    fbos::envs::write_suite(std::cout, tasks, env->vocab());
  } else {
    fbos::envs::save_suite(c.out, tasks, env->vocab());
    std::cerr << fmt::format("wrote {} tasks to {}\n", tasks.size(), c.out);
  }
  return kOk;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out, bool svg) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const auto cmp = fbos::compare::load_runs(paths);
  const std::filesystem::path out_dir = out.empty() ? "comparison" : out;
  fbos::compare::write_outputs(out_dir, cmp, svg);
  std::cout << fbos::compare::final_table(cmp);
  std::cout << fmt::format("comparison written to {}\n", out_dir.string());
  return kOk;
}

int cmd_verify_invariants(const Common& c, std::optional<int> cases) {
  fbos::invariants::Options opt;
  if (c.seed) opt.seed = *c.seed;
  if (cases) opt.cases = *cases;
  const auto results = fbos::invariants::run_all(opt);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << fmt::format("{} {:<48} {:>6} cases{}\n", r.passed ? "PASS" : "FAIL", r.name,
                             r.cases, r.passed ? "" : "  " + r.detail);
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all invariants hold\n" : "invariant violations found\n");
  return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-conditioned on-policy RL at toy scale"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_methods) {
    sub->add_option("--config", common.config, "YAML experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the master seed");
    sub->add_option("--out", common.out, "output location");
    if (with_methods) {
      sub->add_option("--methods", common.methods, "methods to run (comma separated)")
          ->delimiter(',');
      sub->add_option("--repeats", common.repeats, "seeded repeats per method")
          ->check(CLI::PositiveNumber);
    }
  };

  bool quiet = false;
  auto* train = app.add_subcommand("train", "run every configured method x repeat");
  add_common(train, true);
  train->add_flag("--quiet", quiet, "suppress progress lines");

  std::optional<int> instances;
  bool inject_fault = false;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the EPA and ECC losses");
  add_common(gc, false);
  gc->add_option("--instances", instances, "number of random instances")->check(CLI::PositiveNumber);
  gc->add_flag("--inject-fault", inject_fault,
               "flip the sign of the cross-prompt ratio gradient (the check must fail)");

  std::vector<std::string> dirs;
  bool svg = false;
  std::string compare_out;
  auto* cmp = app.add_subcommand("compare", "merge run directories into comparison curves");
  cmp->add_option("dirs", dirs, "run directories")->required()->expected(2, -1);
  cmp->add_option("--out", compare_out, "output directory (default: comparison)");
  cmp->add_flag("--svg", svg, "also render SVG plots");

  std::string split = "validation";
  auto* suite = app.add_subcommand("make-suite", "generate a task suite file");
  add_common(suite, false);
  suite->add_option("--split", split, "suite to generate")
      ->check(CLI::IsMember({"train", "validation"}));

  std::optional<int> cases;
  auto* inv = app.add_subcommand("verify-invariants", "run the property-based invariant suites");
  add_common(inv, false);
  inv->add_option("--cases", cases, "random cases per property")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return cmd_train(common, quiet);
    if (*gc) return cmd_gradcheck(common, instances, inject_fault);
    if (*cmp) return cmd_compare(dirs, compare_out, svg);
    if (*suite) return cmd_make_suite(common, split);
    if (*inv) return cmd_verify_invariants(common, cases);
  } catch (const fbos::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const fbos::trainer::NonFiniteError& e) {
    std::cerr << fmt::format("error: non-finite training state at step {}: {}\n", e.step(),
                             e.what());
    return kNonFinite;
  } catch (const fbos::compare::SchemaError& e) {
    std::cerr << "compare error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
