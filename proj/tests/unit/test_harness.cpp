#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <doctest.h>
#include <fmt/format.h>

#include "fbos/compare.hpp"
#include "fbos/config.hpp"
#include "fbos/experiment.hpp"
#include "fbos/task_io.hpp"

namespace fs = std::filesystem;
using namespace fbos;

namespace {

const fs::path kSource = FBOS_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_lines(const std::string& text, int n) {
  std::size_t pos = 0;
  for (int i = 0; i < n && pos != std::string::npos; ++i) {
    pos = text.find('\n', pos);
    if (pos != std::string::npos) ++pos;
  }
  return text.substr(0, pos);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("fbos-test-" + tag + "-" +
                                           std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

config::ExperimentConfig smoke(const fs::path& out) {
  auto cfg = config::load_config(kSource / "configs" / "smoke.yaml");
  cfg.output_dir = out.string();
  return cfg;
}

std::map<std::string, std::string> csvs(const experiment::ExperimentResult& res) {
  std::map<std::string, std::string> out;
  std::ostringstream m, e, d, s;
  experiment::write_metrics_csv(m, res);
  experiment::write_eval_csv(e, res);
  experiment::write_difficulty_csv(d, res);
  experiment::write_summary_csv(s, res);
  out["metrics"] = m.str();
  out["eval"] = e.str();
  out["train_difficulty"] = d.str();
  out["summary"] = s.str();
  return out;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("smoke config: 2 metric rows per method per repeat") {
    TempDir dir("smoke");
    const auto cfg = smoke(dir.path());
    const auto res = experiment::train_to_directory(cfg);
    CHECK(res.runs.size() == cfg.methods.size() * cfg.repeats);
    for (const auto& run : res.runs) {
      CHECK(run.steps.size() == 2);
      CHECK(run.rollouts_sampled == 2 * 72);
    }
    const std::string metrics = slurp(dir.path() / "metrics.csv");
    const auto lines = std::count(metrics.begin(), metrics.end(), '\n');
    CHECK(lines == 2 + 2 * static_cast<long>(res.runs.size()));
    for (const char* f : {"config.yaml", "eval.csv", "train_difficulty.csv", "summary.csv",
                          "summary.txt"}) {
      CHECK(fs::exists(dir.path() / f));
    }
    CHECK(fs::exists(dir.path() / "checkpoints" / "fbos_r0_step00002.ckpt"));
    // The dumped config reproduces the run.
    const auto again = config::load_config(dir.path() / "config.yaml");
    CHECK(config::dump_config(again) == config::dump_config(cfg));
  }

  TEST_CASE("identical config gives identical CSV bytes") {
    TempDir a("det-a"), b("det-b");
    const auto ra = experiment::run_experiment(smoke(a.path()));
    const auto rb = experiment::run_experiment(smoke(b.path()));
    CHECK(csvs(ra) == csvs(rb));
  }

  TEST_CASE("CSV headers match the golden files") {
    TempDir dir("golden");
    auto cfg = smoke(dir.path());
    cfg.repeats = 1;
    const auto files = csvs(experiment::run_experiment(cfg));
    for (const auto& [name, text] : files) {
      CAPTURE(name);
      CHECK(first_lines(text, 2) == slurp(kSource / "tests" / "golden" / (name + "_header.csv")));
    }
  }

  TEST_CASE("generated suite matches the golden suite file") {
    const auto cfg = config::load_config(kSource / "configs" / "smoke.yaml");
    const auto env = config::make_environment(cfg.environment);
    auto spec = cfg.train_suite;
    spec.seed = 7;
    std::ostringstream out;
    envs::write_suite(out, env->make_suite(spec), env->vocab());
    CHECK(out.str() == slurp(kSource / "tests" / "golden" / "constraint_plan_suite_seed7.jsonl"));
  }

  TEST_CASE("summary reports mean and sample std over the repeats") {
    TempDir dir("summary");
    auto cfg = smoke(dir.path());
    cfg.repeats = 3;
    cfg.methods = {trainer::Method::kGrpo};
    const auto res = experiment::run_experiment(cfg);
    std::ostringstream s;
    experiment::write_summary_csv(s, res);
    std::istringstream lines(s.str());
    std::string line;
    bool found = false;
    while (std::getline(lines, line)) {
      if (line.rfind("grpo,final_pass_rate,", 0) != 0) continue;
      found = true;
      double vals[3];
      for (int r = 0; r < 3; ++r) vals[r] = res.runs[r].evals.back().summary.overall.final_pass_rate;
      const double mean = (vals[0] + vals[1] + vals[2]) / 3;
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      CHECK(line == fmt::format("grpo,final_pass_rate,3,{:.10g},{:.10g}", mean, std::sqrt(ss / 2)));
    }
    CHECK(found);
  }

  TEST_CASE("compare merges two runs with rollout axis and difficulty splits") {
    TempDir a("cmp-a"), b("cmp-b");
    auto ca = smoke(a.path());
    ca.methods = {trainer::Method::kFbos};
    auto cb = smoke(b.path());
    cb.methods = {trainer::Method::kGrpo};
    experiment::train_to_directory(ca);
    experiment::train_to_directory(cb);
    const auto cmp = compare::load_runs({a.path(), b.path()});
    CHECK(cmp.methods == std::vector<std::string>{"fbos", "grpo"});
    const auto table = compare::final_table(cmp);
    CHECK(table.find("fbos") != std::string::npos);
    CHECK(table.find("grpo") != std::string::npos);
    for (const auto& m : cmp.methods) {
      const auto* pass = cmp.find(m, "final_pass_rate", "all");
      REQUIRE(pass != nullptr);
      for (const auto& p : *pass) CHECK(p.cumulative_rollouts == p.step * 72.0);
      // The validation suite spans all difficulties; the two training steps
      // only visit easy tasks.
      for (const char* split : {"easy", "medium", "hard"}) {
        CHECK(cmp.find(m, "final_pass_rate", split) != nullptr);
      }
      CHECK(cmp.find(m, "train_score_mean", "easy") != nullptr);
      CHECK(cmp.find(m, "train_score_mean", "hard") == nullptr);
      for (const char* curve : {"entropy", "grad_norm", "train_score_mean", "train_score_std"}) {
        CHECK(cmp.find(m, curve, "train") != nullptr);
      }
    }
    CHECK(cmp.find("fbos", "fap_score_mean", "train") != nullptr);
    CHECK(cmp.find("fbos", "fap_score_max", "train") != nullptr);

    TempDir out("cmp-out");
    compare::write_outputs(out.path(), cmp, true);
    const std::string curves = slurp(out.path() / "curves.csv");
    CHECK(first_lines(curves, 1) == "# fbos-curves v1\n");
    CHECK(fs::exists(out.path() / "final.csv"));
    CHECK(fs::exists(out.path() / "plots" / "final_pass_rate_all.svg"));
  }

  TEST_CASE("compare rejects foreign or missing CSVs") {
    TempDir a("bad-a"), b("bad-b");
    std::ofstream(a.path() / "eval.csv") << "# something-else v9\nstep\n";
    std::ofstream(a.path() / "metrics.csv") << "# fbos-metrics v1\nmethod\n";
    CHECK_THROWS_AS(compare::load_runs({a.path(), b.path()}), compare::SchemaError);
  }

  TEST_CASE("curve summaries") {
    std::vector<compare::CurvePoint> pts;
    for (int s = 0; s <= 100; s += 10) pts.push_back({s, s * 72.0, 0.5 + 0.01 * s, 0.1, 3});
    CHECK(compare::first_step_reaching(pts, 0.79) == 30);
    CHECK_FALSE(compare::first_step_reaching(pts, 2.0).has_value());
    CHECK(compare::tail_slope(pts, 0.8) == doctest::Approx(0.01).epsilon(1e-12));
    // Last 20% of 11 points is 2 points: steps 90 and 100.
    CHECK(compare::tail_mean(pts, 0.2) == doctest::Approx(1.45));
  }
}
