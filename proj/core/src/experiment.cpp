#include "fbos/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "fbos/checkpoint.hpp"
#include "fbos/rng.hpp"

namespace fbos::experiment {
namespace {

std::string fmt_num(double x) { return fmt::format("{:.10g}", x); }

std::string fmt_opt(const std::optional<double>& x) { return x ? fmt_num(*x) : "NA"; }

constexpr std::string_view kSplits[] = {"all", "easy", "medium", "hard"};

const std::optional<metrics::RateSet>& split_rates(const metrics::EvalSummary& s, int split,
                                                   std::optional<metrics::RateSet>& scratch) {
  if (split == 0) {
    scratch = s.overall;
    return scratch;
  }
  return s.by_difficulty[static_cast<std::size_t>(split - 1)];
}

struct Stat {
  double mean = 0.0;
  std::optional<double> std;  // sample std; nullopt for a single repeat
  int count = 0;
};

Stat stat(const std::vector<double>& xs) {
  Stat s;
  s.count = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

// Per-run scalar outcomes that feed the summary, in output order.
std::vector<std::pair<std::string, std::optional<double>>> run_outcomes(const RunResult& r) {
  std::vector<std::pair<std::string, std::optional<double>>> out;
  if (!r.evals.empty()) {
    const auto& last = r.evals.back().summary;
    out.emplace_back("final_pass_rate", last.overall.final_pass_rate);
    out.emplace_back("avg_score", last.overall.avg_score);
    out.emplace_back("commonsense_micro", last.overall.commonsense_micro);
    out.emplace_back("commonsense_macro", last.overall.commonsense_macro);
    out.emplace_back("hard_micro", last.overall.hard_micro);
    out.emplace_back("hard_macro", last.overall.hard_macro);
    for (envs::Difficulty d : envs::kAllDifficulties) {
      const auto& rs = last.by_difficulty[static_cast<std::size_t>(d)];
      out.emplace_back(fmt::format("final_pass_rate_{}", envs::to_string(d)),
                       rs ? std::optional<double>(rs->final_pass_rate) : std::nullopt);
    }
  }
  if (!r.steps.empty()) {
    const std::size_t n = r.steps.size();
    const std::size_t tail_start = n - std::max<std::size_t>(1, n / 5);
    double ent = 0.0, gn = 0.0;
    for (std::size_t i = tail_start; i < n; ++i) ent += r.steps[i].entropy;
    for (const auto& s : r.steps) gn += s.grad_norm;
    out.emplace_back("train_score_mean_final", r.steps.back().train_score_mean);
    out.emplace_back("entropy_last20pct", ent / static_cast<double>(n - tail_start));
    out.emplace_back("grad_norm_mean", gn / static_cast<double>(n));
  }
  out.emplace_back("rollouts", static_cast<double>(r.rollouts_sampled));
  out.emplace_back("updates", static_cast<double>(r.updates_applied));
  return out;
}

// Groups run outcomes by (method, metric), preserving first-seen order.
std::vector<std::tuple<trainer::Method, std::string, Stat>> summarize(const ExperimentResult& res) {
  std::vector<std::tuple<trainer::Method, std::string, std::vector<double>>> acc;
  for (const auto& r : res.runs) {
    for (const auto& [name, value] : run_outcomes(r)) {
      if (!value) continue;
      auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& e) {
        return std::get<0>(e) == r.method && std::get<1>(e) == name;
      });
      if (it == acc.end()) {
        acc.emplace_back(r.method, name, std::vector<double>{});
        it = std::prev(acc.end());
      }
      std::get<2>(*it).push_back(*value);
    }
  }
  std::vector<std::tuple<trainer::Method, std::string, Stat>> out;
  for (const auto& [m, name, xs] : acc) out.emplace_back(m, name, stat(xs));
  return out;
}

}  // namespace

std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return derive_seed({master, static_cast<std::uint64_t>(StreamTag::kRepeat),
                      static_cast<std::uint64_t>(repeat)});
}

RunResult run_single(const config::ExperimentConfig& cfg, trainer::Method method, int repeat,
                     const Hooks& hooks) {
  const auto env = config::make_environment(cfg.environment);
  const auto train_tasks = env->make_suite(cfg.train_suite);
  const auto val_tasks = env->make_suite(cfg.validation_suite);

  trainer::TrainConfig tc = cfg.train_config(method);
  tc.seed = repeat_seed(cfg.seed, repeat);
  if (tc.sampling.max_answer_len == 0) tc.sampling.max_answer_len = env->max_answer_len();
  tc.validate();
  const std::uint64_t eval_seed =
      derive_seed({tc.seed, static_cast<std::uint64_t>(StreamTag::kEval)});

  RunResult run;
  run.method = method;
  run.repeat = repeat;
  trainer::TrainerState state = trainer::make_state(tc, env->vocab_ptr());

  auto evaluate = [&]() {
    const policy::PolicySnapshot snap(state.params, state.step);
    run.evals.push_back({state.step, state.rollouts_sampled,
                         metrics::evaluate(snap, *env, val_tasks, eval_seed,
                                           static_cast<std::uint64_t>(state.step),
                                           cfg.eval.samples_per_task, tc.sampling)});
  };

  evaluate();
  trainer::BatchObserver observer;
  int current_step = 0;
  if (hooks.on_batch && cfg.dump_rollouts) {
    observer = [&](const sampling::StepBatch& b) { hooks.on_batch(run, current_step, b); };
  }
  for (int s = 0; s < tc.steps; ++s) {
    current_step = s + 1;
    const auto tasks = trainer::tasks_for_step(train_tasks, s, tc.tasks_per_step);
    run.steps.push_back(trainer::train_step(state, *env, tasks, tc, observer));
    run.rollouts_sampled = state.rollouts_sampled;
    run.updates_applied = state.updates_applied;
    if (hooks.on_step) hooks.on_step(run, run.steps.back());
    if (state.step % cfg.eval.every == 0 || state.step == tc.steps) evaluate();
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step != tc.steps) {
      hooks.on_checkpoint(run, state.step, state.params);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(run, state.step, state.params);
  return run;
}

ExperimentResult run_experiment(const config::ExperimentConfig& cfg, const Hooks& hooks) {
  cfg.validate();
  ExperimentResult res;
  for (trainer::Method m : cfg.methods) {
    for (int r = 0; r < cfg.repeats; ++r) res.runs.push_back(run_single(cfg, m, r, hooks));
  }
  return res;
}

void write_metrics_csv(std::ostream& out, const ExperimentResult& res) {
  out << "# " << kMetricsSchema << '\n';
  out << "method,repeat,step,rollouts,cumulative_rollouts,updates,train_score_mean,"
         "train_score_std,init_score_mean,fap_score_mean,fap_score_std,fap_score_max,entropy,"
         "grad_norm,epa_loss,ecc_loss,grpo_loss,epa_clip_fraction,ecc_clip_fraction,"
         "grpo_clip_fraction\n";
  for (const auto& r : res.runs) {
    for (const auto& m : r.steps) {
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                         trainer::to_string(r.method), r.repeat, m.step, m.rollouts,
                         m.cumulative_rollouts, m.updates, fmt_num(m.train_score_mean),
                         fmt_num(m.train_score_std), fmt_num(m.init_score_mean),
                         fmt_opt(m.fap_score_mean), fmt_opt(m.fap_score_std),
                         fmt_opt(m.fap_score_max), fmt_num(m.entropy), fmt_num(m.grad_norm),
                         fmt_opt(m.epa_loss), fmt_opt(m.ecc_loss), fmt_opt(m.grpo_loss),
                         fmt_opt(m.epa_clip_fraction), fmt_opt(m.ecc_clip_fraction),
                         fmt_opt(m.grpo_clip_fraction));
    }
  }
}

void write_eval_csv(std::ostream& out, const ExperimentResult& res) {
  out << "# " << kEvalSchema << '\n';
  out << "method,repeat,step,split,cumulative_rollouts,plans,commonsense_micro,"
         "commonsense_macro,hard_micro,hard_macro,final_pass_rate,avg_score\n";
  for (const auto& r : res.runs) {
    for (const auto& e : r.evals) {
      for (int split = 0; split < 4; ++split) {
        std::optional<metrics::RateSet> scratch;
        const auto& rs = split_rates(e.summary, split, scratch);
        if (!rs) continue;
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", trainer::to_string(r.method),
                           r.repeat, e.step, kSplits[split], e.cumulative_rollouts, rs->plans,
                           fmt_opt(rs->commonsense_micro), fmt_num(rs->commonsense_macro),
                           fmt_opt(rs->hard_micro), fmt_num(rs->hard_macro),
                           fmt_num(rs->final_pass_rate), fmt_num(rs->avg_score));
      }
    }
  }
}

void write_difficulty_csv(std::ostream& out, const ExperimentResult& res) {
  out << "# " << kDifficultySchema << '\n';
  out << "method,repeat,step,difficulty,tasks,train_score_mean,train_score_std,fap_score_mean,"
         "fap_score_max\n";
  for (const auto& r : res.runs) {
    for (const auto& m : r.steps) {
      for (envs::Difficulty d : envs::kAllDifficulties) {
        const auto& ds = m.by_difficulty[static_cast<std::size_t>(d)];
        if (ds.tasks == 0) continue;
        out << fmt::format("{},{},{},{},{},{},{},{},{}\n", trainer::to_string(r.method), r.repeat,
                           m.step, envs::to_string(d), ds.tasks, fmt_opt(ds.train_score_mean),
                           fmt_opt(ds.train_score_std), fmt_opt(ds.fap_score_mean),
                           fmt_opt(ds.fap_score_max));
      }
    }
  }
}

void write_summary_csv(std::ostream& out, const ExperimentResult& res) {
  out << "# " << kSummarySchema << '\n';
  out << "method,metric,repeats,mean,std\n";
  for (const auto& [m, name, s] : summarize(res)) {
    out << fmt::format("{},{},{},{},{}\n", trainer::to_string(m), name, s.count, fmt_num(s.mean),
                       fmt_opt(s.std));
  }
}

std::string summary_text(const ExperimentResult& res) {
  std::string out;
  std::optional<trainer::Method> current;
  for (const auto& [m, name, s] : summarize(res)) {
    if (current != m) {
      out += fmt::format("{}{}\n", current ? "\n" : "", trainer::to_string(m));
      current = m;
    }
    out += s.std ? fmt::format("  {:<24} {:.4f} +/- {:.4f}  (n={})\n", name, s.mean, *s.std, s.count)
                 : fmt::format("  {:<24} {:.4f}  (n={})\n", name, s.mean, s.count);
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out << contents;
    if (!out.flush()) throw std::runtime_error(fmt::format("write failed: {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void write_artifacts(const std::filesystem::path& dir, const config::ExperimentConfig& cfg,
                     const ExperimentResult& res) {
  std::filesystem::create_directories(dir);
  auto render = [&](auto writer) {
    std::ostringstream ss;
    writer(ss, res);
    return ss.str();
  };
  write_file_atomic(dir / "config.yaml", config::dump_config(cfg));
  write_file_atomic(dir / "metrics.csv", render(write_metrics_csv));
  write_file_atomic(dir / "eval.csv", render(write_eval_csv));
  write_file_atomic(dir / "train_difficulty.csv", render(write_difficulty_csv));
  write_file_atomic(dir / "summary.csv", render(write_summary_csv));
  write_file_atomic(dir / "summary.txt", summary_text(res));
}

ExperimentResult train_to_directory(const config::ExperimentConfig& cfg, std::ostream* log) {
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir / "checkpoints");
  if (cfg.dump_rollouts) std::filesystem::create_directories(dir / "rollouts");
  std::map<std::pair<int, int>, std::ostringstream> dumps;

  Hooks hooks;
  hooks.on_checkpoint = [&](const RunResult& run, int step, const policy::PolicyParams& params) {
    policy::save_checkpoint(params, dir / "checkpoints" /
                                        fmt::format("{}_r{}_step{:05}.ckpt",
                                                    trainer::to_string(run.method), run.repeat,
                                                    step));
  };
  hooks.on_batch = [&](const RunResult& run, int step, const sampling::StepBatch& batch) {
    sampling::write_rollout_dump(dumps[{static_cast<int>(run.method), run.repeat}], step, batch);
  };
  if (log) {
    hooks.on_step = [&](const RunResult& run, const trainer::StepMetrics& m) {
      const int total = cfg.train_config(run.method).steps;
      if (m.step == total || m.step % std::max(1, total / 10) == 0) {
        *log << fmt::format("[{} r{}] step {}/{} train {:.3f} entropy {:.3f} grad_norm {:.4f}\n",
                            trainer::to_string(run.method), run.repeat, m.step, total,
                            m.train_score_mean, m.entropy, m.grad_norm)
             << std::flush;
      }
    };
  }

  ExperimentResult res = run_experiment(cfg, hooks);
  for (const auto& [key, ss] : dumps) {
    write_file_atomic(dir / "rollouts" /
                          fmt::format("{}_r{}.jsonl",
                                      trainer::to_string(static_cast<trainer::Method>(key.first)),
                                      key.second),
                      ss.str());
  }
  write_artifacts(dir, cfg, res);
  return res;
}

}  // namespace fbos::experiment
