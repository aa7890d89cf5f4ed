#ifndef FBOS_EXPERIMENT_HPP_
#define FBOS_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fbos/config.hpp"
#include "fbos/metrics.hpp"
#include "fbos/trainer.hpp"

namespace fbos::experiment {

inline constexpr std::string_view kMetricsSchema = "fbos-metrics v1";
inline constexpr std::string_view kEvalSchema = "fbos-eval v1";
inline constexpr std::string_view kDifficultySchema = "fbos-train-difficulty v1";
inline constexpr std::string_view kSummarySchema = "fbos-summary v1";

struct EvalRecord {
  int step = 0;
  std::uint64_t cumulative_rollouts = 0;
  metrics::EvalSummary summary;
};

struct RunResult {
  trainer::Method method = trainer::Method::kFbos;
  int repeat = 0;
  std::vector<trainer::StepMetrics> steps;
  std::vector<EvalRecord> evals;
  std::uint64_t rollouts_sampled = 0;
  std::uint64_t updates_applied = 0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;  // ordered by (method in config order, repeat)
};

// Master seed of repeat r; shared by every method so methods see the same
// task order, sampling streams and validation draws.
std::uint64_t repeat_seed(std::uint64_t master, int repeat);

struct Hooks {
  // Called after every training step.
  std::function<void(const RunResult&, const trainer::StepMetrics&)> on_step;
  // Called with the live parameters at checkpoint steps.
  std::function<void(const RunResult&, int step, const policy::PolicyParams&)> on_checkpoint;
  // Receives the rollout dump when dump_rollouts is set.
  std::function<void(const RunResult&, int step, const sampling::StepBatch&)> on_batch;
};

RunResult run_single(const config::ExperimentConfig& cfg, trainer::Method method, int repeat,
                     const Hooks& hooks = {});

ExperimentResult run_experiment(const config::ExperimentConfig& cfg, const Hooks& hooks = {});

// Tidy CSV writers. Each file starts with a "# <schema>" line.
void write_metrics_csv(std::ostream& out, const ExperimentResult& res);
void write_eval_csv(std::ostream& out, const ExperimentResult& res);
void write_difficulty_csv(std::ostream& out, const ExperimentResult& res);
void write_summary_csv(std::ostream& out, const ExperimentResult& res);
std::string summary_text(const ExperimentResult& res);

// Writes config.yaml, metrics.csv, eval.csv, train_difficulty.csv,
// summary.csv, summary.txt into `dir`, each atomically.
void write_artifacts(const std::filesystem::path& dir, const config::ExperimentConfig& cfg,
                     const ExperimentResult& res);

// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Runs the experiment and writes every artifact plus checkpoints under
// cfg.output_dir. Returns the in-memory results.
ExperimentResult train_to_directory(const config::ExperimentConfig& cfg,
                                    std::ostream* log = nullptr);

}  // namespace fbos::experiment

#endif  // FBOS_EXPERIMENT_HPP_
