#ifndef FBOS_CONFIG_HPP_
#define FBOS_CONFIG_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbos/envs.hpp"
#include "fbos/gradcheck.hpp"
#include "fbos/trainer.hpp"

namespace fbos::config {

// Parse or validation failure, located in the source text.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, int column, const std::string& message);
  const std::string& source() const { return source_; }
  int line() const { return line_; }  // 1-based; 0 if unknown
  int column() const { return column_; }

 private:
  std::string source_;
  int line_;
  int column_;
};

struct EnvironmentSpec {
  std::string name = "constraint_plan";
  envs::ConstraintPlanConfig constraint_plan;
  envs::GrammarProofConfig grammar_proof;
};

std::unique_ptr<envs::Environment> make_environment(const EnvironmentSpec& spec);

struct EvalSpec {
  int every = 10;  // steps between validation runs; step 0 and the last step always run
  int samples_per_task = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/experiment";
  EnvironmentSpec environment;
  envs::SuiteSpec train_suite{4, 4, 4, 1};
  envs::SuiteSpec validation_suite{0, 0, 4, 2};
  std::vector<trainer::Method> methods{std::begin(trainer::kAllMethods),
                                       std::end(trainer::kAllMethods)};
  int repeats = 3;
  EvalSpec eval;
  int checkpoint_every = 0;  // 0: final checkpoint only
  bool dump_rollouts = false;
  trainer::TrainConfig train;  // shared by every method
  // Effective configs of methods whose settings differ from `train`.
  std::map<trainer::Method, trainer::TrainConfig> method_overrides;
  gradcheck::Config gradcheck;

  // Effective TrainConfig of method m, with method, seed and repeats filled in.
  trainer::TrainConfig train_config(trainer::Method m) const;
  void validate() const;  // throws std::invalid_argument
};

// Unknown keys and malformed values raise ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// YAML with every value explicit; parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace fbos::config

#endif  // FBOS_CONFIG_HPP_
