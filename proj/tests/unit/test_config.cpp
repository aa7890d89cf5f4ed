#include <string>

#include <doctest.h>

#include "fbos/config.hpp"

using namespace fbos::config;
using fbos::trainer::Method;

namespace {

// Returns the error raised by parsing `text`; fails the test if none is.
ConfigError parse_error(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError for:\n" << text);
  return ConfigError("", 0, 0, "");
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("an empty document gives the defaults") {
    const auto cfg = parse_config("", "t.yaml");
    const ExperimentConfig defaults;
    CHECK(dump_config(cfg) == dump_config(defaults));
    CHECK(cfg.train.n == 8);
    CHECK(cfg.train.k == 8);
    CHECK(cfg.train.clip.epsilon == 0.2);
    CHECK(cfg.train.clip.reweight_c == 0.1);
    CHECK(cfg.train.eps_adv == 1e-6);
    CHECK(cfg.train.optimizer.learning_rate == 0.05);
    CHECK(cfg.train.tasks_per_step == 1);
    CHECK(cfg.repeats == 3);
    CHECK(cfg.methods.size() == 5);
  }

  TEST_CASE("absent sections keep defaults while present keys override") {
    const auto cfg = parse_config(
        "seed: 5\n"
        "train:\n"
        "  steps: 12\n"
        "  optimizer: {kind: adam}\n",
        "t.yaml");
    CHECK(cfg.seed == 5);
    CHECK(cfg.train.steps == 12);
    CHECK(cfg.train.optimizer.kind == fbos::trainer::OptimizerKind::kAdam);
    CHECK(cfg.train.optimizer.learning_rate == 0.05);
    CHECK(cfg.environment.name == "constraint_plan");
  }

  TEST_CASE("dump and parse round trip") {
    auto cfg = parse_config(
        "methods: [grpo, fbos]\n"
        "train: {steps: 7, tasks_per_step: 2, clip: {epsilon: 0.3}}\n"
        "method_overrides:\n"
        "  grpo: {optimizer: {learning_rate: 0.2}}\n",
        "t.yaml");
    const std::string once = dump_config(cfg);
    const std::string twice = dump_config(parse_config(once, "dump"));
    CHECK(once == twice);
    CHECK(cfg.methods == std::vector<Method>{Method::kGrpo, Method::kFbos});
    CHECK(cfg.train_config(Method::kGrpo).optimizer.learning_rate == 0.2);
    CHECK(cfg.train_config(Method::kFbos).optimizer.learning_rate == 0.05);
    CHECK(cfg.train_config(Method::kGrpo).method == Method::kGrpo);
  }

  TEST_CASE("unknown keys are rejected with their line") {
    const auto e = parse_error(
        "seed: 1\n"
        "train:\n"
        "  steps: 10\n"
        "  learning_rate: 0.1\n");
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    CHECK(std::string(e.what()).find("t.yaml:4") == 0);
    CHECK(parse_error("colour: blue\n").line() == 1);
  }

  TEST_CASE("malformed values name their line") {
    CHECK(parse_error("seed: 1\nrepeats: three\n").line() == 2);
    CHECK(parse_error("methods: [fbos, ppo]\n").line() == 1);
    CHECK(parse_error("train:\n  optimizer: {kind: rmsprop}\n").line() == 2);
    CHECK(parse_error("environment:\n  name: chess\n").line() == 2);
  }

  TEST_CASE("YAML syntax errors carry a position") {
    const auto e = parse_error("train: [1, 2\n");
    CHECK(e.line() >= 1);
  }

  TEST_CASE("semantically invalid settings are rejected") {
    parse_error("repeats: 0\n");
    parse_error("train: {n: 0}\n");
    parse_error("train: {clip: {epsilon: 1.5}}\n");
    parse_error("methods: [fbos, fbos]\n");
    parse_error("eval: {every: 0}\n");
  }

  TEST_CASE("missing config file") {
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ConfigError);
  }
}
