#ifndef FBOS_INVARIANTS_HPP_
#define FBOS_INVARIANTS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace fbos::invariants {

// Randomized property suites over every module. Each property draws its
// cases from its own stream derived from `seed`.
struct Options {
  std::uint64_t seed = 1;
  int cases = 1000;  // per randomized property
};

struct Result {
  std::string module;
  std::string name;
  int cases = 0;
  bool passed = true;
  std::string detail;  // first counterexample on failure
};

std::vector<Result> check_policy(const Options& opt);
std::vector<Result> check_envs(const Options& opt);
std::vector<Result> check_sampling(const Options& opt);
std::vector<Result> check_objectives(const Options& opt);
std::vector<Result> check_trainer(const Options& opt);
std::vector<Result> check_metrics(const Options& opt);
// Runs two tiny experiments in a temporary directory.
std::vector<Result> check_harness(const Options& opt);

std::vector<Result> run_all(const Options& opt);

}  // namespace fbos::invariants

#endif  // FBOS_INVARIANTS_HPP_
