#ifndef FBOS_ENVS_HPP_
#define FBOS_ENVS_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbos/vocab.hpp"

namespace fbos::envs {

enum class Difficulty : std::uint8_t { kEasy = 0, kMedium = 1, kHard = 2 };
inline constexpr Difficulty kAllDifficulties[] = {Difficulty::kEasy, Difficulty::kMedium,
                                                  Difficulty::kHard};

// Hard sorts before commonsense: feedback is rendered and truncated in this
// order, so commonsense violations are the first to be dropped.
enum class ConstraintClass : std::uint8_t { kHard = 0, kCommonsense = 1 };

enum class ConstraintKind : std::uint8_t {
  kFormat,         // plan: exactly `limit` content tokens then EOS
  kRequiredValue,  // plan: slot `position` holds content value `value`
  kNoRepeat,       // plan: no two adjacent slots hold the same value
  kBudget,         // plan: total value cost <= `limit`
  kProofFormat,    // proof: 1..limit rule tokens, QED, EOS
  kProofGoal,      // proof: rules map start `value` to goal `limit`
};

// Marks the violation-detail slot inside a feedback template.
inline constexpr TokenId kDetailSlot = -1;

struct ConstraintSpec {
  std::string id;
  ConstraintClass cls = ConstraintClass::kHard;
  ConstraintKind kind = ConstraintKind::kFormat;
  int position = -1;
  int value = -1;
  int limit = 0;
  std::vector<TokenId> feedback_template;  // contains kDetailSlot at most once
};

struct Task {
  std::string id;
  std::string env;  // environment name
  Difficulty difficulty = Difficulty::kEasy;
  std::vector<TokenId> prompt;
  std::vector<ConstraintSpec> constraints;
};

struct ConstraintResult {
  std::string constraint_id;
  ConstraintClass cls = ConstraintClass::kHard;
  bool passed = false;
  std::optional<int> locus;
};

struct Violation {
  std::string constraint_id;
  ConstraintClass cls = ConstraintClass::kHard;
  std::optional<int> locus;
  std::vector<TokenId> tokens;  // template with the detail slot filled in
};

// r and F for one answer. `violations` is empty iff every constraint passed.
struct VerifierReport {
  double reward = 0.0;
  std::vector<ConstraintResult> constraint_results;
  std::vector<Violation> violations;

  bool all_passed() const { return violations.empty(); }
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SuiteSpec {
  int easy = 0;
  int medium = 0;
  int hard = 0;
  std::uint64_t seed = 0;

  int count(Difficulty d) const {
    return d == Difficulty::kEasy ? easy : d == Difficulty::kMedium ? medium : hard;
  }
};

// Rule-based task environment. Immutable after construction; verify may be
// called concurrently.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  const Vocab& vocab() const { return *vocab_; }
  const std::shared_ptr<const Vocab>& vocab_ptr() const { return vocab_; }

  // Longest answer (including EOS) a policy should be allowed to sample.
  virtual int max_answer_len() const = 0;

  VerifierReport verify(const Task& task, std::span<const TokenId> answer) const;

  // Deterministic reward rule applied to checked constraints.
  virtual double reward(const Task& task, std::span<const ConstraintResult> results) const = 0;

  virtual std::vector<Task> make_suite(const SuiteSpec& spec) const = 0;

  // Brute-force: does any answer satisfy every constraint of the task?
  virtual bool satisfiable(const Task& task) const = 0;

 protected:
  explicit Environment(std::shared_ptr<const Vocab> vocab) : vocab_(std::move(vocab)) {}

  // Checks one constraint; on failure sets the locus and detail tokens.
  struct Check {
    bool passed = true;
    std::optional<int> locus;
    std::vector<TokenId> detail;
  };
  virtual Check check(const Task& task, const ConstraintSpec& c,
                      std::span<const TokenId> answer) const = 0;

 private:
  std::shared_ptr<const Vocab> vocab_;
};

// Structured plan: an answer is a fixed-length sequence of valued slots.
struct ConstraintPlanConfig {
  int num_values = 5;  // value v costs v
  int easy_length = 3;
  int medium_length = 4;
  int hard_length = 5;
  int easy_required = 2;
  int medium_required = 3;
  int hard_required = 4;
  int max_budget_slack = 2;
};

class ConstraintPlanEnv final : public Environment {
 public:
  explicit ConstraintPlanEnv(ConstraintPlanConfig config = {});

  std::string_view name() const override { return "constraint_plan"; }
  int max_answer_len() const override { return max_length_ + 2; }
  double reward(const Task& task, std::span<const ConstraintResult> results) const override;
  std::vector<Task> make_suite(const SuiteSpec& spec) const override;
  bool satisfiable(const Task& task) const override;

  const ConstraintPlanConfig& config() const { return config_; }
  int plan_length(Difficulty d) const;
  TokenId value_token(int v) const { return value0_ + v; }
  std::optional<int> value_of(TokenId tok) const;

  // Builds the task for an explicit plan specification; throws
  // GenerationError if it cannot be satisfied.
  Task make_task(std::string id, Difficulty d, const std::vector<std::pair<int, int>>& required,
                 bool no_repeat, std::optional<int> budget) const;

 protected:
  Check check(const Task& task, const ConstraintSpec& c,
              std::span<const TokenId> answer) const override;

 private:
  static std::shared_ptr<const Vocab> build_vocab(const ConstraintPlanConfig& config);

  ConstraintPlanConfig config_;
  int max_length_;
  TokenId value0_, pos0_, req0_, len0_, bud0_;
  TokenId fb_format_, fb_need_, fb_repeat_, fb_budget_;
};

// Derivation task scored +1 / 0 / -1: rewrite a start number into a goal
// number with rule tokens, closed by QED.
struct GrammarProofConfig {
  int max_number = 15;
  int max_steps = 6;
  int easy_max_distance = 2;
  int medium_max_distance = 4;
  int hard_max_distance = 6;
};

class GrammarProofEnv final : public Environment {
 public:
  enum class Rule { kInc, kDec, kDouble };

  explicit GrammarProofEnv(GrammarProofConfig config = {});

  std::string_view name() const override { return "grammar_proof"; }
  int max_answer_len() const override { return config_.max_steps + 3; }
  double reward(const Task& task, std::span<const ConstraintResult> results) const override;
  std::vector<Task> make_suite(const SuiteSpec& spec) const override;
  bool satisfiable(const Task& task) const override;

  const GrammarProofConfig& config() const { return config_; }
  TokenId rule_token(Rule r) const;
  TokenId qed() const { return qed_; }
  Task make_task(std::string id, Difficulty d, int start, int goal) const;
  // Fewest rule applications from start to goal, or nullopt.
  std::optional<int> distance(int start, int goal) const;

 protected:
  Check check(const Task& task, const ConstraintSpec& c,
              std::span<const TokenId> answer) const override;

 private:
  static std::shared_ptr<const Vocab> build_vocab(const GrammarProofConfig& config);
  std::optional<int> apply(TokenId rule, int state) const;

  GrammarProofConfig config_;
  TokenId inc_, dec_, dbl_, qed_, num0_, pos0_, start_kw_, goal_kw_;
  TokenId fb_syntax_, fb_wrong_, fb_range_;
};

// Renders F as tokens: violations sorted by (class, id), each already
// expanded from its template. Whole trailing violations are dropped until
// the result fits in max_len.
std::vector<TokenId> render_feedback(const VerifierReport& report, int max_len);

std::unique_ptr<Environment> make_environment(std::string_view name);

std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);
std::string_view to_string(ConstraintClass c);
ConstraintClass constraint_class_from_string(std::string_view s);
std::string_view to_string(ConstraintKind k);
ConstraintKind constraint_kind_from_string(std::string_view s);

}  // namespace fbos::envs

#endif  // FBOS_ENVS_HPP_
