#include "fbos/envs.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "fbos/rng.hpp"

namespace fbos::envs {

VerifierReport Environment::verify(const Task& task, std::span<const TokenId> answer) const {
  VerifierReport report;
  report.constraint_results.reserve(task.constraints.size());
  for (const ConstraintSpec& c : task.constraints) {
    Check chk = check(task, c, answer);
    report.constraint_results.push_back({c.id, c.cls, chk.passed, chk.locus});
    if (chk.passed) continue;
    Violation v{c.id, c.cls, chk.locus, {}};
    for (TokenId tok : c.feedback_template) {
      if (tok == kDetailSlot) {
        v.tokens.insert(v.tokens.end(), chk.detail.begin(), chk.detail.end());
      } else {
        v.tokens.push_back(tok);
      }
    }
    report.violations.push_back(std::move(v));
  }
  report.reward = reward(task, report.constraint_results);
  return report;
}

std::vector<TokenId> render_feedback(const VerifierReport& report, int max_len) {
  std::vector<const Violation*> order;
  order.reserve(report.violations.size());
  for (const auto& v : report.violations) order.push_back(&v);
  std::sort(order.begin(), order.end(), [](const Violation* a, const Violation* b) {
    if (a->cls != b->cls) return a->cls < b->cls;
    return a->constraint_id < b->constraint_id;
  });
  std::size_t keep = order.size();
  auto length = [&](std::size_t count) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < count; ++i) n += order[i]->tokens.size();
    return n;
  };
  const std::size_t budget = max_len > 0 ? static_cast<std::size_t>(max_len) : 0;
  while (keep > 0 && length(keep) > budget) --keep;
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < keep; ++i) {
    out.insert(out.end(), order[i]->tokens.begin(), order[i]->tokens.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// ConstraintPlan

namespace {

// Tokens before the first EOS, and whether EOS was produced at all.
struct Plan {
  std::span<const TokenId> slots;
  bool terminated = false;
};

Plan split_plan(std::span<const TokenId> answer) {
  const auto eos = std::find(answer.begin(), answer.end(), Vocab::kEos);
  return {answer.first(static_cast<std::size_t>(eos - answer.begin())), eos != answer.end()};
}

}  // namespace

std::shared_ptr<const Vocab> ConstraintPlanEnv::build_vocab(const ConstraintPlanConfig& c) {
  const int max_len = std::max({c.easy_length, c.medium_length, c.hard_length});
  Vocab::Builder b;
  for (int v = 0; v < c.num_values; ++v) b.add(fmt::format("v{}", v), TokenClass::kContent);
  for (int p = 0; p < max_len + 2; ++p) b.add(fmt::format("@{}", p), TokenClass::kPosition, p);
  for (int l = 1; l <= max_len; ++l) b.add(fmt::format("len{}", l), TokenClass::kPrompt);
  for (int p = 0; p < max_len; ++p) {
    for (int v = 0; v < c.num_values; ++v) {
      b.add(fmt::format("req@{}=v{}", p, v), TokenClass::kPrompt);
    }
  }
  for (int bud = 0; bud <= (c.num_values - 1) * max_len; ++bud) {
    b.add(fmt::format("budget{}", bud), TokenClass::kPrompt);
  }
  b.add("norepeat", TokenClass::kPrompt);
  b.add("fb:format", TokenClass::kFeedbackKind);
  b.add("fb:need", TokenClass::kFeedbackKind);
  b.add("fb:repeat", TokenClass::kFeedbackKind);
  b.add("fb:budget", TokenClass::kFeedbackKind);
  return std::make_shared<const Vocab>(std::move(b).build());
}

ConstraintPlanEnv::ConstraintPlanEnv(ConstraintPlanConfig config)
    : Environment(build_vocab(config)), config_(config) {
  if (config_.num_values < 2) throw std::invalid_argument("constraint_plan: num_values < 2");
  max_length_ = std::max({config_.easy_length, config_.medium_length, config_.hard_length});
  if (std::min({config_.easy_length, config_.medium_length, config_.hard_length}) < 1) {
    throw std::invalid_argument("constraint_plan: plan lengths must be >= 1");
  }
  const Vocab& v = vocab();
  value0_ = v.id("v0");
  pos0_ = v.id("@0");
  len0_ = v.id("len1");
  req0_ = v.id("req@0=v0");
  bud0_ = v.id("budget0");
  fb_format_ = v.id("fb:format");
  fb_need_ = v.id("fb:need");
  fb_repeat_ = v.id("fb:repeat");
  fb_budget_ = v.id("fb:budget");
}

int ConstraintPlanEnv::plan_length(Difficulty d) const {
  switch (d) {
    case Difficulty::kEasy: return config_.easy_length;
    case Difficulty::kMedium: return config_.medium_length;
    case Difficulty::kHard: return config_.hard_length;
  }
  return config_.hard_length;
}

std::optional<int> ConstraintPlanEnv::value_of(TokenId tok) const {
  const int v = tok - value0_;
  if (v < 0 || v >= config_.num_values) return std::nullopt;
  return v;
}

ConstraintPlanEnv::Check ConstraintPlanEnv::check(const Task&, const ConstraintSpec& c,
                                                  std::span<const TokenId> answer) const {
  const Plan plan = split_plan(answer);
  Check out;
  auto fail_at = [&](int locus) {
    out.passed = false;
    out.locus = locus;
    out.detail = {pos0_ + std::min(locus, max_length_ + 1)};
  };
  switch (c.kind) {
    case ConstraintKind::kFormat: {
      const int want = c.limit;
      const int have = static_cast<int>(plan.slots.size());
      for (int i = 0; i < std::min(have, want); ++i) {
        if (!value_of(plan.slots[i])) {
          fail_at(i);
          return out;
        }
      }
      if (have != want || !plan.terminated) fail_at(std::min(have, want));
      return out;
    }
    case ConstraintKind::kRequiredValue: {
      const auto p = static_cast<std::size_t>(c.position);
      if (p >= plan.slots.size() || plan.slots[p] != value_token(c.value)) fail_at(c.position);
      return out;
    }
    case ConstraintKind::kNoRepeat: {
      for (std::size_t i = 1; i < plan.slots.size(); ++i) {
        if (plan.slots[i] == plan.slots[i - 1]) {
          fail_at(static_cast<int>(i));
          return out;
        }
      }
      return out;
    }
    case ConstraintKind::kBudget: {
      int cost = 0;
      for (std::size_t i = 0; i < plan.slots.size(); ++i) {
        cost += value_of(plan.slots[i]).value_or(0);
        if (cost > c.limit) {
          fail_at(static_cast<int>(i));
          return out;
        }
      }
      return out;
    }
    default:
      throw std::logic_error("constraint_plan: foreign constraint kind");
  }
}

double ConstraintPlanEnv::reward(const Task&, std::span<const ConstraintResult> results) const {
  if (results.empty()) return 1.0;
  const auto passed = std::count_if(results.begin(), results.end(),
                                    [](const ConstraintResult& r) { return r.passed; });
  const double fraction = static_cast<double>(passed) / static_cast<double>(results.size());
  const double bonus = static_cast<std::size_t>(passed) == results.size() ? 1.0 : 0.0;
  return 0.5 * fraction + 0.5 * bonus;
}

Task ConstraintPlanEnv::make_task(std::string id, Difficulty d,
                                  const std::vector<std::pair<int, int>>& required,
                                  bool no_repeat, std::optional<int> budget) const {
  const int length = plan_length(d);
  Task task;
  task.id = std::move(id);
  task.env = std::string(name());
  task.difficulty = d;
  task.prompt.push_back(len0_ + length - 1);
  task.constraints.push_back({"format", ConstraintClass::kCommonsense, ConstraintKind::kFormat,
                              -1, -1, length, {fb_format_, kDetailSlot}});
  if (no_repeat) {
    task.prompt.push_back(vocab().id("norepeat"));
    task.constraints.push_back({"norepeat", ConstraintClass::kCommonsense,
                                ConstraintKind::kNoRepeat, -1, -1, 0,
                                {fb_repeat_, kDetailSlot}});
  }
  if (budget) {
    if (*budget < 0 || *budget > (config_.num_values - 1) * max_length_) {
      throw GenerationError(fmt::format("constraint_plan: budget {} out of range", *budget));
    }
    task.prompt.push_back(bud0_ + *budget);
    task.constraints.push_back({"budget", ConstraintClass::kHard, ConstraintKind::kBudget, -1,
                                -1, *budget, {fb_budget_, kDetailSlot}});
  }
  auto sorted = required;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto [p, v] = sorted[i];
    if (p < 0 || p >= length || v < 0 || v >= config_.num_values) {
      throw GenerationError(fmt::format("constraint_plan: requirement @{}=v{} out of range", p, v));
    }
    if (i > 0 && sorted[i - 1].first == p) {
      throw GenerationError(fmt::format("constraint_plan: slot {} required twice", p));
    }
    task.prompt.push_back(req0_ + p * config_.num_values + v);
    task.constraints.push_back({fmt::format("req@{}", p), ConstraintClass::kHard,
                                ConstraintKind::kRequiredValue, p, v, 0,
                                {fb_need_, kDetailSlot, value_token(v)}});
  }
  if (!satisfiable(task)) {
    throw GenerationError("constraint_plan: task '" + task.id + "' has no satisfying plan");
  }
  return task;
}

bool ConstraintPlanEnv::satisfiable(const Task& task) const {
  int length = -1;
  for (const auto& c : task.constraints) {
    if (c.kind == ConstraintKind::kFormat) length = c.limit;
  }
  if (length < 0) length = 0;
  std::vector<int> digits(length, 0);
  std::vector<TokenId> answer(length + 1, Vocab::kEos);
  while (true) {
    for (int i = 0; i < length; ++i) answer[i] = value_token(digits[i]);
    const VerifierReport r = verify(task, answer);
    if (r.all_passed()) return true;
    int i = length - 1;
    while (i >= 0 && ++digits[i] == config_.num_values) digits[i--] = 0;
    if (i < 0) return false;
  }
}

std::vector<Task> ConstraintPlanEnv::make_suite(const SuiteSpec& spec) const {
  std::vector<Task> tasks;
  for (Difficulty d : kAllDifficulties) {
    const int length = plan_length(d);
    const int required = d == Difficulty::kEasy     ? config_.easy_required
                         : d == Difficulty::kMedium ? config_.medium_required
                                                    : config_.hard_required;
    const bool no_repeat = d != Difficulty::kEasy;
    const bool has_budget = d == Difficulty::kHard;
    if (spec.count(d) > 0 && (required < 0 || required > length)) {
      throw GenerationError(fmt::format("constraint_plan: {} tier asks for {} required slots "
                                        "in a plan of length {}",
                                        to_string(d), required, length));
    }
    for (int i = 0; i < spec.count(d); ++i) {
      Rng rng(derive_seed({spec.seed, static_cast<std::uint64_t>(StreamTag::kSuite),
                           static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(i)}));
      // A random non-repeating target plan; requirements are drawn from it.
      std::vector<int> target(length);
      for (int p = 0; p < length; ++p) {
        do {
          target[p] = static_cast<int>(rng.below(config_.num_values));
        } while (p > 0 && target[p] == target[p - 1]);
      }
      std::vector<int> slots(length);
      std::iota(slots.begin(), slots.end(), 0);
      for (int p = 0; p < required; ++p) {
        std::swap(slots[p], slots[p + rng.below(length - p)]);
      }
      std::vector<std::pair<int, int>> req;
      for (int p = 0; p < required; ++p) req.emplace_back(slots[p], target[slots[p]]);

      std::optional<int> budget;
      if (has_budget) {
        // Cheapest completion of the requirements, plus slack.
        Task probe = make_task("probe", d, req, no_repeat, std::nullopt);
        int cheapest = (config_.num_values - 1) * length;
        std::vector<int> digits(length, 0);
        std::vector<TokenId> answer(length + 1, Vocab::kEos);
        while (true) {
          for (int p = 0; p < length; ++p) answer[p] = value_token(digits[p]);
          if (verify(probe, answer).all_passed()) {
            cheapest = std::min(cheapest, std::accumulate(digits.begin(), digits.end(), 0));
          }
          int p = length - 1;
          while (p >= 0 && ++digits[p] == config_.num_values) digits[p--] = 0;
          if (p < 0) break;
        }
        const int slack = static_cast<int>(rng.below(config_.max_budget_slack + 1));
        budget = std::min(cheapest + slack, (config_.num_values - 1) * max_length_);
      }
      tasks.push_back(make_task(fmt::format("cp-{}-{}-{:03d}", spec.seed, to_string(d), i), d,
                                req, no_repeat, budget));
    }
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// GrammarProof

std::shared_ptr<const Vocab> GrammarProofEnv::build_vocab(const GrammarProofConfig& c) {
  Vocab::Builder b;
  b.add("inc", TokenClass::kContent);
  b.add("dec", TokenClass::kContent);
  b.add("dbl", TokenClass::kContent);
  b.add("qed", TokenClass::kContent);
  for (int n = 0; n <= c.max_number; ++n) b.add(fmt::format("n{}", n), TokenClass::kPrompt);
  for (int p = 0; p < c.max_steps + 3; ++p) b.add(fmt::format("@{}", p), TokenClass::kPosition, p);
  b.add("start", TokenClass::kPrompt);
  b.add("goal", TokenClass::kPrompt);
  b.add("out_of_range", TokenClass::kPrompt);
  b.add("fb:syntax", TokenClass::kFeedbackKind);
  b.add("fb:wrong", TokenClass::kFeedbackKind);
  return std::make_shared<const Vocab>(std::move(b).build());
}

GrammarProofEnv::GrammarProofEnv(GrammarProofConfig config)
    : Environment(build_vocab(config)), config_(config) {
  if (config_.max_number < 1 || config_.max_steps < 1) {
    throw std::invalid_argument("grammar_proof: max_number and max_steps must be >= 1");
  }
  const Vocab& v = vocab();
  inc_ = v.id("inc");
  dec_ = v.id("dec");
  dbl_ = v.id("dbl");
  qed_ = v.id("qed");
  num0_ = v.id("n0");
  pos0_ = v.id("@0");
  start_kw_ = v.id("start");
  goal_kw_ = v.id("goal");
  fb_syntax_ = v.id("fb:syntax");
  fb_wrong_ = v.id("fb:wrong");
  fb_range_ = v.id("out_of_range");
}

TokenId GrammarProofEnv::rule_token(Rule r) const {
  switch (r) {
    case Rule::kInc: return inc_;
    case Rule::kDec: return dec_;
    case Rule::kDouble: return dbl_;
  }
  return inc_;
}

std::optional<int> GrammarProofEnv::apply(TokenId rule, int state) const {
  int next = state;
  if (rule == inc_) next = state + 1;
  else if (rule == dec_) next = state - 1;
  else if (rule == dbl_) next = state * 2;
  else return std::nullopt;
  if (next < 0 || next > config_.max_number) return std::nullopt;
  return next;
}

std::optional<int> GrammarProofEnv::distance(int start, int goal) const {
  std::vector<int> dist(config_.max_number + 1, -1);
  std::deque<int> queue{start};
  dist[start] = 0;
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    if (s == goal) return dist[s];
    for (TokenId r : {inc_, dec_, dbl_}) {
      if (auto n = apply(r, s); n && dist[*n] < 0) {
        dist[*n] = dist[s] + 1;
        queue.push_back(*n);
      }
    }
  }
  return std::nullopt;
}

GrammarProofEnv::Check GrammarProofEnv::check(const Task&, const ConstraintSpec& c,
                                              std::span<const TokenId> answer) const {
  const Plan body = split_plan(answer);
  const int n = static_cast<int>(body.slots.size());
  Check out;
  auto pos = [&](int p) { return pos0_ + std::min(p, config_.max_steps + 2); };

  // First malformed position, or -1 for a well-formed proof.
  int bad = -1;
  for (int i = 0; i + 1 < n && bad < 0; ++i) {
    const TokenId t = body.slots[i];
    if ((t != inc_ && t != dec_ && t != dbl_) || i >= c.limit) bad = i;
  }
  if (bad < 0 && (n < 2 || body.slots[n - 1] != qed_ || !body.terminated)) bad = std::max(n - 1, 0);
  if (c.kind == ConstraintKind::kProofFormat) {
    if (bad >= 0) {
      out.passed = false;
      out.locus = bad;
      out.detail = {pos(bad)};
    }
    return out;
  }
  if (c.kind != ConstraintKind::kProofGoal) {
    throw std::logic_error("grammar_proof: foreign constraint kind");
  }
  int state = c.value;
  for (int i = 0; i + 1 < n; ++i) {
    auto next = apply(body.slots[i], state);
    if (!next) {
      out.passed = false;
      out.locus = i;
      out.detail = {pos(i), fb_range_};
      return out;
    }
    state = *next;
  }
  if (bad >= 0 || state != c.limit) {
    out.passed = false;
    if (bad < 0) {
      out.locus = std::max(n - 2, 0);
      out.detail = {pos(*out.locus), num0_ + state};
    }
  }
  return out;
}

double GrammarProofEnv::reward(const Task&, std::span<const ConstraintResult> results) const {
  bool format_ok = true;
  bool all_ok = true;
  for (const auto& r : results) {
    if (r.cls == ConstraintClass::kCommonsense && !r.passed) format_ok = false;
    if (!r.passed) all_ok = false;
  }
  if (!format_ok) return -1.0;
  return all_ok ? 1.0 : 0.0;
}

Task GrammarProofEnv::make_task(std::string id, Difficulty d, int start, int goal) const {
  if (start < 0 || start > config_.max_number || goal < 0 || goal > config_.max_number) {
    throw GenerationError(fmt::format("grammar_proof: numbers {} -> {} out of range", start, goal));
  }
  Task task;
  task.id = std::move(id);
  task.env = std::string(name());
  task.difficulty = d;
  task.prompt = {start_kw_, num0_ + start, goal_kw_, num0_ + goal};
  task.constraints.push_back({"syntax", ConstraintClass::kCommonsense,
                              ConstraintKind::kProofFormat, -1, -1, config_.max_steps,
                              {fb_syntax_, kDetailSlot}});
  task.constraints.push_back({"goal", ConstraintClass::kHard, ConstraintKind::kProofGoal, -1,
                              start, goal, {fb_wrong_, kDetailSlot}});
  if (!satisfiable(task)) {
    throw GenerationError("grammar_proof: task '" + task.id + "' has no proof within " +
                          std::to_string(config_.max_steps) + " steps");
  }
  return task;
}

bool GrammarProofEnv::satisfiable(const Task& task) const {
  int start = 0, goal = 0, steps = 0;
  for (const auto& c : task.constraints) {
    if (c.kind == ConstraintKind::kProofGoal) {
      start = c.value;
      goal = c.limit;
    } else if (c.kind == ConstraintKind::kProofFormat) {
      steps = c.limit;
    }
  }
  // Layered reachability: a proof needs between 1 and `steps` rule applications.
  std::vector<char> reach(config_.max_number + 1, 0);
  reach[start] = 1;
  for (int k = 1; k <= steps; ++k) {
    std::vector<char> next(reach.size(), 0);
    for (int s = 0; s <= config_.max_number; ++s) {
      if (!reach[s]) continue;
      for (TokenId r : {inc_, dec_, dbl_}) {
        if (auto n = apply(r, s)) next[*n] = 1;
      }
    }
    if (next[goal]) return true;
    reach = std::move(next);
  }
  return false;
}

std::vector<Task> GrammarProofEnv::make_suite(const SuiteSpec& spec) const {
  std::vector<Task> tasks;
  for (Difficulty d : kAllDifficulties) {
    const int lo = d == Difficulty::kEasy     ? 1
                   : d == Difficulty::kMedium ? config_.easy_max_distance + 1
                                              : config_.medium_max_distance + 1;
    const int hi = d == Difficulty::kEasy     ? config_.easy_max_distance
                   : d == Difficulty::kMedium ? config_.medium_max_distance
                                              : config_.hard_max_distance;
    if (spec.count(d) > 0 && (hi > config_.max_steps || lo > hi)) {
      throw GenerationError(fmt::format("grammar_proof: {} tier needs proofs of {}..{} steps "
                                        "but max_steps is {}",
                                        to_string(d), lo, hi, config_.max_steps));
    }
    std::vector<std::pair<int, int>> pool;
    for (int s = 0; s <= config_.max_number; ++s) {
      for (int g = 0; g <= config_.max_number; ++g) {
        if (auto dist = distance(s, g); dist && *dist >= lo && *dist <= hi) pool.emplace_back(s, g);
      }
    }
    if (spec.count(d) > 0 && pool.empty()) {
      throw GenerationError(fmt::format("grammar_proof: no {} tasks exist", to_string(d)));
    }
    for (int i = 0; i < spec.count(d); ++i) {
      Rng rng(derive_seed({spec.seed, static_cast<std::uint64_t>(StreamTag::kSuite),
                           static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(i)}));
      const auto [s, g] = pool[rng.below(pool.size())];
      tasks.push_back(make_task(fmt::format("gp-{}-{}-{:03d}", spec.seed, to_string(d), i), d, s, g));
    }
  }
  return tasks;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "constraint_plan") return std::make_unique<ConstraintPlanEnv>();
  if (name == "grammar_proof") return std::make_unique<GrammarProofEnv>();
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
  }
  return "?";
}

Difficulty difficulty_from_string(std::string_view s) {
  for (Difficulty d : kAllDifficulties) {
    if (to_string(d) == s) return d;
  }
  throw std::invalid_argument("unknown difficulty '" + std::string(s) + "'");
}

std::string_view to_string(ConstraintClass c) {
  return c == ConstraintClass::kHard ? "hard" : "commonsense";
}

ConstraintClass constraint_class_from_string(std::string_view s) {
  if (s == "hard") return ConstraintClass::kHard;
  if (s == "commonsense") return ConstraintClass::kCommonsense;
  throw std::invalid_argument("unknown constraint class '" + std::string(s) + "'");
}

namespace {
constexpr std::array<std::pair<ConstraintKind, std::string_view>, 6> kKindNames{{
    {ConstraintKind::kFormat, "format"},
    {ConstraintKind::kRequiredValue, "required_value"},
    {ConstraintKind::kNoRepeat, "no_repeat"},
    {ConstraintKind::kBudget, "budget"},
    {ConstraintKind::kProofFormat, "proof_format"},
    {ConstraintKind::kProofGoal, "proof_goal"},
}};
}  // namespace

std::string_view to_string(ConstraintKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

ConstraintKind constraint_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  throw std::invalid_argument("unknown constraint kind '" + std::string(s) + "'");
}

}  // namespace fbos::envs
