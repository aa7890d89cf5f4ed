#include "fbos/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace fbos::config {
namespace {

class Reader {
 public:
  Reader(YAML::Node node, std::string source, std::string where)
      : node_(std::move(node)), source_(std::move(source)), where_(std::move(where)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, fmt::format("{} must be a mapping", where_));
  }

  bool has(const std::string& key) const { return static_cast<bool>(lookup(key)); }

  // Undefined (falsy) node when the key is absent.
  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return lookup(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    YAML::Node n = raw(key);
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, fmt::format("{}.{}: invalid value '{}'", where_, key, scalar(n)));
    }
  }

  // String-valued enums.
  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    std::string s;
    YAML::Node n = raw(key);
    if (!n) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      fail(n, fmt::format("{}.{}: {}", where_, key, e.what()));
    }
  }

  Reader child(const std::string& key) {
    return Reader(raw(key), source_, where_.empty() ? key : where_ + "." + key);
  }

  // Rejects keys that were never requested.
  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        fail(kv.first, fmt::format("unknown key '{}'{}", key,
                                   where_.empty() ? "" : fmt::format(" in {}", where_)));
      }
    }
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const YAML::Mark m = n.Mark();
    throw ConfigError(source_, m.line >= 0 ? m.line + 1 : 0, m.column >= 0 ? m.column + 1 : 0, msg);
  }

  const YAML::Node& node() const { return node_; }
  const std::string& where() const { return where_; }

 private:
  YAML::Node lookup(const std::string& key) const {
    static const YAML::Node empty(YAML::NodeType::Map);
    const YAML::Node& map = node_ && node_.IsMap() ? node_ : empty;
    return map[key];
  }

  static std::string scalar(const YAML::Node& n) { return n.IsScalar() ? n.Scalar() : "<non-scalar>"; }

  YAML::Node node_;
  std::string source_;
  std::string where_;
  std::set<std::string> seen_;
};

policy::PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "tabular_ngram") return policy::PolicyKind::kTabularNgram;
  if (s == "linear_bag") return policy::PolicyKind::kLinearBag;
  throw std::invalid_argument(fmt::format("unknown policy kind '{}'", s));
}

std::string_view to_string(objectives::Reweight r) {
  return r == objectives::Reweight::kIdentity ? "identity" : "ratio_over_ratio_plus_c";
}

objectives::Reweight reweight_from_string(std::string_view s) {
  if (s == "identity") return objectives::Reweight::kIdentity;
  if (s == "ratio_over_ratio_plus_c") return objectives::Reweight::kRatioOverRatioPlusC;
  throw std::invalid_argument(fmt::format("unknown reweight '{}'", s));
}

void read_suite(Reader r, envs::SuiteSpec& s) {
  r.get("easy", s.easy);
  r.get("medium", s.medium);
  r.get("hard", s.hard);
  r.get("seed", s.seed);
  r.finish();
  if (s.easy < 0 || s.medium < 0 || s.hard < 0 || s.easy + s.medium + s.hard == 0) {
    r.fail(r.node(), fmt::format("{}: counts must be >= 0 with at least one task", r.where()));
  }
}

void read_train(Reader r, trainer::TrainConfig& t) {
  r.get("n", t.n);
  r.get("k", t.k);
  r.get("steps", t.steps);
  r.get("tasks_per_step", t.tasks_per_step);
  r.get("eps_adv", t.eps_adv);
  r.get("extra_update_reuse_advantages", t.extra_update_reuse_advantages);
  {
    Reader c = r.child("clip");
    c.get("epsilon", t.clip.epsilon);
    c.get("reweight_c", t.clip.reweight_c);
    c.get_enum("reweight", t.clip.reweight, reweight_from_string);
    c.finish();
  }
  {
    Reader o = r.child("optimizer");
    o.get_enum("kind", t.optimizer.kind, trainer::optimizer_kind_from_string);
    o.get("learning_rate", t.optimizer.learning_rate);
    o.get("beta1", t.optimizer.beta1);
    o.get("beta2", t.optimizer.beta2);
    o.get("epsilon", t.optimizer.epsilon);
    o.finish();
  }
  {
    Reader p = r.child("policy");
    p.get_enum("kind", t.policy.kind, policy_kind_from_string);
    p.get("context_order", t.policy.context_order);
    p.get("max_positions", t.policy.max_positions);
    p.get("temperature", t.policy.temperature);
    p.finish();
  }
  {
    Reader s = r.child("sampling");
    s.get("max_answer_len", t.sampling.max_answer_len);
    s.get("max_feedback_len", t.sampling.max_feedback_len);
    s.get("max_prompt_len", t.sampling.max_prompt_len);
    s.finish();
  }
  r.finish();
  // max_answer_len 0 defers to the environment; everything else must
  // already be valid.
  trainer::TrainConfig probe = t;
  if (probe.sampling.max_answer_len == 0) probe.sampling.max_answer_len = 1;
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(r.node(), fmt::format("{}: {}", r.where(), e.what()));
  }
  if (t.sampling.max_answer_len < 0) r.fail(r.node(), "max_answer_len must be >= 0");
  if (t.policy.temperature <= 0.0) r.fail(r.node(), "policy.temperature must be > 0");
}

void read_environment(Reader r, EnvironmentSpec& e) {
  r.get("name", e.name);
  if (e.name == "constraint_plan") {
    auto& c = e.constraint_plan;
    r.get("num_values", c.num_values);
    r.get("easy_length", c.easy_length);
    r.get("medium_length", c.medium_length);
    r.get("hard_length", c.hard_length);
    r.get("easy_required", c.easy_required);
    r.get("medium_required", c.medium_required);
    r.get("hard_required", c.hard_required);
    r.get("max_budget_slack", c.max_budget_slack);
  } else if (e.name == "grammar_proof") {
    auto& g = e.grammar_proof;
    r.get("max_number", g.max_number);
    r.get("max_steps", g.max_steps);
    r.get("easy_max_distance", g.easy_max_distance);
    r.get("medium_max_distance", g.medium_max_distance);
    r.get("hard_max_distance", g.hard_max_distance);
  } else {
    r.fail(r.node()["name"] ? r.node()["name"] : r.node(),
           fmt::format("unknown environment '{}'", e.name));
  }
  r.finish();
  try {
    make_environment(e);
  } catch (const std::invalid_argument& ex) {
    r.fail(r.node(), fmt::format("environment: {}", ex.what()));
  }
}

std::string num(double d) { return fmt::format("{}", d); }

void emit_train(YAML::Emitter& out, const trainer::TrainConfig& t) {
  out << YAML::BeginMap;
  out << YAML::Key << "n" << YAML::Value << t.n;
  out << YAML::Key << "k" << YAML::Value << t.k;
  out << YAML::Key << "steps" << YAML::Value << t.steps;
  out << YAML::Key << "tasks_per_step" << YAML::Value << t.tasks_per_step;
  out << YAML::Key << "eps_adv" << YAML::Value << num(t.eps_adv);
  out << YAML::Key << "extra_update_reuse_advantages" << YAML::Value
      << t.extra_update_reuse_advantages;
  out << YAML::Key << "clip" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epsilon" << YAML::Value << num(t.clip.epsilon);
  out << YAML::Key << "reweight_c" << YAML::Value << num(t.clip.reweight_c);
  out << YAML::Key << "reweight" << YAML::Value << std::string(to_string(t.clip.reweight));
  out << YAML::EndMap;
  out << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(trainer::to_string(t.optimizer.kind));
  out << YAML::Key << "learning_rate" << YAML::Value << num(t.optimizer.learning_rate);
  out << YAML::Key << "beta1" << YAML::Value << num(t.optimizer.beta1);
  out << YAML::Key << "beta2" << YAML::Value << num(t.optimizer.beta2);
  out << YAML::Key << "epsilon" << YAML::Value << num(t.optimizer.epsilon);
  out << YAML::EndMap;
  out << YAML::Key << "policy" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(policy::to_string(t.policy.kind));
  out << YAML::Key << "context_order" << YAML::Value << t.policy.context_order;
  out << YAML::Key << "max_positions" << YAML::Value << t.policy.max_positions;
  out << YAML::Key << "temperature" << YAML::Value << num(t.policy.temperature);
  out << YAML::EndMap;
  out << YAML::Key << "sampling" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "max_answer_len" << YAML::Value << t.sampling.max_answer_len;
  out << YAML::Key << "max_feedback_len" << YAML::Value << t.sampling.max_feedback_len;
  out << YAML::Key << "max_prompt_len" << YAML::Value << t.sampling.max_prompt_len;
  out << YAML::EndMap;
  out << YAML::EndMap;
}

void emit_suite(YAML::Emitter& out, const envs::SuiteSpec& s) {
  out << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "easy" << YAML::Value << s.easy;
  out << YAML::Key << "medium" << YAML::Value << s.medium;
  out << YAML::Key << "hard" << YAML::Value << s.hard;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::EndMap;
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, int column, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("{}:{}:{}: {}", source, line, column, message)
                                  : fmt::format("{}: {}", source, message)),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

std::unique_ptr<envs::Environment> make_environment(const EnvironmentSpec& spec) {
  if (spec.name == "constraint_plan") {
    return std::make_unique<envs::ConstraintPlanEnv>(spec.constraint_plan);
  }
  if (spec.name == "grammar_proof") return std::make_unique<envs::GrammarProofEnv>(spec.grammar_proof);
  throw std::invalid_argument(fmt::format("unknown environment '{}'", spec.name));
}

trainer::TrainConfig ExperimentConfig::train_config(trainer::Method m) const {
  auto it = method_overrides.find(m);
  trainer::TrainConfig t = it == method_overrides.end() ? train : it->second;
  t.method = m;
  t.seed = seed;
  t.repeats = repeats;
  return t;
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (methods.empty()) bad("at least one method is required");
  if (repeats < 1) bad("repeats must be >= 1");
  if (eval.every < 1) bad("eval.every must be >= 1");
  if (eval.samples_per_task < 1) bad("eval.samples_per_task must be >= 1");
  if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  std::set<trainer::Method> uniq(methods.begin(), methods.end());
  if (uniq.size() != methods.size()) bad("methods must not repeat");
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  const std::string src(source);
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(src, e.mark.line + 1, e.mark.column + 1, e.msg);
  }
  ExperimentConfig cfg;
  Reader r(root, src, "");
  r.get("name", cfg.name);
  r.get("seed", cfg.seed);
  r.get("output_dir", cfg.output_dir);
  read_environment(r.child("environment"), cfg.environment);
  if (r.has("train_suite")) read_suite(r.child("train_suite"), cfg.train_suite);
  if (r.has("validation_suite")) read_suite(r.child("validation_suite"), cfg.validation_suite);
  if (YAML::Node ms = r.raw("methods")) {
    if (!ms.IsSequence()) r.fail(ms, "methods must be a list");
    cfg.methods.clear();
    for (const auto& m : ms) {
      try {
        cfg.methods.push_back(trainer::method_from_string(m.as<std::string>()));
      } catch (const std::exception& e) {
        r.fail(m, e.what());
      }
    }
  }
  r.get("repeats", cfg.repeats);
  {
    Reader e = r.child("eval");
    e.get("every", cfg.eval.every);
    e.get("samples_per_task", cfg.eval.samples_per_task);
    e.finish();
  }
  r.get("checkpoint_every", cfg.checkpoint_every);
  r.get("dump_rollouts", cfg.dump_rollouts);
  read_train(r.child("train"), cfg.train);
  if (YAML::Node ov = r.raw("method_overrides")) {
    if (!ov.IsMap()) r.fail(ov, "method_overrides must be a mapping");
    for (const auto& kv : ov) {
      trainer::Method m{};
      try {
        m = trainer::method_from_string(kv.first.as<std::string>());
      } catch (const std::exception& e) {
        r.fail(kv.first, e.what());
      }
      trainer::TrainConfig t = cfg.train;
      read_train(Reader(kv.second, src, "method_overrides." + kv.first.as<std::string>()), t);
      cfg.method_overrides[m] = t;
    }
  }
  {
    Reader g = r.child("gradcheck");
    g.get("instances", cfg.gradcheck.instances);
    g.get("seed", cfg.gradcheck.seed);
    g.get("step", cfg.gradcheck.step);
    g.get("threshold", cfg.gradcheck.threshold);
    g.get("max_params", cfg.gradcheck.instance.max_params);
    g.get("max_rollouts", cfg.gradcheck.instance.max_rollouts);
    g.get("max_answer_len", cfg.gradcheck.instance.max_answer_len);
    g.finish();
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(src, 0, 0, e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string dump_config(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
  out << YAML::Key << "environment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.environment.name;
  if (cfg.environment.name == "constraint_plan") {
    const auto& c = cfg.environment.constraint_plan;
    out << YAML::Key << "num_values" << YAML::Value << c.num_values;
    out << YAML::Key << "easy_length" << YAML::Value << c.easy_length;
    out << YAML::Key << "medium_length" << YAML::Value << c.medium_length;
    out << YAML::Key << "hard_length" << YAML::Value << c.hard_length;
    out << YAML::Key << "easy_required" << YAML::Value << c.easy_required;
    out << YAML::Key << "medium_required" << YAML::Value << c.medium_required;
    out << YAML::Key << "hard_required" << YAML::Value << c.hard_required;
    out << YAML::Key << "max_budget_slack" << YAML::Value << c.max_budget_slack;
  } else {
    const auto& g = cfg.environment.grammar_proof;
    out << YAML::Key << "max_number" << YAML::Value << g.max_number;
    out << YAML::Key << "max_steps" << YAML::Value << g.max_steps;
    out << YAML::Key << "easy_max_distance" << YAML::Value << g.easy_max_distance;
    out << YAML::Key << "medium_max_distance" << YAML::Value << g.medium_max_distance;
    out << YAML::Key << "hard_max_distance" << YAML::Value << g.hard_max_distance;
  }
  out << YAML::EndMap;
  out << YAML::Key << "train_suite" << YAML::Value;
  emit_suite(out, cfg.train_suite);
  out << YAML::Key << "validation_suite" << YAML::Value;
  emit_suite(out, cfg.validation_suite);
  out << YAML::Key << "methods" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto m : cfg.methods) out << std::string(trainer::to_string(m));
  out << YAML::EndSeq;
  out << YAML::Key << "repeats" << YAML::Value << cfg.repeats;
  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "every" << YAML::Value << cfg.eval.every;
  out << YAML::Key << "samples_per_task" << YAML::Value << cfg.eval.samples_per_task;
  out << YAML::EndMap;
  out << YAML::Key << "checkpoint_every" << YAML::Value << cfg.checkpoint_every;
  out << YAML::Key << "dump_rollouts" << YAML::Value << cfg.dump_rollouts;
  out << YAML::Key << "train" << YAML::Value;
  emit_train(out, cfg.train);
  if (!cfg.method_overrides.empty()) {
    out << YAML::Key << "method_overrides" << YAML::Value << YAML::BeginMap;
    for (const auto& [m, t] : cfg.method_overrides) {
      out << YAML::Key << std::string(trainer::to_string(m)) << YAML::Value;
      emit_train(out, t);
    }
    out << YAML::EndMap;
  }
  out << YAML::Key << "gradcheck" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "instances" << YAML::Value << cfg.gradcheck.instances;
  out << YAML::Key << "seed" << YAML::Value << cfg.gradcheck.seed;
  out << YAML::Key << "step" << YAML::Value << num(cfg.gradcheck.step);
  out << YAML::Key << "threshold" << YAML::Value << num(cfg.gradcheck.threshold);
  out << YAML::Key << "max_params" << YAML::Value << cfg.gradcheck.instance.max_params;
  out << YAML::Key << "max_rollouts" << YAML::Value << cfg.gradcheck.instance.max_rollouts;
  out << YAML::Key << "max_answer_len" << YAML::Value << cfg.gradcheck.instance.max_answer_len;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace fbos::config
