#ifndef FBOS_POLICY_HPP_
#define FBOS_POLICY_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fbos/vocab.hpp"

namespace fbos::policy {

enum class PolicyKind : std::uint8_t { kTabularNgram = 0, kLinearBag = 1 };

// Probabilities are clamped here before taking logs.
inline constexpr double kProbFloor = 1e-30;

// What the policy conditions on: the conditioning prompt (q or a FAP) and
// the answer tokens generated so far.
struct Context {
  std::span<const TokenId> prompt;
  std::span<const TokenId> prefix;
};

struct LinearBagSpec {
  int max_positions = 8;  // answer positions with their own feature rows
};

struct ActiveFeature {
  std::int32_t row;
  double value;
};

struct GradEntry {
  std::size_t index;
  double value;
};

// Sparse d log pi(token | context) / d theta.
struct LogProbGradient {
  std::vector<GradEntry> entries;
  double at(std::size_t index) const;
};

// Softmax state of one (context, token) evaluation, reusable for the
// gradient without recomputing the distribution.
struct TokenEval {
  std::vector<ActiveFeature> features;
  std::vector<double> probs;
  TokenId token = 0;
  double log_prob = 0.0;
  bool clamped = false;
};

// Live parameters theta of an autoregressive softmax policy. Both kinds are
// linear in their weights: logits(ctx) = sum_f x_f(ctx) * W[f, :] / T, with
// one weight row per context feature and one column per vocabulary token.
//
// Tabular n-gram: a single one-hot feature selects the row of the last
// `order` tokens of prompt+prefix (left padded with a begin marker).
//
// Linear bag: binary features of the conditioning prompt and prefix:
//   bias(t)            answer position t
//   prompt(tok, t)     every distinct token of the base prompt q, at position t
//   prev(tok)          last generated token (or begin marker)
//   prior(tok)         token of the FAP's previous answer at position t
//   feedback_local(tok)  tokens of feedback entries whose locus is t
//   feedback_bag(tok)    every distinct feedback token
class PolicyParams {
 public:
  static PolicyParams tabular(std::shared_ptr<const Vocab> vocab, int order,
                              std::vector<std::vector<TokenId>> contexts = {});
  static PolicyParams linear_bag(std::shared_ptr<const Vocab> vocab,
                                 LinearBagSpec spec = {});

  PolicyKind kind() const { return kind_; }
  const Vocab& vocab() const { return *vocab_; }
  const std::shared_ptr<const Vocab>& vocab_ptr() const { return vocab_; }
  int context_order() const { return order_; }
  const LinearBagSpec& linear_spec() const { return linear_; }
  // Registered tabular contexts; empty when every context has its own row.
  const std::vector<std::uint64_t>& registered_keys() const { return keys_; }

  int num_rows() const { return rows_; }
  std::size_t num_params() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }

  double temperature() const { return temperature_; }
  void set_temperature(double t);

  void active_features(const Context& ctx, std::vector<ActiveFeature>& out) const;

  // Fills probs (size |V|) with the next-token distribution.
  void distribution(const Context& ctx, std::span<double> probs) const;

  double log_prob(const Context& ctx, TokenId token) const;
  LogProbGradient log_prob_grad(const Context& ctx, TokenId token) const;

  void evaluate(const Context& ctx, TokenId token, TokenEval& out) const;
  // grad += scale * d log pi(token | ctx) / d theta at the evaluated point.
  void accumulate_grad(const TokenEval& eval, double scale, std::span<double> grad) const;

  // grad += scale * d log pi(token | ctx) / d theta. Returns log pi.
  double accumulate_log_prob_grad(const Context& ctx, TokenId token, double scale,
                                  std::span<double> grad) const;

  double entropy(const Context& ctx) const;

  bool all_finite() const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);

 private:
  friend class CheckpointAccess;
  PolicyParams() = default;

  void init_tabular_rows();
  std::int32_t tabular_row(const Context& ctx) const;
  void linear_features(const Context& ctx, std::vector<ActiveFeature>& out) const;
  // log-sum-exp of the scaled logits; probs receives softmax.
  double softmax(const Context& ctx, std::span<double> probs,
                 std::vector<ActiveFeature>& feats) const;

  PolicyKind kind_ = PolicyKind::kTabularNgram;
  std::shared_ptr<const Vocab> vocab_;
  int order_ = 0;
  LinearBagSpec linear_;
  std::vector<std::uint64_t> keys_;  // sorted; default row is keys_.size()
  int rows_ = 0;
  double temperature_ = 1.0;
  std::vector<double> weights_;  // row-major [row][token]
};

// Frozen behavior parameters theta_old. Cheap to copy and safe to share
// across sampling threads.
class PolicySnapshot {
 public:
  PolicySnapshot(const PolicyParams& params, int step_id)
      : params_(std::make_shared<const PolicyParams>(params)), step_id_(step_id) {}

  const PolicyParams& params() const { return *params_; }
  int step_id() const { return step_id_; }

 private:
  std::shared_ptr<const PolicyParams> params_;
  int step_id_;
};

std::string_view to_string(PolicyKind kind);

}  // namespace fbos::policy

#endif  // FBOS_POLICY_HPP_
