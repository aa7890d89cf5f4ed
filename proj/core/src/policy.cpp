#include "fbos/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbos/fap_layout.hpp"

namespace fbos::policy {
namespace {

constexpr std::uint64_t kMaxEnumeratedRows = std::uint64_t{1} << 22;

const double kLogFloor = std::log(kProbFloor);

// Tabular key of the last `order` tokens of prompt+prefix, base |V|+1 with
// |V| as the begin-of-sequence pad.
std::uint64_t tabular_key(const Context& ctx, int order, int vocab_size) {
  const std::uint64_t base = static_cast<std::uint64_t>(vocab_size) + 1;
  std::uint64_t key = 0;
  const std::size_t total = ctx.prompt.size() + ctx.prefix.size();
  for (int i = order; i >= 1; --i) {
    std::uint64_t digit = static_cast<std::uint64_t>(vocab_size);
    if (static_cast<std::size_t>(i) <= total) {
      const std::size_t pos = total - static_cast<std::size_t>(i);
      digit = static_cast<std::uint64_t>(pos < ctx.prompt.size()
                                             ? ctx.prompt[pos]
                                             : ctx.prefix[pos - ctx.prompt.size()]);
    }
    key = key * base + digit;
  }
  return key;
}

void push_unique(std::vector<TokenId>& bag, TokenId tok) {
  if (std::find(bag.begin(), bag.end(), tok) == bag.end()) bag.push_back(tok);
}

thread_local std::vector<double> tl_probs;
thread_local std::vector<ActiveFeature> tl_feats;

}  // namespace

double LogProbGradient::at(std::size_t index) const {
  double sum = 0.0;
  for (const auto& e : entries) {
    if (e.index == index) sum += e.value;
  }
  return sum;
}

PolicyParams PolicyParams::tabular(std::shared_ptr<const Vocab> vocab, int order,
                                   std::vector<std::vector<TokenId>> contexts) {
  if (!vocab) throw std::invalid_argument("policy: null vocab");
  if (order < 1) throw std::invalid_argument("policy: tabular context order must be >= 1");
  PolicyParams p;
  p.kind_ = PolicyKind::kTabularNgram;
  p.vocab_ = std::move(vocab);
  p.order_ = order;
  for (const auto& c : contexts) {
    if (static_cast<int>(c.size()) != order) {
      throw std::invalid_argument("policy: registered context length != order");
    }
    for (TokenId t : c) p.vocab_->check(t);
    const Context ctx{c, {}};
    p.keys_.push_back(tabular_key(ctx, order, p.vocab_->size()));
  }
  std::sort(p.keys_.begin(), p.keys_.end());
  p.keys_.erase(std::unique(p.keys_.begin(), p.keys_.end()), p.keys_.end());
  p.init_tabular_rows();
  return p;
}

void PolicyParams::init_tabular_rows() {
  if (keys_.empty()) {
    const std::uint64_t base = static_cast<std::uint64_t>(vocab_->size()) + 1;
    std::uint64_t rows = 1;
    for (int i = 0; i < order_; ++i) {
      rows *= base;
      if (rows > kMaxEnumeratedRows) {
        throw std::invalid_argument(
            "policy: context space too large to enumerate; register contexts explicitly");
      }
    }
    rows_ = static_cast<int>(rows);
  } else {
    rows_ = static_cast<int>(keys_.size()) + 1;
  }
  weights_.assign(static_cast<std::size_t>(rows_) * vocab_->size(), 0.0);
}

PolicyParams PolicyParams::linear_bag(std::shared_ptr<const Vocab> vocab, LinearBagSpec spec) {
  if (!vocab) throw std::invalid_argument("policy: null vocab");
  if (spec.max_positions < 1) throw std::invalid_argument("policy: max_positions must be >= 1");
  PolicyParams p;
  p.kind_ = PolicyKind::kLinearBag;
  p.vocab_ = std::move(vocab);
  p.linear_ = spec;
  const int v = p.vocab_->size();
  const int pos = spec.max_positions;
  p.rows_ = pos + v * pos + (v + 1) + (v + 1) + v + v;
  p.weights_.assign(static_cast<std::size_t>(p.rows_) * v, 0.0);
  return p;
}

void PolicyParams::set_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("policy: temperature must be > 0");
  temperature_ = t;
}

std::int32_t PolicyParams::tabular_row(const Context& ctx) const {
  const std::uint64_t key = tabular_key(ctx, order_, vocab_->size());
  if (keys_.empty()) return static_cast<std::int32_t>(key);
  auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it != keys_.end() && *it == key) return static_cast<std::int32_t>(it - keys_.begin());
  return static_cast<std::int32_t>(keys_.size());
}

void PolicyParams::linear_features(const Context& ctx, std::vector<ActiveFeature>& out) const {
  const int v = vocab_->size();
  const int npos = linear_.max_positions;
  const int t = std::min(static_cast<int>(ctx.prefix.size()), npos - 1);
  const int off_prompt = npos;
  const int off_prev = off_prompt + v * npos;
  const int off_prior = off_prev + v + 1;
  const int off_fb_local = off_prior + v + 1;
  const int off_fb_bag = off_fb_local + v;

  out.push_back({t, 1.0});

  const FapSegments seg = split_fap(ctx.prompt);
  std::vector<TokenId> bag;
  bag.reserve(seg.base.size());
  for (TokenId tok : seg.base) push_unique(bag, tok);
  std::sort(bag.begin(), bag.end());
  for (TokenId tok : bag) out.push_back({off_prompt + tok * npos + t, 1.0});

  const int prev = ctx.prefix.empty() ? v : ctx.prefix.back();
  out.push_back({off_prev + prev, 1.0});

  if (!seg.is_fap) return;

  const std::size_t at = ctx.prefix.size();
  const int prior = at < seg.answer.size() ? seg.answer[at] : v;
  out.push_back({off_prior + prior, 1.0});

  std::vector<TokenId> local;
  std::vector<TokenId> global;
  for (const FeedbackEntry& e : split_feedback(seg.feedback, *vocab_)) {
    for (TokenId tok : e.tokens) {
      push_unique(global, tok);
      if (e.locus == static_cast<int>(at)) push_unique(local, tok);
    }
  }
  std::sort(local.begin(), local.end());
  std::sort(global.begin(), global.end());
  for (TokenId tok : local) out.push_back({off_fb_local + tok, 1.0});
  for (TokenId tok : global) out.push_back({off_fb_bag + tok, 1.0});
}

void PolicyParams::active_features(const Context& ctx, std::vector<ActiveFeature>& out) const {
  out.clear();
  for (TokenId t : ctx.prompt) vocab_->check(t);
  for (TokenId t : ctx.prefix) vocab_->check(t);
  if (kind_ == PolicyKind::kTabularNgram) {
    out.push_back({tabular_row(ctx), 1.0});
  } else {
    linear_features(ctx, out);
  }
}

double PolicyParams::softmax(const Context& ctx, std::span<double> probs,
                             std::vector<ActiveFeature>& feats) const {
  const int v = vocab_->size();
  active_features(ctx, feats);
  std::fill(probs.begin(), probs.end(), 0.0);
  for (const ActiveFeature& f : feats) {
    const double* row = weights_.data() + static_cast<std::size_t>(f.row) * v;
    for (int j = 0; j < v; ++j) probs[j] += f.value * row[j];
  }
  const double inv_t = 1.0 / temperature_;
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < v; ++j) {
    probs[j] *= inv_t;
    max_logit = std::max(max_logit, probs[j]);
  }
  double sum = 0.0;
  for (int j = 0; j < v; ++j) {
    probs[j] = std::exp(probs[j] - max_logit);
    sum += probs[j];
  }
  const double inv_sum = 1.0 / sum;
  for (int j = 0; j < v; ++j) probs[j] *= inv_sum;
  return max_logit + std::log(sum);
}

void PolicyParams::distribution(const Context& ctx, std::span<double> probs) const {
  if (static_cast<int>(probs.size()) != vocab_->size()) {
    throw std::invalid_argument("policy: distribution buffer size != |V|");
  }
  softmax(ctx, probs, tl_feats);
}

double PolicyParams::log_prob(const Context& ctx, TokenId token) const {
  vocab_->check(token);
  tl_probs.resize(vocab_->size());
  softmax(ctx, tl_probs, tl_feats);
  return std::max(std::log(tl_probs[token]), kLogFloor);
}

void PolicyParams::evaluate(const Context& ctx, TokenId token, TokenEval& out) const {
  vocab_->check(token);
  out.probs.resize(vocab_->size());
  softmax(ctx, out.probs, out.features);
  out.token = token;
  const double lp = std::log(out.probs[token]);
  out.clamped = !(lp >= kLogFloor);
  out.log_prob = out.clamped ? kLogFloor : lp;
}

void PolicyParams::accumulate_grad(const TokenEval& eval, double scale,
                                   std::span<double> grad) const {
  if (grad.size() != weights_.size()) throw std::invalid_argument("policy: gradient size mismatch");
  if (eval.clamped || scale == 0.0) return;  // clamped log-prob is locally constant
  const int v = vocab_->size();
  const double s = scale / temperature_;
  for (const ActiveFeature& f : eval.features) {
    double* row = grad.data() + static_cast<std::size_t>(f.row) * v;
    const double c = s * f.value;
    for (int j = 0; j < v; ++j) row[j] -= c * eval.probs[j];
    row[eval.token] += c;
  }
}

double PolicyParams::accumulate_log_prob_grad(const Context& ctx, TokenId token, double scale,
                                              std::span<double> grad) const {
  thread_local TokenEval eval;
  evaluate(ctx, token, eval);
  accumulate_grad(eval, scale, grad);
  return eval.log_prob;
}

LogProbGradient PolicyParams::log_prob_grad(const Context& ctx, TokenId token) const {
  vocab_->check(token);
  const int v = vocab_->size();
  tl_probs.resize(v);
  softmax(ctx, tl_probs, tl_feats);
  LogProbGradient g;
  if (std::log(tl_probs[token]) < kLogFloor) return g;
  const double inv_t = 1.0 / temperature_;
  // Rows can repeat only across feature kinds with distinct offsets, so
  // (row, token) indices are unique.
  for (const ActiveFeature& f : tl_feats) {
    const std::size_t base = static_cast<std::size_t>(f.row) * v;
    for (int j = 0; j < v; ++j) {
      const double indicator = j == token ? 1.0 : 0.0;
      g.entries.push_back({base + j, f.value * inv_t * (indicator - tl_probs[j])});
    }
  }
  return g;
}

double PolicyParams::entropy(const Context& ctx) const {
  const int v = vocab_->size();
  tl_probs.resize(v);
  softmax(ctx, tl_probs, tl_feats);
  double h = 0.0;
  for (int j = 0; j < v; ++j) {
    const double p = tl_probs[j];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

bool PolicyParams::all_finite() const {
  return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  return a.kind_ == b.kind_ && *a.vocab_ == *b.vocab_ && a.order_ == b.order_ &&
         a.linear_.max_positions == b.linear_.max_positions && a.keys_ == b.keys_ &&
         a.rows_ == b.rows_ && a.temperature_ == b.temperature_ && a.weights_ == b.weights_;
}

std::string_view to_string(PolicyKind kind) {
  return kind == PolicyKind::kTabularNgram ? "tabular_ngram" : "linear_bag";
}

}  // namespace fbos::policy
