#include "fbos/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fbos::policy {

class CheckpointAccess {
 public:
  static PolicyParams make(PolicyKind kind, std::shared_ptr<const Vocab> vocab, int order,
                           LinearBagSpec spec, std::vector<std::uint64_t> keys,
                           double temperature, std::vector<double> weights) {
    PolicyParams p = kind == PolicyKind::kLinearBag
                         ? PolicyParams::linear_bag(std::move(vocab), spec)
                         : PolicyParams{};
    if (kind == PolicyKind::kTabularNgram) {
      if (order < 1) throw std::runtime_error("checkpoint: bad context order");
      p.kind_ = kind;
      p.vocab_ = std::move(vocab);
      p.order_ = order;
      p.keys_ = std::move(keys);
      p.init_tabular_rows();
    }
    if (weights.size() != p.weights_.size()) {
      throw std::runtime_error("checkpoint: weight count does not match policy shape");
    }
    p.weights_ = std::move(weights);
    p.set_temperature(temperature);
    return p;
  }
};

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'B', 'O', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return value;
}

}  // namespace

void write_checkpoint(const PolicyParams& params, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(params.kind()));
  put<double>(out, params.temperature());
  const Vocab& vocab = params.vocab();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.size()));
  for (TokenId id = 0; id < vocab.size(); ++id) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(vocab.token_class(id)));
    put<std::int32_t>(out, vocab.position_of(id).value_or(-1));
    const std::string& name = vocab.name(id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.context_order()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.linear_spec().max_positions));
  put<std::uint64_t>(out, params.registered_keys().size());
  for (std::uint64_t k : params.registered_keys()) put<std::uint64_t>(out, k);
  put<std::uint64_t>(out, params.num_params());
  for (double w : params.weights()) put<double>(out, w);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

PolicyParams read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto kind_raw = get<std::uint8_t>(in);
  if (kind_raw > 1) throw std::runtime_error("checkpoint: unknown policy kind");
  const auto kind = static_cast<PolicyKind>(kind_raw);
  const double temperature = get<double>(in);

  const auto vocab_size = get<std::uint32_t>(in);
  Vocab::Builder builder;
  for (std::uint32_t id = 0; id < vocab_size; ++id) {
    const auto cls = static_cast<TokenClass>(get<std::uint8_t>(in));
    const auto position = get<std::int32_t>(in);
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated token name");
    if (id < 4) continue;  // reserved tokens come from the builder
    builder.add(std::move(name), cls, position);
  }
  auto vocab = std::make_shared<const Vocab>(std::move(builder).build());
  if (static_cast<std::uint32_t>(vocab->size()) != vocab_size) {
    throw std::runtime_error("checkpoint: vocabulary size mismatch");
  }

  const int order = static_cast<int>(get<std::uint32_t>(in));
  LinearBagSpec spec;
  spec.max_positions = static_cast<int>(get<std::uint32_t>(in));
  std::vector<std::uint64_t> keys(get<std::uint64_t>(in));
  for (auto& k : keys) k = get<std::uint64_t>(in);
  std::vector<double> weights(get<std::uint64_t>(in));
  for (auto& w : weights) w = get<double>(in);
  return CheckpointAccess::make(kind, std::move(vocab), order, spec, std::move(keys),
                                temperature, std::move(weights));
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp);
    write_checkpoint(params, out);
  }
  std::filesystem::rename(tmp, path);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace fbos::policy
