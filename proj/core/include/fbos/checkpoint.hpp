#ifndef FBOS_CHECKPOINT_HPP_
#define FBOS_CHECKPOINT_HPP_

#include <filesystem>
#include <iosfwd>

#include "fbos/policy.hpp"

namespace fbos::policy {

// Versioned little-endian binary checkpoint:
//   "FBOSCKPT" u32 version, u8 kind, f64 temperature,
//   u32 |V| then per token {u8 class, i32 position, u32 len, bytes},
//   u32 context order, u32 max positions, u64 #keys, u64 keys...,
//   u64 #weights, f64 weights...
// Doubles are stored as their raw bit patterns, so a round trip is exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const PolicyParams& params, std::ostream& out);
PolicyParams read_checkpoint(std::istream& in);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fbos::policy

#endif  // FBOS_CHECKPOINT_HPP_
