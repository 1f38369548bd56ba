#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "wsod/models.hpp"

namespace wsod {

/// Binary layout (little-endian):
///   "WSODCKPT" | u32 version | u32 head count (2) | u64 completed rounds
///   per head (prediction first): u64 classes, input_dim, hidden, noise_dim,
///   noise layout (0 shared, 1 per proposal), parameter count, then that many f64 in HeadParams block order.
/// A text sidecar `<file>.meta` records the format version and config hash.
inline constexpr std::string_view kCheckpointMagic = "WSODCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PredParams pred;
  CondParams cond;
  std::uint64_t completed_rounds = 0;
  std::string config_hash;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

/// 64-bit FNV-1a of the text, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace wsod
