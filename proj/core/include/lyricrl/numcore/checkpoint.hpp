#pragma once

#include <cstdint>
#include <filesystem>

#include "lyricrl/numcore/param_set.hpp"

namespace lyricrl {

/// Binary checkpoint layout (all integers little-endian):
///
///   magic "LRLCKPT1" (8 bytes)
///   u32 format_version
///   u64 config_hash
///   u32 entry_count
///   per entry:
///     u32 name_length, name bytes
///     u32 rows, u32 cols
///     rows*cols IEEE-754 binary64 values, little-endian, row-major
///
/// Gradients are not stored. Loading reproduces values bit-exactly.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, std::uint64_t config_hash);

struct LoadedCheckpoint {
  ParamSet params;
  std::uint64_t config_hash = 0;
  std::uint32_t format_version = 0;
};

/// Throws IoError if the file cannot be read, CheckpointError if it is
/// malformed or has an unsupported version.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lyricrl
