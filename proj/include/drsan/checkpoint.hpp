#pragma once

#include <cstdint>
#include <string>

#include "drsan/model.hpp"

namespace drsan {

// Binary layout (all integers little-endian):
//   magic "DRSN", version u16, array count u32, then per array:
//   name length u16, name bytes, dtype u8 (0 = f64, 1 = f32), rank u8,
//   extents u32 each, raw element bytes; trailing CRC32 of everything before.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

void save_checkpoint(const ModelParams& params, const std::string& path);

// Verifies the CRC and that the file's arrays exactly cover the inventory
// implied by cfg, then returns the loaded parameters.
ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg);

}  // namespace drsan
