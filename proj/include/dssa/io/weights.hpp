#pragma once

// DSSW weight container.
//
// Byte layout (all integers little-endian):
//   "DSSW"            4 bytes magic
//   version           u16 (currently 1)
//   reserved          u16, zero
//   entry_count       u32
//   header_size       u32, bytes from the magic through the header CRC
//   entry_count times:
//     name_len u16, name (UTF-8), dtype u8 (0 = float32), rank u8,
//     extents u32[rank], offset u64 (from the start of the file)
//   header_crc        u32, CRC-32 of every header byte before it
// Payloads follow as little-endian float32 arrays, each starting on a
// 64-byte boundary. Gaps are zero-filled.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dssa/layers.hpp"

namespace dssa::io {

inline constexpr char kWeightMagic[4] = {'D', 'S', 'S', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

struct WeightEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_weights(const std::vector<WeightEntry>& entries);
// Throws FormatError on bad magic, version, CRC, names, extents or offsets.
std::vector<WeightEntry> decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> load_weights(const std::filesystem::path& path);

std::vector<WeightEntry> entries_from(const ParamList<float>& params);
// Copies stored values into the named parameters. Every parameter must be
// present with a matching shape; extra entries are rejected as well.
void assign_weights(const std::vector<WeightEntry>& entries, const ParamList<float>& params);

}  // namespace dssa::io
