#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "affalign/numerics/tensor.hpp"

namespace affalign::model {

inline constexpr std::string_view kCheckpointMagic = "AVCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor value;
  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

// "AVCK" layout: magic, version u32, entry count u32, then per entry the
// name (u16 length + UTF-8), rank u8, extents u32 each and float64 data,
// all little-endian. Entry order is preserved.
std::string serialize_checkpoint(const std::vector<CheckpointEntry>& entries);
// Throws FormatError (with byte offset) on bad magic, version or truncation.
std::vector<CheckpointEntry> deserialize_checkpoint(std::string_view bytes);

void write_checkpoint(const std::vector<CheckpointEntry>& entries, const std::string& path);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace affalign::model
