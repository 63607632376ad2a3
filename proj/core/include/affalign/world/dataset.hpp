#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "affalign/world/types.hpp"

namespace affalign::world {

inline constexpr std::string_view kDatasetMagic = "AVL1";
inline constexpr std::uint32_t kDatasetVersion = 1;

// Serializes demonstrations in the little-endian "AVL1" layout. Values are
// stored as float32. Throws UsageError on an empty list.
std::string serialize_dataset(const std::vector<Demonstration>& demos);
// Inverse of serialize_dataset. Scenes are regenerated from their seeds.
// Throws FormatError (with byte offset) on bad magic, version or truncation.
std::vector<Demonstration> deserialize_dataset(std::string_view bytes);

void write_dataset(const std::vector<Demonstration>& demos, const std::string& path);
std::vector<Demonstration> read_dataset(const std::string& path);

}  // namespace affalign::world
