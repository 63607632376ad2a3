#include "affalign/model/checkpoint.hpp"

#include <limits>

#include "affalign/common/error.hpp"
#include "affalign/io/binary.hpp"

namespace affalign::model {

std::string serialize_checkpoint(const std::vector<CheckpointEntry>& entries) {
  io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw UsageError("checkpoint entry name too long: " + e.name.substr(0, 32) + "...");
    }
    if (e.value.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw UsageError("checkpoint entry '" + e.name + "' has too many dimensions");
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t extent : e.value.shape()) {
      if (extent > std::numeric_limits<std::uint32_t>::max()) {
        throw UsageError("checkpoint entry '" + e.name + "' extent exceeds u32");
      }
      w.u32(static_cast<std::uint32_t>(extent));
    }
    for (double v : e.value.data()) w.f64(v);
  }
  return w.str();
}

std::vector<CheckpointEntry> deserialize_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::size_t len = r.u16("name length");
    e.name = std::string(r.bytes(len, "entry name"));
    const std::size_t rank = r.u8("rank");
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& extent : shape) {
      extent = r.u32("extent");
      total *= extent;
    }
    if (total > r.remaining() / 8) {
      throw FormatError("truncated data of '" + e.name + "'", r.offset());
    }
    e.value = Tensor(shape);
    for (double& v : e.value.data()) v = r.f64("entry data");
    out.push_back(std::move(e));
  }
  r.expect_end();
  return out;
}

void write_checkpoint(const std::vector<CheckpointEntry>& entries, const std::string& path) {
  io::write_file(path, serialize_checkpoint(entries));
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  return deserialize_checkpoint(io::read_file(path));
}

}  // namespace affalign::model
