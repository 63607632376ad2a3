#include "affalign/world/dataset.hpp"

#include <limits>

#include "affalign/common/error.hpp"
#include "affalign/io/binary.hpp"
#include "affalign/world/world.hpp"

namespace affalign::world {
namespace {

constexpr std::size_t kVisualFloats = kGrid * kGrid * kFeatureDim;

std::uint16_t checked_u16(std::size_t v, std::string_view what) {
  if (v > std::numeric_limits<std::uint16_t>::max()) {
    throw UsageError(std::string(what) + " " + std::to_string(v) + " exceeds u16");
  }
  return static_cast<std::uint16_t>(v);
}

}  // namespace

std::string serialize_dataset(const std::vector<Demonstration>& demos) {
  if (demos.empty()) throw UsageError("write_dataset: demonstration list is empty");
  io::Writer w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(demos.size()));
  for (const auto& d : demos) {
    if (d.observations.size() != d.action_chunks.size() || d.observations.empty()) {
      throw UsageError("write_dataset: demonstration needs equal, non-zero observation and "
                       "chunk counts");
    }
    const std::size_t horizon = d.action_chunks.front().horizon();
    w.u64(d.scene.seed);
    w.u8(static_cast<std::uint8_t>(d.scene.difficulty));
    w.u16(checked_u16(horizon, "horizon"));
    w.u16(checked_u16(d.observations.size(), "step count"));
    for (std::size_t t = 0; t < d.observations.size(); ++t) {
      const auto& obs = d.observations[t];
      if (obs.visual.size() != kVisualFloats) {
        throw DimensionError("write_dataset: visual grid has " +
                             std::to_string(obs.visual.size()) + " values");
      }
      for (double v : obs.visual.data()) w.f32(static_cast<float>(v));
      for (auto tok : obs.instruction_tokens) w.u16(tok);
      w.f32(static_cast<float>(obs.robot_state.x));
      w.f32(static_cast<float>(obs.robot_state.y));
      w.f32(static_cast<float>(obs.robot_state.gripper_open));
      const auto& chunk = d.action_chunks[t];
      if (chunk.horizon() != horizon || chunk.waypoints.cols() != 2) {
        throw DimensionError("write_dataset: inconsistent chunk shape");
      }
      for (double v : chunk.waypoints.data()) w.f32(static_cast<float>(v));
    }
    w.f32(static_cast<float>(d.success_target.x));
    w.f32(static_cast<float>(d.success_target.y));
  }
  return w.str();
}

std::vector<Demonstration> deserialize_dataset(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(4, "magic") != kDatasetMagic) throw FormatError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(v), version_at);
  }
  const std::uint32_t count = r.u32("demo count");
  std::vector<Demonstration> demos;
  for (std::uint32_t i = 0; i < count; ++i) {
    Demonstration d;
    const std::size_t demo_at = r.offset();
    const std::uint64_t seed = r.u64("scene seed");
    const std::uint8_t diff = r.u8("difficulty");
    if (diff > 1) throw FormatError("bad difficulty " + std::to_string(diff), r.offset() - 1);
    const std::size_t horizon = r.u16("horizon");
    if (horizon == 0) throw FormatError("zero horizon", r.offset() - 2);
    const std::size_t steps = r.u16("step count");
    try {
      d.scene = generate_scene(seed, static_cast<Difficulty>(diff));
    } catch (const GenerationError& e) {
      throw FormatError(std::string("scene seed does not generate: ") + e.what(), demo_at);
    }
    for (std::size_t t = 0; t < steps; ++t) {
      Observation obs;
      obs.visual = Tensor(Shape{kGrid, kGrid, kFeatureDim});
      for (double& v : obs.visual.data()) v = r.f32("visual grid");
      for (auto& tok : obs.instruction_tokens) tok = r.u16("instruction tokens");
      obs.robot_state.x = r.f32("robot state");
      obs.robot_state.y = r.f32("robot state");
      obs.robot_state.gripper_open = r.f32("robot state");
      ActionChunk chunk{Tensor(Shape{horizon, 2})};
      for (double& v : chunk.waypoints.data()) v = r.f32("action chunk");
      d.observations.push_back(std::move(obs));
      d.action_chunks.push_back(std::move(chunk));
    }
    d.success_target.x = r.f32("success target");
    d.success_target.y = r.f32("success target");
    demos.push_back(std::move(d));
  }
  r.expect_end();
  return demos;
}

void write_dataset(const std::vector<Demonstration>& demos, const std::string& path) {
  io::write_file(path, serialize_dataset(demos));
}

std::vector<Demonstration> read_dataset(const std::string& path) {
  return deserialize_dataset(io::read_file(path));
}

}  // namespace affalign::world
