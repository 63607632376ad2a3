#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "affalign/numerics/tensor.hpp"

namespace affalign::world {

inline constexpr std::size_t kGrid = 16;
inline constexpr std::size_t kFeatureDim = 8;
// Channel kFeatureDim - 1 carries the gripper marker; the rest are appearance.
inline constexpr std::size_t kGripperChannel = kFeatureDim - 1;
inline constexpr std::size_t kAppearanceDim = kFeatureDim - 1;
inline constexpr std::size_t kInstructionLength = 8;
inline constexpr std::size_t kVocabSize = 64;
inline constexpr double kCell = 1.0 / static_cast<double>(kGrid);
inline constexpr double kHeatSigmaCells = 1.5;
inline constexpr double kSuccessRadius = 1.5 * kCell;
inline constexpr double kExpertStepCap = 2.0 * kCell;
inline constexpr std::size_t kMaxControlSteps = 20;
inline constexpr double kFeatureClamp = 3.0;

enum class PartKind : std::uint8_t { kHandle, kHead, kBlade, kBody, kOpening };
enum class ObjectKind : std::uint8_t { kHammer, kKnife, kSkillet, kCan, kMarker };
enum class Verb : std::uint8_t { kGrasp, kStrike, kCut, kPlaceInto, kPour };
enum class Difficulty : std::uint8_t { kEasy = 0, kHard = 1 };

inline constexpr std::size_t kPartKinds = 5;
inline constexpr std::size_t kObjectKinds = 5;
inline constexpr std::size_t kVerbs = 5;

std::string_view name(PartKind k);
std::string_view name(ObjectKind k);
std::string_view name(Verb v);
std::string_view name(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view s);

// The two part kinds every object kind is built from.
std::array<PartKind, 2> parts_of(ObjectKind k);
// Fixed verb -> part mapping of the affordance table.
PartKind part_for_verb(Verb v);
// Target part of (verb, object), or nullopt when the object lacks that part.
std::optional<PartKind> affordance_part(Verb v, ObjectKind k);
// Every (verb, object) pair the affordance table supports, in a fixed order.
const std::vector<std::pair<Verb, ObjectKind>>& supported_tasks();

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

// Axis-aligned rectangle in normalized workspace coordinates. Scene
// generation only produces cell-aligned rectangles.
struct Rect {
  double cx = 0.0, cy = 0.0;  // center
  double hx = 0.0, hy = 0.0;  // half extents
  friend bool operator==(const Rect&, const Rect&) = default;

  Vec2 center() const { return {cx, cy}; }
  bool contains(Vec2 p) const;
  // Euclidean distance from p to the rectangle, 0 inside.
  double distance_to(Vec2 p) const;
};

struct Part {
  PartKind kind = PartKind::kHandle;
  Rect rect;
  int appearance_id = 0;
  friend bool operator==(const Part&, const Part&) = default;
};

struct ObjectInstance {
  ObjectKind kind = ObjectKind::kHammer;
  std::array<Part, 2> parts;
  bool is_distractor = false;
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

using InstructionTokens = std::array<std::uint16_t, kInstructionLength>;

struct TaskSpec {
  Verb verb = Verb::kGrasp;
  ObjectKind object = ObjectKind::kHammer;
  InstructionTokens instruction_tokens{};
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Builds the padded instruction for a supported task.
InstructionTokens tokenize(Verb v, ObjectKind k);
std::string task_name(Verb v, ObjectKind k);

struct Scene {
  std::uint64_t seed = 0;
  std::vector<ObjectInstance> objects;
  TaskSpec task;
  Vec2 gripper_start;
  Difficulty difficulty = Difficulty::kEasy;
  std::uint64_t noise_seed = 0;
  double texture_amplitude = 0.0;
  friend bool operator==(const Scene&, const Scene&) = default;

  const ObjectInstance& target_object() const;
  const Part& target_part() const;
  Vec2 success_target() const { return target_part().rect.center(); }
};

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double gripper_open = 1.0;
  friend bool operator==(const RobotState&, const RobotState&) = default;

  Vec2 position() const { return {x, y}; }
};

struct Observation {
  Tensor visual;  // [G x G x Dv], row = y cell, col = x cell
  InstructionTokens instruction_tokens{};
  RobotState robot_state;
  friend bool operator==(const Observation&, const Observation&) = default;
};

// H absolute 2D waypoints, stored as an [H x 2] tensor of (x, y).
struct ActionChunk {
  Tensor waypoints;
  friend bool operator==(const ActionChunk&, const ActionChunk&) = default;

  std::size_t horizon() const { return waypoints.rows(); }
  Vec2 at(std::size_t i) const { return {waypoints.at(i, 0), waypoints.at(i, 1)}; }
};

struct Demonstration {
  std::vector<Observation> observations;
  std::vector<ActionChunk> action_chunks;
  Vec2 success_target;
  Scene scene;
  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

}  // namespace affalign::world
