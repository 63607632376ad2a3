#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "affalign/world/types.hpp"

namespace affalign::world {

inline constexpr int kMaxPlacementAttempts = 1000;

// Deterministic procedural scene. EASY scenes hold the target object alone
// on a clean background; HARD scenes add 2-4 distractors (at least one
// sharing a part kind with the target) and texture noise. Throws
// GenerationError when placement exhausts kMaxPlacementAttempts.
Scene generate_scene(std::uint64_t seed, Difficulty difficulty);

// Like generate_scene, but retries seed + k * 2^32 (k = 1, 2, ...) after
// placement failures. `used_seed` receives the seed that succeeded.
Scene generate_scene_from(std::uint64_t seed, Difficulty difficulty,
                          std::uint64_t* used_seed = nullptr);

// Appearance signature of a part (appearance_id) or the background, length
// kAppearanceDim. Parts of the same kind share a family component.
std::span<const double> appearance_signature(int appearance_id);
std::span<const double> background_signature();
int appearance_id(ObjectKind object, PartKind part);

// Token grid for one timestep. Appearance channels carry the covering
// part's signature plus texture noise (HARD only), clamped to +-3; the
// gripper channel carries a bilinear splat of the gripper position.
Observation render(const Scene& scene, const RobotState& state, std::size_t timestep = 0);

// Analytic heat exp(-d^2 / (2 sigma^2)) over cell centers, d the distance
// (in cells) to the target part's rectangle. Shape [G x G].
Tensor affordance_ground_truth(const Scene& scene);
// Cells whose centers lie inside the target part, as a 0/1 [G x G] grid.
Tensor target_part_mask(const Scene& scene);

Vec2 cell_center(std::size_t row, std::size_t col);

// Absolute waypoints from the robot toward the scene's success target.
// With `step_cap` > 0 consecutive waypoints are step_cap apart and saturate
// at the target; with step_cap <= 0 the chunk spans the whole remaining
// distance evenly. Always clipped to the unit square.
ActionChunk expert_chunk(const Scene& scene, const RobotState& state, std::size_t horizon,
                         double step_cap = kExpertStepCap);
ActionChunk expert_chunk_toward(Vec2 from, Vec2 target, std::size_t horizon, double step_cap);

// Expert rollout: record (observation, chunk), move to the first waypoint,
// repeat until the robot stands on the target (that step included) or
// kMaxControlSteps steps were recorded. Recorded values are rounded to
// float32 so the in-memory demo equals its serialized form.
Demonstration make_demonstration(const Scene& scene, std::size_t horizon);

}  // namespace affalign::world
