#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "affalign/model/model.hpp"
#include "affalign/numerics/parameters.hpp"
#include "affalign/world/types.hpp"

namespace affalign::eval {

// Maps an observation to an action chunk. `step` is the control step within
// the episode; stochastic policies derive their randomness from
// (scene seed, step) so episodes are reproducible.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual world::ActionChunk act(const world::Scene& scene, const world::Observation& obs,
                                 std::size_t step) = 0;
};

class ExpertPolicy final : public Policy {
 public:
  explicit ExpertPolicy(std::size_t horizon) : horizon_(horizon) {}
  world::ActionChunk act(const world::Scene& scene, const world::Observation& obs,
                         std::size_t step) override;

 private:
  std::size_t horizon_;
};

// Waypoints drawn uniformly from the unit square.
class RandomPolicy final : public Policy {
 public:
  RandomPolicy(std::size_t horizon, std::uint64_t seed) : horizon_(horizon), seed_(seed) {}
  world::ActionChunk act(const world::Scene& scene, const world::Observation& obs,
                         std::size_t step) override;

 private:
  std::size_t horizon_;
  std::uint64_t seed_;
};

// The trained policy's inference path.
class ModelPolicy final : public Policy {
 public:
  ModelPolicy(const ParameterTable& params, model::ModelConfig cfg, std::uint64_t seed)
      : params_(params), cfg_(std::move(cfg)), seed_(seed) {}
  world::ActionChunk act(const world::Scene& scene, const world::Observation& obs,
                         std::size_t step) override;

 private:
  const ParameterTable& params_;
  model::ModelConfig cfg_;
  std::uint64_t seed_;
};

struct EpisodeResult {
  bool success = false;
  double final_distance = 0.0;
  std::vector<world::Vec2> trajectory;  // start position, then one entry per control step
};

// Closed loop for kMaxControlSteps steps: render, act, move to the chunk's
// first waypoint (clipped to the unit square). Success iff the final
// position lies within kSuccessRadius of the target part's centroid.
EpisodeResult run_episode(Policy& policy, const world::Scene& scene);

struct TaskCell {
  std::string task;
  world::Difficulty difficulty = world::Difficulty::kEasy;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate() const { return static_cast<double>(successes) / static_cast<double>(trials); }
};

struct EvalReport {
  std::vector<TaskCell> cells;       // per (difficulty, task) with trials > 0
  std::vector<TaskCell> aggregates;  // per difficulty, task "all"
  std::uint64_t seed_begin = 0;      // scene seeds [seed_begin, seed_end)
  std::uint64_t seed_end = 0;

  const TaskCell& aggregate(world::Difficulty d) const;
};

// `trials` episodes per difficulty on scenes generate_scene_from(seed + i).
EvalReport evaluate(Policy& policy, const std::vector<world::Difficulty>& difficulties,
                    std::size_t trials, std::uint64_t seed);

inline constexpr const char* kReportHeader = "task,difficulty,trials,successes,rate";
// Cells, then one "all" row per difficulty.
std::string report_csv(const EvalReport& report);

}  // namespace affalign::eval
