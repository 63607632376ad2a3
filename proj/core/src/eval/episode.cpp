#include "affalign/eval/episode.hpp"

#include <algorithm>
#include <charconv>

#include "affalign/common/error.hpp"
#include "affalign/common/rng.hpp"
#include "affalign/world/world.hpp"

namespace affalign::eval {

world::ActionChunk ExpertPolicy::act(const world::Scene& scene, const world::Observation& obs,
                                     std::size_t /*step*/) {
  return world::expert_chunk(scene, obs.robot_state, horizon_);
}

world::ActionChunk RandomPolicy::act(const world::Scene& scene, const world::Observation&,
                                     std::size_t step) {
  Rng rng = substream(seed_, "random-policy", scene.seed, step);
  world::ActionChunk chunk{Tensor(Shape{horizon_, 2})};
  for (double& v : chunk.waypoints.data()) v = uniform01(rng);
  return chunk;
}

world::ActionChunk ModelPolicy::act(const world::Scene& scene, const world::Observation& obs,
                                    std::size_t step) {
  Rng rng = substream(seed_, "sample", scene.seed, step);
  return model::sample_actions(params_, cfg_, obs, rng, cfg_.denoise_steps);
}

EpisodeResult run_episode(Policy& policy, const world::Scene& scene) {
  EpisodeResult out;
  world::RobotState state{scene.gripper_start.x, scene.gripper_start.y, 1.0};
  out.trajectory.push_back(state.position());
  for (std::size_t t = 0; t < world::kMaxControlSteps; ++t) {
    const world::Observation obs = world::render(scene, state, t);
    const world::ActionChunk chunk = policy.act(scene, obs, t);
    if (chunk.horizon() == 0) throw DimensionError("policy returned an empty chunk");
    const world::Vec2 next = chunk.at(0);
    state.x = std::clamp(next.x, 0.0, 1.0);
    state.y = std::clamp(next.y, 0.0, 1.0);
    out.trajectory.push_back(state.position());
  }
  out.final_distance = world::distance(state.position(), scene.success_target());
  out.success = out.final_distance <= world::kSuccessRadius;
  return out;
}

const TaskCell& EvalReport::aggregate(world::Difficulty d) const {
  for (const auto& a : aggregates) {
    if (a.difficulty == d) return a;
  }
  throw UsageError("report has no " + std::string(world::name(d)) + " aggregate");
}

EvalReport evaluate(Policy& policy, const std::vector<world::Difficulty>& difficulties,
                    std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw UsageError("evaluation needs at least one trial");
  const auto& tasks = world::supported_tasks();
  EvalReport report;
  report.seed_begin = seed;
  report.seed_end = seed + trials;
  for (const auto difficulty : difficulties) {
    std::vector<TaskCell> cells(tasks.size());
    TaskCell all{"all", difficulty, 0, 0};
    for (std::size_t i = 0; i < trials; ++i) {
      const world::Scene scene = world::generate_scene_from(seed + i, difficulty);
      const auto pos = std::find(tasks.begin(), tasks.end(),
                                 std::pair{scene.task.verb, scene.task.object}) -
                       tasks.begin();
      const bool ok = run_episode(policy, scene).success;
      auto& cell = cells[static_cast<std::size_t>(pos)];
      cell.trials += 1;
      cell.successes += ok ? 1 : 0;
      all.trials += 1;
      all.successes += ok ? 1 : 0;
    }
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      if (cells[k].trials == 0) continue;
      cells[k].task = world::task_name(tasks[k].first, tasks[k].second);
      cells[k].difficulty = difficulty;
      report.cells.push_back(cells[k]);
    }
    report.aggregates.push_back(all);
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  auto row = [&](const TaskCell& c) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, c.rate());
    out += c.task + "," + std::string(world::name(c.difficulty)) + "," +
           std::to_string(c.trials) + "," + std::to_string(c.successes) + "," +
           std::string(buf, res.ptr) + "\n";
  };
  for (const auto& c : report.cells) row(c);
  for (const auto& a : report.aggregates) row(a);
  return out;
}

}  // namespace affalign::eval
