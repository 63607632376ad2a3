#include <benchmark/benchmark.h>

#include "affalign/eval/concentration.hpp"
#include "affalign/model/model.hpp"
#include "affalign/teacher/teacher.hpp"
#include "affalign/train/trainer.hpp"
#include "affalign/world/world.hpp"

using namespace affalign;

namespace {

const std::vector<world::Demonstration>& demos() {
  static const auto d = [] {
    std::vector<world::Demonstration> out;
    for (std::uint64_t s = 0; s < 16; ++s) {
      out.push_back(world::make_demonstration(world::generate_scene_from(s, world::Difficulty::kEasy), 8));
    }
    return out;
  }();
  return d;
}

// One optimizer update at the desk configuration (batch 16).
void BM_TrainStep(benchmark::State& state) {
  train::TrainConfig cfg;
  cfg.align_enabled = state.range(0) != 0;
  const auto pool = train::flatten(demos());
  train::TrainingState st = train::initial_state(cfg, model::ModelConfig::desk());
  std::uint64_t update = 0;
  for (auto _ : state) {
    const train::Batch batch = train::draw_batch(pool, cfg, st.model.horizon, ++update);
    benchmark::DoNotOptimize(train::train_step(batch, st.params, st.opt, cfg, st.model));
  }
  state.SetLabel(cfg.align_enabled ? "aligned" : "action only");
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->MinTime(5.0);

// One inference chunk: understanding pass plus 10 Euler steps.
void BM_SampleChunk(benchmark::State& state) {
  const model::ModelConfig cfg = model::ModelConfig::desk();
  const ParameterTable params = model::init_parameters(cfg, 1);
  const world::Scene scene = world::generate_scene_from(3, world::Difficulty::kHard);
  const world::Observation obs =
      world::render(scene, {scene.gripper_start.x, scene.gripper_start.y, 1.0});
  Rng rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(model::sample_actions(params, cfg, obs, rng, 10));
}
BENCHMARK(BM_SampleChunk)->Unit(benchmark::kMillisecond);

void BM_Teacher(benchmark::State& state) {
  const world::Scene scene = world::generate_scene_from(5, world::Difficulty::kHard);
  const world::Observation obs =
      world::render(scene, {scene.gripper_start.x, scene.gripper_start.y, 1.0});
  const auto prompt = teacher::parse_task(scene.task);
  for (auto _ : state) benchmark::DoNotOptimize(teacher::teach(obs, prompt, scene));
}
BENCHMARK(BM_Teacher)->Unit(benchmark::kMicrosecond);

void BM_Render(benchmark::State& state) {
  const world::Scene scene = world::generate_scene_from(5, world::Difficulty::kHard);
  std::size_t t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        world::render(scene, {scene.gripper_start.x, scene.gripper_start.y, 1.0}, t++));
  }
}
BENCHMARK(BM_Render)->Unit(benchmark::kMicrosecond);

void BM_ConcentrationScore(benchmark::State& state) {
  const model::ModelConfig cfg = model::ModelConfig::desk();
  const ParameterTable params = model::init_parameters(cfg, 1);
  const world::Scene scene = world::generate_scene_from(9, world::Difficulty::kHard);
  for (auto _ : state) benchmark::DoNotOptimize(eval::concentration_score(params, cfg, scene));
}
BENCHMARK(BM_ConcentrationScore)->Unit(benchmark::kMillisecond);

}  // namespace
