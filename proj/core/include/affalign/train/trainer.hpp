#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "affalign/model/checkpoint.hpp"
#include "affalign/model/model.hpp"
#include "affalign/numerics/parameters.hpp"
#include "affalign/numerics/tape.hpp"
#include "affalign/train/config.hpp"
#include "affalign/world/types.hpp"

namespace affalign::train {

struct OptimizerState {
  std::vector<Tensor> m;  // by ParamId, empty until first update
  std::vector<Tensor> v;
  std::uint64_t step = 0;  // completed updates
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// Decoupled AdamW: p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// with bias-corrected moments. Frozen parameters and parameters without a
// gradient are left untouched. Increments state.step.
void adamw_step(ParameterTable& params, const GradientTable& grads, OptimizerState& state,
                double lr, const TrainConfig& cfg);

struct TrainLogRecord {
  std::uint64_t step = 0;
  double l_action = 0.0;
  double l_align = 0.0;
  double combined = 0.0;
  double lr = 0.0;
  double ms = 0.0;
  friend bool operator==(const TrainLogRecord&, const TrainLogRecord&) = default;
};

inline constexpr const char* kLogHeader = "step,l_action,l_align,combined,lr,ms";
std::string format_log_line(const TrainLogRecord& r);

// One training example: an observation, its expert chunk and its scene.
struct Sample {
  const world::Observation* observation = nullptr;
  const world::ActionChunk* chunk = nullptr;
  const world::Scene* scene = nullptr;
};

// Every (demonstration, timestep) pair of a dataset, in file order.
std::vector<Sample> flatten(const std::vector<world::Demonstration>& demos);

// Examples and flow noise for one update, all drawn from named substreams
// of the config seed keyed by the update number.
struct Batch {
  std::vector<Sample> samples;
  std::vector<double> tau;
  Tensor noise;  // [B*H x 2]
};
Batch draw_batch(const std::vector<Sample>& pool, const TrainConfig& cfg, std::size_t horizon,
                 std::uint64_t update);

// Forward (with layer-m capture), teacher targets (align only), losses,
// backward and one AdamW update. With align disabled the projection and the
// teacher are never evaluated and l_align is 0. Throws DivergenceError on a
// non-finite loss or gradient.
TrainLogRecord train_step(const Batch& batch, ParameterTable& params, OptimizerState& opt,
                          const TrainConfig& cfg, const model::ModelConfig& model_cfg);

// Losses of one batch without an update; `grads` receives the gradients when
// non-null.
struct LossBreakdown {
  double l_action = 0.0;
  double l_align = 0.0;
  double combined = 0.0;
};
LossBreakdown evaluate_losses(const Batch& batch, const ParameterTable& params,
                              const TrainConfig& cfg, const model::ModelConfig& model_cfg,
                              GradientTable* grads = nullptr);

// Model, optimizer and both configs, as stored in a checkpoint.
struct TrainingState {
  model::ModelConfig model;
  TrainConfig train;
  ParameterTable params;
  OptimizerState opt;
};

// Fresh parameters from the config seed; align.* frozen when alignment is off.
TrainingState initial_state(const TrainConfig& cfg, const model::ModelConfig& model_cfg);

std::vector<model::CheckpointEntry> to_entries(const TrainingState& state);
TrainingState from_entries(const std::vector<model::CheckpointEntry>& entries);
void save_checkpoint(const TrainingState& state, const std::string& path);
TrainingState load_checkpoint(const std::string& path);

struct RunOptions {
  bool record_time = false;  // fill TrainLogRecord::ms; otherwise 0
  std::function<void(const TrainLogRecord&, const TrainingState&)> on_step;
};

// Runs updates until state.opt.step reaches `until` (<= total_steps).
std::vector<TrainLogRecord> run(TrainingState& state, const std::vector<Sample>& pool,
                                std::uint64_t until, const RunOptions& options = {});

}  // namespace affalign::train
