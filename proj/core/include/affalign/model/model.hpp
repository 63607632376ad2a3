#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "affalign/common/rng.hpp"
#include "affalign/numerics/ops.hpp"
#include "affalign/numerics/parameters.hpp"
#include "affalign/world/types.hpp"

namespace affalign::model {

struct ModelConfig {
  // Understanding expert.
  std::size_t layers = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::size_t align_layer = 3;  // 1-based block whose output is captured
  std::size_t grid = world::kGrid;
  std::size_t feature_dim = world::kFeatureDim;
  std::size_t instruction_length = world::kInstructionLength;
  std::size_t vocab = world::kVocabSize;
  std::size_t state_bins = 16;
  // Action expert.
  std::size_t action_layers = 3;
  std::size_t action_width = 64;
  std::size_t action_heads = 4;
  std::size_t action_mlp_hidden = 128;
  std::size_t horizon = 8;
  std::size_t denoise_steps = 10;
  std::size_t tau_dim = 32;
  // Projection into the teacher space.
  std::size_t projection_hidden = 64;
  std::size_t teacher_dim = 32;
  std::size_t teacher_grid = world::kGrid;

  static ModelConfig desk();
  // 2 blocks over a 2x2 visual grid, resized to a 3x3 teacher grid.
  static ModelConfig tiny();

  std::size_t visual_tokens() const { return grid * grid; }
  std::size_t context_tokens() const { return visual_tokens() + instruction_length + 1; }
  std::size_t teacher_tokens() const { return teacher_grid * teacher_grid; }
  // ceil(2L/3).
  static std::size_t default_align_layer(std::size_t layers) { return (2 * layers + 2) / 3; }
  // Throws UsageError on inconsistent sizes.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Understanding expert, action expert and the align.* projection, drawn
// from one init stream. Understanding parameters are prefixed "und.",
// action-expert parameters "act.".
ParameterTable init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Model-side view of one observation.
struct ModelInput {
  const Tensor* visual = nullptr;  // [grid x grid x feature_dim]
  std::span<const std::uint16_t> tokens;
  world::RobotState state;
};
ModelInput as_input(const world::Observation& obs);

// 16-bin (configurable) quantization of the robot state: x bin, y bin,
// gripper bin.
std::array<std::size_t, 3> state_bins(const world::RobotState& s, std::size_t bins);

// Token features for a batch, stacked per sample as
// [visual tokens, instruction tokens, state token] -> [B*T x width].
// Throws VocabularyError for token ids >= vocab.
Var embed_inputs(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                 std::span<const ModelInput> batch);

struct MultimodalContext {
  Var context;     // final-layer features [B*T x width], layer-normalized
  Var aligned;     // visual-token output of block align_layer [B*Nv x width]
  std::size_t batch = 0;
};

MultimodalContext forward_understanding(Tape& tape, const ParameterTable& params,
                                        const ModelConfig& cfg, Var tokens, std::size_t batch);

// Cross-attention keys and values of every action block, computed once per
// context and reused across denoising steps.
struct PreparedContext {
  std::vector<Var> keys;
  std::vector<Var> values;
  std::size_t batch = 0;
};
PreparedContext prepare_context(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                                const MultimodalContext& ctx);

// All-ones [H x H] mask: every action token sees every other.
Tensor action_attention_mask(std::size_t horizon);

// Sinusoidal embedding of tau, length dim.
std::vector<double> tau_embedding(double tau, std::size_t dim);

// v_theta(A^tau, C). noisy: [B*H x 2]; tau: one value per sample.
Var predict_vector_field(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                         Var noisy, std::span<const double> tau, const PreparedContext& ctx);

struct FlowState {
  Tensor noisy;  // tau * A + (1 - tau) * eps
  Tensor noise;  // eps
  double tau = 0.0;
};
FlowState make_flow_state(const Tensor& chunk, double tau, Tensor noise);
// tau ~ U(0,1), eps ~ N(0, I), both from rng.
FlowState make_flow_state(const Tensor& chunk, Rng& rng);

// mean((field - (A - eps))^2) over all entries.
Var action_loss(Var field, const Tensor& chunk, const Tensor& noise);

// Field evaluated at state A and time tau.
using VectorField = std::function<Tensor(const Tensor& state, double tau)>;
// Left-endpoint Euler from `noise` over K uniform steps. The increments are
// kept as a running mean so that a constant field integrates exactly.
Tensor euler_integrate(const VectorField& field, const Tensor& noise, std::size_t steps);

inline constexpr double kSampleMin = -0.1;
inline constexpr double kSampleMax = 1.1;

// euler_integrate followed by the [-0.1, 1.1] clamp. Throws UsageError for
// steps < 1.
Tensor sample_actions(const VectorField& field, const Tensor& noise, std::size_t steps);

// Inference path: embed -> understand -> sample, on an inference tape. Never
// touches the teacher or the projection.
world::ActionChunk sample_actions(const ParameterTable& params, const ModelConfig& cfg,
                                  const world::Observation& obs, Rng& rng, std::size_t steps);

}  // namespace affalign::model
