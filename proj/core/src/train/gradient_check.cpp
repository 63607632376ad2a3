#include "affalign/train/gradient_check.hpp"

#include <functional>

#include "affalign/alignment/alignment.hpp"
#include "affalign/common/rng.hpp"
#include "affalign/model/model.hpp"
#include "affalign/numerics/gradcheck.hpp"

namespace affalign::train {
namespace {

constexpr std::size_t kBatch = 2;
constexpr double kLambda = 0.5;

struct Problem {
  model::ModelConfig cfg = model::ModelConfig::tiny();
  ParameterTable params;
  std::vector<Tensor> visual;
  std::vector<std::vector<std::uint16_t>> tokens;
  std::vector<world::RobotState> states;
  Tensor chunks, noise, noisy, targets, weights;
  std::vector<double> tau;
};

Problem make_problem(std::uint64_t seed) {
  Problem p;
  const auto& c = p.cfg;
  p.params = model::init_parameters(c, seed);
  alignment::set_projection_trainable(p.params, true);
  Rng rng = substream(seed, "grad-check");
  auto normal = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = standard_normal(rng);
    return t;
  };
  for (std::size_t s = 0; s < kBatch; ++s) {
    p.visual.push_back(normal({c.grid, c.grid, c.feature_dim}));
    std::vector<std::uint16_t> ids(c.instruction_length);
    for (auto& id : ids) id = static_cast<std::uint16_t>(rng() % c.vocab);
    p.tokens.push_back(std::move(ids));
    p.states.push_back({uniform01(rng), uniform01(rng), uniform01(rng) < 0.5 ? 0.0 : 1.0});
    p.tau.push_back(uniform01(rng));
  }
  p.chunks = Tensor(Shape{kBatch * c.horizon, 2});
  for (double& v : p.chunks.data()) v = uniform01(rng);
  p.noise = normal({kBatch * c.horizon, 2});
  p.noisy = Tensor(p.chunks.shape());
  for (std::size_t i = 0; i < p.chunks.size(); ++i) {
    const double t = p.tau[i / (c.horizon * 2)];
    p.noisy[i] = t * p.chunks[i] + (1.0 - t) * p.noise[i];
  }
  const Tensor positions = alignment::positional_embedding(c.teacher_tokens(), c.teacher_dim);
  p.targets = Tensor(Shape{kBatch * c.teacher_tokens(), c.teacher_dim});
  for (std::size_t s = 0; s < kBatch; ++s) {
    const Tensor t = alignment::build_target(normal({c.teacher_tokens(), c.teacher_dim}), positions);
    std::copy(t.data().begin(), t.data().end(), p.targets.ptr() + s * t.size());
  }
  p.weights = normal({kBatch * c.teacher_tokens(), c.teacher_dim});
  return p;
}

Var build_loss(Tape& tape, const Problem& p, std::string_view loss) {
  std::vector<model::ModelInput> inputs;
  for (std::size_t s = 0; s < kBatch; ++s) {
    inputs.push_back({&p.visual[s], p.tokens[s], p.states[s]});
  }
  Var tokens = model::embed_inputs(tape, p.params, p.cfg, inputs);
  const auto ctx = model::forward_understanding(tape, p.params, p.cfg, tokens, kBatch);
  auto action = [&] {
    const auto prepared = model::prepare_context(tape, p.params, p.cfg, ctx);
    Var field = model::predict_vector_field(tape, p.params, p.cfg, tape.constant(p.noisy), p.tau,
                                            prepared);
    return model::action_loss(field, p.chunks, p.noise);
  };
  auto projected = [&] {
    return alignment::project_features(tape, p.params, ctx.aligned, kBatch, p.cfg.teacher_grid);
  };
  if (loss == "action") return action();
  if (loss == "align") return alignment::align_loss(projected(), p.targets);
  if (loss == "projection") return mean(mul(projected(), tape.constant(p.weights)));
  Var l_align = alignment::align_loss(projected(), p.targets);
  return alignment::combined_loss(action(), l_align, kLambda);
}

}  // namespace

std::vector<LossGradientCheck> check_model_gradients(std::uint64_t seed, double step) {
  Problem p = make_problem(seed);
  std::vector<LossGradientCheck> out;
  for (std::string_view loss : kCheckedLosses) {
    GradientTable grads;
    {
      Tape tape;
      grads = tape.backward(build_loss(tape, p, loss));
    }
    std::vector<GradCheckBlock> blocks;
    for (ParamId id = 0; id < p.params.size(); ++id) {
      if (!grads.has(id)) continue;
      blocks.push_back({p.params[id].name, p.params[id].value.data(), grads.params[id].data()});
    }
    const auto f = [&] {
      Tape tape(Tape::Mode::kInference);
      return build_loss(tape, p, loss).value().item();
    };
    const GradCheckResult r = finite_diff_check(f, blocks, step);
    out.push_back({std::string(loss), r.max_relative_error, r.worst_block, r.coordinates});
  }
  return out;
}

}  // namespace affalign::train
