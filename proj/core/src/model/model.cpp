#include "affalign/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affalign/alignment/alignment.hpp"
#include "affalign/common/error.hpp"

namespace affalign::model {
namespace {

Tensor gaussian(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = sd * standard_normal(rng);
  return t;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

std::string block(const char* expert, std::size_t l, const char* leaf) {
  return std::string(expert) + ".l" + std::to_string(l) + "." + leaf;
}

void add_attention(ParameterTable& p, const std::string& prefix, std::size_t q_in,
                   std::size_t kv_in, std::size_t width, Rng& rng) {
  p.add(prefix + ".wq", gaussian({q_in, width}, inv_sqrt(q_in), rng));
  p.add(prefix + ".wk", gaussian({kv_in, width}, inv_sqrt(kv_in), rng));
  p.add(prefix + ".wv", gaussian({kv_in, width}, inv_sqrt(kv_in), rng));
  p.add(prefix + ".wo", gaussian({width, q_in}, 0.5 * inv_sqrt(width), rng));
  p.add(prefix + ".bo", Tensor(Shape{q_in}));
}

void add_mlp(ParameterTable& p, const std::string& prefix, std::size_t width, std::size_t hidden,
             Rng& rng) {
  p.add(prefix + ".w1", gaussian({width, hidden}, inv_sqrt(width), rng));
  p.add(prefix + ".b1", Tensor(Shape{hidden}));
  p.add(prefix + ".w2", gaussian({hidden, width}, 0.5 * inv_sqrt(hidden), rng));
  p.add(prefix + ".b2", Tensor(Shape{width}));
}

Var param(Tape& t, const ParameterTable& p, const std::string& name) {
  return t.parameter(p, name);
}

// Row indices that repeat 0..n-1 `times` times.
std::vector<std::size_t> tiled(std::size_t n, std::size_t times) {
  std::vector<std::size_t> idx(n * times);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % n;
  return idx;
}

Var self_attention(Tape& t, const ParameterTable& p, const std::string& prefix, Var x,
                   std::size_t heads, std::size_t batch, const Tensor* mask) {
  Var h = layer_norm(x);
  Var q = linear(h, param(t, p, prefix + ".wq"));
  Var k = linear(h, param(t, p, prefix + ".wk"));
  Var v = linear(h, param(t, p, prefix + ".wv"));
  Var a = attention(q, k, v, heads, mask, batch);
  return add(x, linear(a, param(t, p, prefix + ".wo"), param(t, p, prefix + ".bo")));
}

Var mlp(Tape& t, const ParameterTable& p, const std::string& prefix, Var x) {
  Var h = layer_norm(x);
  h = gelu(linear(h, param(t, p, prefix + ".w1"), param(t, p, prefix + ".b1")));
  return add(x, linear(h, param(t, p, prefix + ".w2"), param(t, p, prefix + ".b2")));
}

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.layers = 2;
  c.width = 8;
  c.heads = 2;
  c.mlp_hidden = 16;
  c.align_layer = default_align_layer(2);
  c.grid = 2;
  c.action_layers = 1;
  c.action_width = 8;
  c.action_heads = 2;
  c.action_mlp_hidden = 16;
  c.horizon = 2;
  c.tau_dim = 4;
  c.projection_hidden = 8;
  c.teacher_dim = 4;
  c.teacher_grid = 3;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("model config: " + what);
  };
  require(layers >= 1, "layers must be >= 1");
  require(align_layer >= 1 && align_layer <= layers, "align_layer must lie in [1, layers]");
  require(heads >= 1 && width % heads == 0, "width must be divisible by heads");
  require(action_heads >= 1 && action_width % action_heads == 0,
          "action_width must be divisible by action_heads");
  require(width >= 2 && action_width >= 2, "widths must be >= 2");
  require(grid >= 1 && teacher_grid >= 1, "grids must be >= 1");
  require(horizon >= 1, "horizon must be >= 1");
  require(denoise_steps >= 1, "denoise_steps must be >= 1");
  require(state_bins >= 1 && vocab >= 1, "state_bins and vocab must be >= 1");
  require(tau_dim >= 2 && tau_dim % 2 == 0, "tau_dim must be even and >= 2");
  require(teacher_dim >= 2 && teacher_dim % 2 == 0, "teacher_dim must be even and >= 2");
}

ParameterTable init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = substream(seed, "init");
  ParameterTable p;
  const std::size_t w = cfg.width, wa = cfg.action_width;
  p.add("und.patch.w", gaussian({cfg.feature_dim, w}, inv_sqrt(cfg.feature_dim), rng));
  p.add("und.patch.b", Tensor(Shape{w}));
  // Learned, initialized as a 2D sin-cos table.
  p.add("und.pos", alignment::positional_embedding(cfg.visual_tokens(), w));
  p.add("und.tok", gaussian({cfg.vocab, w}, 0.5, rng));
  p.add("und.tok_pos", gaussian({cfg.instruction_length, w}, 0.5, rng));
  p.add("und.state_x", gaussian({cfg.state_bins, w}, 0.5, rng));
  p.add("und.state_y", gaussian({cfg.state_bins, w}, 0.5, rng));
  p.add("und.gripper", gaussian({2, w}, 0.5, rng));
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    add_attention(p, block("und", l, "attn"), w, w, w, rng);
    add_mlp(p, block("und", l, "mlp"), w, cfg.mlp_hidden, rng);
  }
  p.add("act.in.w", gaussian({2, wa}, inv_sqrt(2), rng));
  p.add("act.in.b", Tensor(Shape{wa}));
  p.add("act.pos", gaussian({cfg.horizon, wa}, 0.5, rng));
  p.add("act.tau.w", gaussian({cfg.tau_dim, wa}, inv_sqrt(cfg.tau_dim), rng));
  p.add("act.tau.b", Tensor(Shape{wa}));
  for (std::size_t l = 1; l <= cfg.action_layers; ++l) {
    add_attention(p, block("act", l, "self"), wa, wa, wa, rng);
    add_attention(p, block("act", l, "cross"), wa, w, wa, rng);
    add_mlp(p, block("act", l, "mlp"), wa, cfg.action_mlp_hidden, rng);
  }
  p.add("act.out.w", gaussian({wa, 2}, 0.5 * inv_sqrt(wa), rng));
  p.add("act.out.b", Tensor(Shape{2}));
  alignment::add_projection_parameters(
      p, alignment::ProjectionShape{w, cfg.projection_hidden, cfg.teacher_dim}, rng);
  return p;
}

ModelInput as_input(const world::Observation& obs) {
  return ModelInput{&obs.visual, obs.instruction_tokens, obs.robot_state};
}

std::array<std::size_t, 3> state_bins(const world::RobotState& s, std::size_t bins) {
  auto bin = [bins](double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1);
  };
  return {bin(s.x), bin(s.y), s.gripper_open >= 0.5 ? std::size_t{1} : std::size_t{0}};
}

Var embed_inputs(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                 std::span<const ModelInput> batch) {
  const std::size_t b = batch.size();
  if (b == 0) throw UsageError("embed_inputs: empty batch");
  const std::size_t nv = cfg.visual_tokens(), ni = cfg.instruction_length, f = cfg.feature_dim;
  Tensor visual(Shape{b * nv, f});
  std::vector<std::size_t> tokens, sx, sy, sg;
  tokens.reserve(b * ni);
  for (std::size_t s = 0; s < b; ++s) {
    const Tensor* v = batch[s].visual;
    if (!v || v->size() != nv * f) {
      throw DimensionError("embed_inputs: visual grid of sample " + std::to_string(s) +
                           " must hold " + std::to_string(nv) + "x" + std::to_string(f) +
                           " values");
    }
    std::copy(v->data().begin(), v->data().end(), visual.ptr() + s * nv * f);
    if (batch[s].tokens.size() < ni) {
      throw DimensionError("embed_inputs: sample " + std::to_string(s) + " has " +
                           std::to_string(batch[s].tokens.size()) + " instruction tokens");
    }
    for (std::size_t i = 0; i < ni; ++i) {
      const std::size_t id = batch[s].tokens[i];
      if (id >= cfg.vocab) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg.vocab));
      }
      tokens.push_back(id);
    }
    const auto bins = state_bins(batch[s].state, cfg.state_bins);
    sx.push_back(bins[0]);
    sy.push_back(bins[1]);
    sg.push_back(bins[2]);
  }

  const auto pos_idx = tiled(nv, b);
  Var vis = add(linear(tape.constant(std::move(visual)), param(tape, params, "und.patch.w"),
                       param(tape, params, "und.patch.b")),
                gather_rows(param(tape, params, "und.pos"), pos_idx));
  const auto tok_pos_idx = tiled(ni, b);
  Var ins = add(gather_rows(param(tape, params, "und.tok"), tokens),
                gather_rows(param(tape, params, "und.tok_pos"), tok_pos_idx));
  Var st = add(add(gather_rows(param(tape, params, "und.state_x"), sx),
                   gather_rows(param(tape, params, "und.state_y"), sy)),
               gather_rows(param(tape, params, "und.gripper"), sg));
  if (b == 1) {
    const Var parts[] = {vis, ins, st};
    return concat_rows(parts);
  }
  // Stack [all visual | all instruction | all state], then reorder per sample.
  const Var parts[] = {vis, ins, st};
  Var all = concat_rows(parts);
  std::vector<std::size_t> order;
  order.reserve(b * cfg.context_tokens());
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < nv; ++i) order.push_back(s * nv + i);
    for (std::size_t i = 0; i < ni; ++i) order.push_back(b * nv + s * ni + i);
    order.push_back(b * (nv + ni) + s);
  }
  return gather_rows(all, order);
}

MultimodalContext forward_understanding(Tape& tape, const ParameterTable& params,
                                        const ModelConfig& cfg, Var tokens, std::size_t batch) {
  const std::size_t t_count = cfg.context_tokens();
  if (batch == 0 || tokens.rows() != batch * t_count || tokens.cols() != cfg.width) {
    throw DimensionError("forward_understanding: tokens " + to_string(tokens.shape()) +
                         " for batch " + std::to_string(batch));
  }
  MultimodalContext out;
  out.batch = batch;
  Var x = tokens;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    x = self_attention(tape, params, block("und", l, "attn"), x, cfg.heads, batch, nullptr);
    x = mlp(tape, params, block("und", l, "mlp"), x);
    if (l == cfg.align_layer) {
      std::vector<std::size_t> rows;
      rows.reserve(batch * cfg.visual_tokens());
      for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t i = 0; i < cfg.visual_tokens(); ++i) rows.push_back(s * t_count + i);
      }
      out.aligned = batch == 1 ? slice_rows(x, 0, cfg.visual_tokens()) : gather_rows(x, rows);
    }
  }
  out.context = layer_norm(x);
  return out;
}

PreparedContext prepare_context(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                                const MultimodalContext& ctx) {
  PreparedContext out;
  out.batch = ctx.batch;
  for (std::size_t l = 1; l <= cfg.action_layers; ++l) {
    const std::string prefix = block("act", l, "cross");
    out.keys.push_back(linear(ctx.context, param(tape, params, prefix + ".wk")));
    out.values.push_back(linear(ctx.context, param(tape, params, prefix + ".wv")));
  }
  return out;
}

Tensor action_attention_mask(std::size_t horizon) { return Tensor(Shape{horizon, horizon}, 1.0); }

std::vector<double> tau_embedding(double tau, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> e(dim, 0.0);
  for (std::size_t j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::pow(1000.0, static_cast<double>(j) / static_cast<double>(half - 1)) : 1.0;
    e[2 * j] = std::sin(tau * freq);
    e[2 * j + 1] = std::cos(tau * freq);
  }
  return e;
}

Var predict_vector_field(Tape& tape, const ParameterTable& params, const ModelConfig& cfg,
                         Var noisy, std::span<const double> tau, const PreparedContext& ctx) {
  const std::size_t b = ctx.batch, h = cfg.horizon;
  if (tau.size() != b || noisy.rows() != b * h || noisy.cols() != 2) {
    throw DimensionError("predict_vector_field: chunk " + to_string(noisy.shape()) + " with " +
                         std::to_string(tau.size()) + " timesteps for batch " +
                         std::to_string(b));
  }
  if (ctx.keys.size() != cfg.action_layers) {
    throw UsageError("predict_vector_field: context prepared for a different action expert");
  }
  Tensor tau_rows(Shape{b * h, cfg.tau_dim});
  for (std::size_t s = 0; s < b; ++s) {
    const auto e = tau_embedding(tau[s], cfg.tau_dim);
    for (std::size_t k = 0; k < h; ++k) {
      std::copy(e.begin(), e.end(), tau_rows.ptr() + (s * h + k) * cfg.tau_dim);
    }
  }
  Var x = linear(noisy, param(tape, params, "act.in.w"), param(tape, params, "act.in.b"));
  x = add(x, gather_rows(param(tape, params, "act.pos"), tiled(h, b)));
  x = add(x, linear(tape.constant(std::move(tau_rows)), param(tape, params, "act.tau.w"),
                    param(tape, params, "act.tau.b")));
  const Tensor mask = action_attention_mask(h);
  for (std::size_t l = 1; l <= cfg.action_layers; ++l) {
    x = self_attention(tape, params, block("act", l, "self"), x, cfg.action_heads, b, &mask);
    const std::string cross = block("act", l, "cross");
    Var q = linear(layer_norm(x), param(tape, params, cross + ".wq"));
    Var a = attention(q, ctx.keys[l - 1], ctx.values[l - 1], cfg.action_heads, nullptr, b);
    x = add(x, linear(a, param(tape, params, cross + ".wo"), param(tape, params, cross + ".bo")));
    x = mlp(tape, params, block("act", l, "mlp"), x);
  }
  return linear(layer_norm(x), param(tape, params, "act.out.w"), param(tape, params, "act.out.b"));
}

FlowState make_flow_state(const Tensor& chunk, double tau, Tensor noise) {
  if (noise.shape() != chunk.shape()) {
    throw DimensionError("make_flow_state: noise " + to_string(noise.shape()) + " vs chunk " +
                         to_string(chunk.shape()));
  }
  FlowState s;
  s.tau = tau;
  s.noisy = Tensor(chunk.shape());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    s.noisy[i] = tau * chunk[i] + (1.0 - tau) * noise[i];
  }
  s.noise = std::move(noise);
  return s;
}

FlowState make_flow_state(const Tensor& chunk, Rng& rng) {
  const double tau = uniform01(rng);
  Tensor noise(chunk.shape());
  for (double& v : noise.data()) v = standard_normal(rng);
  return make_flow_state(chunk, tau, std::move(noise));
}

Var action_loss(Var field, const Tensor& chunk, const Tensor& noise) {
  if (chunk.shape() != noise.shape() || field.value().size() != chunk.size()) {
    throw DimensionError("action_loss: field " + to_string(field.shape()) + ", chunk " +
                         to_string(chunk.shape()) + ", noise " + to_string(noise.shape()));
  }
  Tensor target(field.shape());
  for (std::size_t i = 0; i < chunk.size(); ++i) target[i] = chunk[i] - noise[i];
  return mse(field, field.tape().constant(std::move(target)));
}

Tensor euler_integrate(const VectorField& field, const Tensor& noise, std::size_t steps) {
  if (steps < 1) throw UsageError("sampling needs at least one denoising step");
  Tensor mean_v(noise.shape());
  Tensor state = noise;
  const double k_total = static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const Tensor v = field(state, static_cast<double>(k) / k_total);
    if (v.shape() != noise.shape()) {
      throw DimensionError("vector field returned " + to_string(v.shape()) + " for state " +
                           to_string(noise.shape()));
    }
    const double n = static_cast<double>(k + 1);
    const double elapsed = n / k_total;
    for (std::size_t i = 0; i < state.size(); ++i) {
      mean_v[i] += (v[i] - mean_v[i]) / n;
      state[i] = noise[i] + elapsed * mean_v[i];
    }
  }
  return state;
}

Tensor sample_actions(const VectorField& field, const Tensor& noise, std::size_t steps) {
  Tensor a = euler_integrate(field, noise, steps);
  for (double& v : a.data()) v = std::clamp(v, kSampleMin, kSampleMax);
  return a;
}

world::ActionChunk sample_actions(const ParameterTable& params, const ModelConfig& cfg,
                                  const world::Observation& obs, Rng& rng, std::size_t steps) {
  Tape tape(Tape::Mode::kInference);
  const ModelInput input = as_input(obs);
  Var tokens = embed_inputs(tape, params, cfg, std::span<const ModelInput>(&input, 1));
  const MultimodalContext ctx = forward_understanding(tape, params, cfg, tokens, 1);
  const PreparedContext prepared = prepare_context(tape, params, cfg, ctx);
  Tensor noise(Shape{cfg.horizon, 2});
  for (double& v : noise.data()) v = standard_normal(rng);
  const VectorField field = [&](const Tensor& state, double tau) {
    const double t[] = {tau};
    return predict_vector_field(tape, params, cfg, tape.constant(state), t, prepared).value();
  };
  return world::ActionChunk{sample_actions(field, noise, steps)};
}

}  // namespace affalign::model
