#include "affalign/train/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <map>

#include "affalign/alignment/alignment.hpp"
#include "affalign/common/error.hpp"
#include "affalign/teacher/teacher.hpp"

namespace affalign::train {
namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

constexpr std::string_view kMetaPrefix = "meta.";
constexpr std::string_view kMomentPrefix = "opt.m/";
constexpr std::string_view kVariancePrefix = "opt.v/";
constexpr std::string_view kOptStep = "opt.step";

}  // namespace

void adamw_step(ParameterTable& params, const GradientTable& grads, OptimizerState& state,
                double lr, const TrainConfig& cfg) {
  state.m.resize(params.size());
  state.v.resize(params.size());
  const std::uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (ParamId id = 0; id < params.size(); ++id) {
    Parameter& p = params[id];
    if (!p.trainable || !grads.has(id)) continue;
    const Tensor& g = grads.params[id];
    if (g.size() != p.value.size()) {
      throw DimensionError("adamw_step: gradient of '" + p.name + "' has shape " +
                           to_string(g.shape()) + ", parameter " + to_string(p.value.shape()));
    }
    if (state.m[id].empty()) {
      state.m[id] = Tensor(p.value.shape());
      state.v[id] = Tensor(p.value.shape());
    }
    double* w = p.value.ptr();
    double* m = state.m[id].ptr();
    double* v = state.v[id].ptr();
    const double* gp = g.ptr();
    const double decay = lr * cfg.weight_decay;
    for (std::size_t i = 0; i < g.size(); ++i) {
      w[i] -= decay * w[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gp[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gp[i] * gp[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
  state.step = t;
}

std::string format_log_line(const TrainLogRecord& r) {
  return std::to_string(r.step) + "," + fmt(r.l_action) + "," + fmt(r.l_align) + "," +
         fmt(r.combined) + "," + fmt(r.lr) + "," + fmt(r.ms);
}

std::vector<Sample> flatten(const std::vector<world::Demonstration>& demos) {
  std::vector<Sample> out;
  for (const auto& d : demos) {
    for (std::size_t t = 0; t < d.observations.size(); ++t) {
      out.push_back(Sample{&d.observations[t], &d.action_chunks[t], &d.scene});
    }
  }
  return out;
}

Batch draw_batch(const std::vector<Sample>& pool, const TrainConfig& cfg, std::size_t horizon,
                 std::uint64_t update) {
  if (pool.empty()) throw UsageError("training data is empty");
  Batch b;
  Rng data = substream(cfg.seed, "data", update);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  b.noise = Tensor(Shape{cfg.batch_size * horizon, 2});
  for (std::size_t s = 0; s < cfg.batch_size; ++s) {
    const Sample& sample = pool[pick(data)];
    if (sample.chunk->horizon() != horizon) {
      throw DimensionError("dataset horizon " + std::to_string(sample.chunk->horizon()) +
                           " differs from model horizon " + std::to_string(horizon));
    }
    b.samples.push_back(sample);
    Rng tau = substream(cfg.seed, "tau", update, s);
    b.tau.push_back(uniform01(tau));
    Rng eps = substream(cfg.seed, "eps", update, s);
    for (std::size_t i = 0; i < horizon * 2; ++i) {
      b.noise[s * horizon * 2 + i] = standard_normal(eps);
    }
  }
  return b;
}

LossBreakdown evaluate_losses(const Batch& batch, const ParameterTable& params,
                              const TrainConfig& cfg, const model::ModelConfig& mc,
                              GradientTable* grads) {
  const std::size_t n = batch.samples.size();
  Tape tape(grads ? Tape::Mode::kTrain : Tape::Mode::kInference);
  std::vector<model::ModelInput> inputs;
  inputs.reserve(n);
  Tensor chunks(Shape{n * mc.horizon, 2});
  for (std::size_t s = 0; s < n; ++s) {
    inputs.push_back(model::as_input(*batch.samples[s].observation));
    const Tensor& w = batch.samples[s].chunk->waypoints;
    std::copy(w.data().begin(), w.data().end(), chunks.ptr() + s * mc.horizon * 2);
  }
  Var tokens = model::embed_inputs(tape, params, mc, inputs);
  const auto ctx = model::forward_understanding(tape, params, mc, tokens, n);
  const auto prepared = model::prepare_context(tape, params, mc, ctx);
  Tensor noisy(chunks.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < mc.horizon * 2; ++i) {
      const std::size_t k = s * mc.horizon * 2 + i;
      noisy[k] = batch.tau[s] * chunks[k] + (1.0 - batch.tau[s]) * batch.noise[k];
    }
  }
  Var field = model::predict_vector_field(tape, params, mc, tape.constant(std::move(noisy)),
                                          batch.tau, prepared);
  Var l_action = model::action_loss(field, chunks, batch.noise);
  LossBreakdown out;
  out.l_action = l_action.value().item();
  Var total = l_action;
  if (cfg.align_enabled) {
    const std::size_t nt = mc.teacher_tokens();
    const Tensor positions = alignment::positional_embedding(nt, mc.teacher_dim);
    Tensor targets(Shape{n * nt, mc.teacher_dim});
    for (std::size_t s = 0; s < n; ++s) {
      const auto& smp = batch.samples[s];
      const auto prompt = teacher::parse_task(smp.scene->task);
      const auto taught = teacher::teach(*smp.observation, prompt, *smp.scene);
      const Tensor t = alignment::build_target(taught.z_aff, positions);
      if (t.size() != nt * mc.teacher_dim) {
        throw DimensionError("teacher target " + to_string(t.shape()) +
                             " does not match the projection output");
      }
      std::copy(t.data().begin(), t.data().end(), targets.ptr() + s * t.size());
    }
    Var x_hat = alignment::project_features(tape, params, ctx.aligned, n, mc.teacher_grid);
    Var l_align = alignment::align_loss(x_hat, targets);
    out.l_align = l_align.value().item();
    total = alignment::combined_loss(l_action, l_align, cfg.lambda);
  }
  out.combined = total.value().item();
  if (grads) *grads = tape.backward(total);
  return out;
}

TrainLogRecord train_step(const Batch& batch, ParameterTable& params, OptimizerState& opt,
                          const TrainConfig& cfg, const model::ModelConfig& mc) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t update = opt.step + 1;
  GradientTable grads;
  const LossBreakdown losses = evaluate_losses(batch, params, cfg, mc, &grads);
  if (!std::isfinite(losses.combined)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(update),
                          static_cast<std::int64_t>(update));
  }
  if (!grads.all_finite()) {
    throw DivergenceError("non-finite gradient at step " + std::to_string(update),
                          static_cast<std::int64_t>(update));
  }
  TrainLogRecord rec;
  rec.step = update;
  rec.lr = lr_at(static_cast<std::size_t>(update), cfg);
  adamw_step(params, grads, opt, rec.lr, cfg);
  rec.l_action = losses.l_action;
  rec.l_align = losses.l_align;
  rec.combined = losses.combined;
  rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
               .count();
  return rec;
}

TrainingState initial_state(const TrainConfig& cfg, const model::ModelConfig& mc) {
  cfg.validate();
  TrainingState s;
  s.model = mc;
  s.train = cfg;
  s.params = model::init_parameters(mc, cfg.seed);
  alignment::set_projection_trainable(s.params, cfg.align_enabled);
  return s;
}

namespace {

// Config scalars in a fixed order. Seeds are split into 32-bit halves so
// every value is exact in float64.
std::vector<std::pair<std::string, double>> meta_values(const TrainingState& s) {
  const auto& m = s.model;
  const auto& t = s.train;
  auto d = [](std::size_t v) { return static_cast<double>(v); };
  return {
      {"model.layers", d(m.layers)},
      {"model.width", d(m.width)},
      {"model.heads", d(m.heads)},
      {"model.mlp_hidden", d(m.mlp_hidden)},
      {"model.align_layer", d(m.align_layer)},
      {"model.grid", d(m.grid)},
      {"model.feature_dim", d(m.feature_dim)},
      {"model.instruction_length", d(m.instruction_length)},
      {"model.vocab", d(m.vocab)},
      {"model.state_bins", d(m.state_bins)},
      {"model.action_layers", d(m.action_layers)},
      {"model.action_width", d(m.action_width)},
      {"model.action_heads", d(m.action_heads)},
      {"model.action_mlp_hidden", d(m.action_mlp_hidden)},
      {"model.horizon", d(m.horizon)},
      {"model.denoise_steps", d(m.denoise_steps)},
      {"model.tau_dim", d(m.tau_dim)},
      {"model.projection_hidden", d(m.projection_hidden)},
      {"model.teacher_dim", d(m.teacher_dim)},
      {"model.teacher_grid", d(m.teacher_grid)},
      {"train.lambda", t.lambda},
      {"train.batch_size", d(t.batch_size)},
      {"train.total_steps", d(t.total_steps)},
      {"train.warmup_steps", d(t.warmup_steps)},
      {"train.peak_lr", t.peak_lr},
      {"train.final_lr", t.final_lr},
      {"train.weight_decay", t.weight_decay},
      {"train.beta1", t.beta1},
      {"train.beta2", t.beta2},
      {"train.adam_eps", t.adam_eps},
      {"train.seed_hi", static_cast<double>(t.seed >> 32)},
      {"train.seed_lo", static_cast<double>(t.seed & 0xffffffffu)},
      {"train.align_enabled", t.align_enabled ? 1.0 : 0.0},
  };
}

}  // namespace

std::vector<model::CheckpointEntry> to_entries(const TrainingState& s) {
  std::vector<model::CheckpointEntry> out;
  for (const auto& [key, value] : meta_values(s)) {
    out.push_back({std::string(kMetaPrefix) + key, Tensor::scalar(value)});
  }
  for (const auto& p : s.params) out.push_back({p.name, p.value});
  out.push_back({std::string(kOptStep), Tensor::scalar(static_cast<double>(s.opt.step))});
  for (ParamId id = 0; id < s.opt.m.size(); ++id) {
    if (s.opt.m[id].empty()) continue;
    out.push_back({std::string(kMomentPrefix) + s.params[id].name, s.opt.m[id]});
    out.push_back({std::string(kVariancePrefix) + s.params[id].name, s.opt.v[id]});
  }
  return out;
}

TrainingState from_entries(const std::vector<model::CheckpointEntry>& entries) {
  std::map<std::string, double, std::less<>> meta;
  TrainingState s;
  std::vector<const model::CheckpointEntry*> moments, variances;
  bool have_step = false;
  for (const auto& e : entries) {
    const std::string_view name = e.name;
    if (name.starts_with(kMetaPrefix)) {
      if (e.value.size() != 1) throw FormatError("meta entry '" + e.name + "' is not a scalar", 0);
      meta[std::string(name.substr(kMetaPrefix.size()))] = e.value[0];
    } else if (name == kOptStep) {
      s.opt.step = static_cast<std::uint64_t>(e.value.item());
      have_step = true;
    } else if (name.starts_with(kMomentPrefix)) {
      moments.push_back(&e);
    } else if (name.starts_with(kVariancePrefix)) {
      variances.push_back(&e);
    } else {
      s.params.add(e.name, e.value);
    }
  }
  auto get = [&](const char* key) {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("checkpoint lacks meta.") + key, 0);
    return it->second;
  };
  auto sz = [&](const char* key) { return static_cast<std::size_t>(get(key)); };
  auto& m = s.model;
  m.layers = sz("model.layers");
  m.width = sz("model.width");
  m.heads = sz("model.heads");
  m.mlp_hidden = sz("model.mlp_hidden");
  m.align_layer = sz("model.align_layer");
  m.grid = sz("model.grid");
  m.feature_dim = sz("model.feature_dim");
  m.instruction_length = sz("model.instruction_length");
  m.vocab = sz("model.vocab");
  m.state_bins = sz("model.state_bins");
  m.action_layers = sz("model.action_layers");
  m.action_width = sz("model.action_width");
  m.action_heads = sz("model.action_heads");
  m.action_mlp_hidden = sz("model.action_mlp_hidden");
  m.horizon = sz("model.horizon");
  m.denoise_steps = sz("model.denoise_steps");
  m.tau_dim = sz("model.tau_dim");
  m.projection_hidden = sz("model.projection_hidden");
  m.teacher_dim = sz("model.teacher_dim");
  m.teacher_grid = sz("model.teacher_grid");
  auto& t = s.train;
  t.lambda = get("train.lambda");
  t.batch_size = sz("train.batch_size");
  t.total_steps = sz("train.total_steps");
  t.warmup_steps = sz("train.warmup_steps");
  t.peak_lr = get("train.peak_lr");
  t.final_lr = get("train.final_lr");
  t.weight_decay = get("train.weight_decay");
  t.beta1 = get("train.beta1");
  t.beta2 = get("train.beta2");
  t.adam_eps = get("train.adam_eps");
  t.seed = (static_cast<std::uint64_t>(get("train.seed_hi")) << 32) |
           static_cast<std::uint64_t>(get("train.seed_lo"));
  t.align_enabled = get("train.align_enabled") != 0.0;
  try {
    m.validate();
    t.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what(), 0);
  }
  if (!have_step) throw FormatError("checkpoint lacks opt.step", 0);
  alignment::set_projection_trainable(s.params, t.align_enabled);

  // Parameters must match a freshly initialized model entry for entry.
  const ParameterTable reference = model::init_parameters(m, 0);
  if (reference.size() != s.params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(s.params.size()) +
                      " parameters, model expects " + std::to_string(reference.size()), 0);
  }
  for (ParamId id = 0; id < reference.size(); ++id) {
    if (reference[id].name != s.params[id].name ||
        reference[id].value.shape() != s.params[id].value.shape()) {
      throw FormatError("checkpoint parameter '" + s.params[id].name +
                        "' does not match the model layout", 0);
    }
  }
  s.opt.m.resize(s.params.size());
  s.opt.v.resize(s.params.size());
  auto place = [&](const std::vector<const model::CheckpointEntry*>& list, std::string_view prefix,
                   std::vector<Tensor>& slot) {
    for (const auto* e : list) {
      const auto id = s.params.find(std::string_view(e->name).substr(prefix.size()));
      if (!id || e->value.shape() != s.params[*id].value.shape()) {
        throw FormatError("optimizer entry '" + e->name + "' matches no parameter", 0);
      }
      slot[*id] = e->value;
    }
  };
  place(moments, kMomentPrefix, s.opt.m);
  place(variances, kVariancePrefix, s.opt.v);
  return s;
}

void save_checkpoint(const TrainingState& state, const std::string& path) {
  model::write_checkpoint(to_entries(state), path);
}

TrainingState load_checkpoint(const std::string& path) {
  return from_entries(model::read_checkpoint(path));
}

std::vector<TrainLogRecord> run(TrainingState& state, const std::vector<Sample>& pool,
                                std::uint64_t until, const RunOptions& options) {
  if (until > state.train.total_steps) {
    throw UsageError("cannot train past total_steps = " + std::to_string(state.train.total_steps));
  }
  std::vector<TrainLogRecord> log;
  while (state.opt.step < until) {
    const Batch batch = draw_batch(pool, state.train, state.model.horizon, state.opt.step + 1);
    TrainLogRecord rec = train_step(batch, state.params, state.opt, state.train, state.model);
    if (!options.record_time) rec.ms = 0.0;
    log.push_back(rec);
    if (options.on_step) options.on_step(rec, state);
  }
  return log;
}

}  // namespace affalign::train
