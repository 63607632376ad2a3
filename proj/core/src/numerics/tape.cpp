#include "affalign/numerics/tape.hpp"

#include <algorithm>

#include "affalign/common/error.hpp"

namespace affalign {

const Tensor& Var::value() const {
  tape().check(*this);
  return tape_->value(index_);
}

Tape& Var::tape() const {
  if (tape_ == nullptr) throw UsageError("use of an unbound Var");
  return *tape_;
}

bool Var::requires_grad() const {
  tape().check(*this);
  return tape_->requires_grad(index_);
}

void GradientTable::accumulate(const GradientTable& other, double weight) {
  if (params.size() < other.params.size()) params.resize(other.params.size());
  for (std::size_t i = 0; i < other.params.size(); ++i) {
    const Tensor& g = other.params[i];
    if (g.empty()) continue;
    if (params[i].empty()) params[i] = Tensor(g.shape());
    auto dst = params[i].data();
    auto src = g.data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += weight * src[k];
  }
  if (inputs.size() < other.inputs.size()) inputs.resize(other.inputs.size());
  for (std::size_t i = 0; i < other.inputs.size(); ++i) {
    const Tensor& g = other.inputs[i];
    if (g.empty()) continue;
    if (inputs[i].empty()) inputs[i] = Tensor(g.shape());
    auto dst = inputs[i].data();
    auto src = g.data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += weight * src[k];
  }
}

bool GradientTable::all_finite() const {
  return std::all_of(params.begin(), params.end(),
                     [](const Tensor& t) { return t.all_finite(); }) &&
         std::all_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.all_finite(); });
}

Var Tape::push(Node node) {
  if (nodes_.size() >= UINT32_MAX) throw UsageError("computation record overflow");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.input = static_cast<std::int64_t>(input_count_++);
  n.requires_grad = mode_ == Mode::kTrain;
  return push(std::move(n));
}

Var Tape::parameter(const ParameterTable& table, ParamId id) {
  const Parameter& p = table[id];
  Node n;
  n.ref = &p.value;
  if (p.trainable && mode_ == Mode::kTrain) {
    n.param = static_cast<std::int64_t>(id);
    n.requires_grad = true;
    param_slots_ = std::max(param_slots_, table.size());
  }
  return push(std::move(n));
}

Var Tape::parameter(const ParameterTable& table, std::string_view name) {
  return parameter(table, table.id(name));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (mode_ == Mode::kTrain) {
    for (const Var& v : inputs) {
      check(v);
      if (nodes_[v.index_].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(std::uint32_t i) const {
  const Node& n = nodes_[i];
  return n.ref ? *n.ref : n.owned;
}

std::span<double> Tape::grad(std::uint32_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty()) n.grad.assign(value(i).size(), 0.0);
  return n.grad;
}

void Tape::check(const Var& v) const {
  if (v.tape_ != this || v.generation_ != generation_ || v.index_ >= nodes_.size()) {
    throw UsageError("variable is not part of the current computation record");
  }
}

GradientTable Tape::backward(Var loss) {
  check(loss);
  if (mode_ != Mode::kTrain) throw UsageError("backward on an inference record");
  if (value(loss.index_).size() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         to_string(value(loss.index_).shape()));
  }
  grad(loss.index_)[0] = 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this);
  }

  GradientTable table;
  table.params.resize(param_slots_);
  table.inputs.resize(input_count_);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.param >= 0) {
      Tensor& dst = table.params[static_cast<std::size_t>(n.param)];
      const Tensor& v = value(static_cast<std::uint32_t>(i));
      if (dst.empty()) dst = Tensor(v.shape());
      if (!n.grad.empty()) {
        auto d = dst.data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += n.grad[k];
      }
    } else if (n.input >= 0) {
      const Tensor& v = value(static_cast<std::uint32_t>(i));
      table.inputs[static_cast<std::size_t>(n.input)] =
          n.grad.empty() ? Tensor(v.shape()) : Tensor(v.shape(), std::move(n.grad));
    }
  }
  clear();
  return table;
}

void Tape::clear() {
  nodes_.clear();
  input_count_ = 0;
  param_slots_ = 0;
  ++generation_;
}

}  // namespace affalign
