#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "affalign/numerics/parameters.hpp"
#include "affalign/numerics/tensor.hpp"

namespace affalign {

class Tape;

// Handle to a value recorded on a Tape. Handles become stale when the tape
// is cleared; using a stale handle is a UsageError.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const;
  std::uint32_t index() const noexcept { return index_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, std::uint64_t generation)
      : tape_(tape), index_(index), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  std::uint64_t generation_ = 0;
};

// Adjoints collected by one backward pass.
struct GradientTable {
  std::vector<Tensor> params;  // by ParamId; empty when the parameter was unused
  std::vector<Tensor> inputs;  // in Tape::input call order

  bool has(ParamId id) const { return id < params.size() && !params[id].empty(); }

  // Adds `other` scaled by `weight` into this table.
  void accumulate(const GradientTable& other, double weight = 1.0);
  bool all_finite() const;
};

// Reverse-mode computation record. Operations append nodes in execution
// order; backward() replays their adjoints in reverse and then clears the
// record. A tape is confined to one thread.
class Tape {
 public:
  enum class Mode { kTrain, kInference };
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(Mode mode = Mode::kTrain) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf whose gradient lands in GradientTable::inputs.
  Var input(Tensor value);
  // Leaf that references (does not copy) a table entry. Frozen entries are
  // recorded as constants.
  Var parameter(const ParameterTable& table, ParamId id);
  Var parameter(const ParameterTable& table, std::string_view name);

  // Records an operation output. `fn` is only kept when some input requires
  // a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  GradientTable backward(Var loss);
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t input_count() const noexcept { return input_count_; }
  Mode mode() const noexcept { return mode_; }

  // Accessors for operation implementations.
  const Tensor& value(std::uint32_t i) const;
  bool requires_grad(std::uint32_t i) const { return nodes_[i].requires_grad; }
  // Adjoint buffer of node i, allocated zero-filled on first use.
  std::span<double> grad(std::uint32_t i);
  void check(const Var& v) const;

 private:
  friend class Var;
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    BackwardFn backward;
    Storage grad;
    std::int64_t param = -1;
    std::int64_t input = -1;
    bool requires_grad = false;
  };

  Var push(Node node);

  Mode mode_;
  std::vector<Node> nodes_;
  std::size_t input_count_ = 0;
  std::size_t param_slots_ = 0;
  std::uint64_t generation_ = 1;
};

}  // namespace affalign
