#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "affalign/numerics/tensor.hpp"

namespace affalign {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Ordered, named table of parameter tensors. Insertion order is the
// serialization order and the order gradients are reported in.
class ParameterTable {
 public:
  ParamId add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const noexcept { return params_.size(); }
  std::optional<ParamId> find(std::string_view name) const;
  ParamId id(std::string_view name) const;  // throws UsageError if missing

  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }
  Tensor& value(std::string_view name) { return params_[id(name)].value; }
  const Tensor& value(std::string_view name) const { return params_[id(name)].value; }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  std::size_t scalar_count() const;

  friend bool operator==(const ParameterTable& a, const ParameterTable& b) {
    return a.params_.size() == b.params_.size() && [&] {
      for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (a.params_[i].name != b.params_[i].name ||
            a.params_[i].value != b.params_[i].value ||
            a.params_[i].trainable != b.params_[i].trainable) {
          return false;
        }
      }
      return true;
    }();
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> index_;
};

}  // namespace affalign
