#include "affalign/numerics/parameters.hpp"

#include "affalign/common/error.hpp"

namespace affalign {

ParamId ParameterTable::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) {
    throw UsageError("duplicate parameter name '" + name + "'");
  }
  const ParamId id = params_.size();
  index_.emplace(name, id);
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return id;
}

std::optional<ParamId> ParameterTable::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamId ParameterTable::id(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw UsageError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterTable::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

}  // namespace affalign
