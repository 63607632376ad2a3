#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace affalign::train {

inline constexpr std::array<std::string_view, 4> kCheckedLosses = {"action", "align", "projection",
                                                                   "combined"};

struct LossGradientCheck {
  std::string loss;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
};

// Central differences against backpropagation for every loss path of the
// tiny model (random inputs and teacher targets drawn from `seed`), covering
// every parameter the loss reaches. One entry per kCheckedLosses name.
std::vector<LossGradientCheck> check_model_gradients(std::uint64_t seed, double step = 1e-5);

}  // namespace affalign::train
