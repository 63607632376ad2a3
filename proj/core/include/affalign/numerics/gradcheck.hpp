#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace affalign {

// A block of coordinates to perturb together with the analytic gradient
// recorded for them.
struct GradCheckBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Central-difference check of `analytic` against f. Every coordinate is
// perturbed by +-step and restored afterwards. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8). Throws DeterminismError when
// two baseline evaluations of f differ.
GradCheckResult finite_diff_check(const std::function<double()>& f,
                                  std::span<GradCheckBlock> blocks, double step = 1e-5);

}  // namespace affalign
