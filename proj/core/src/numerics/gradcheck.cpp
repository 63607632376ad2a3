#include "affalign/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "affalign/common/error.hpp"

namespace affalign {

GradCheckResult finite_diff_check(const std::function<double()>& f,
                                  std::span<GradCheckBlock> blocks, double step) {
  if (!(step > 0.0)) throw UsageError("finite_diff_check: step must be positive");
  const double base_a = f();
  const double base_b = f();
  if (base_a != base_b) {
    throw DeterminismError("finite_diff_check: objective returned " + std::to_string(base_a) +
                           " then " + std::to_string(base_b) + " for identical inputs");
  }
  GradCheckResult result;
  for (GradCheckBlock& block : blocks) {
    if (block.values.size() != block.analytic.size()) {
      throw DimensionError("finite_diff_check: block '" + block.name + "' has " +
                           std::to_string(block.values.size()) + " values but " +
                           std::to_string(block.analytic.size()) + " gradients");
    }
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double original = block.values[i];
      const double up = original + step;
      const double down = original - step;
      block.values[i] = up;
      const double f_up = f();
      block.values[i] = down;
      const double f_down = f();
      block.values[i] = original;
      // Divide by the representable step actually taken.
      const double numeric = (f_up - f_down) / (up - down);
      const double analytic = block.analytic[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_relative_error || !std::isfinite(err)) {
        result.max_relative_error = std::isfinite(err) ? err : INFINITY;
        result.worst_block = block.name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace affalign
