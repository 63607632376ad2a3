#pragma once

#include <cstddef>
#include <cstdint>

#include "affalign/common/rng.hpp"
#include "affalign/numerics/ops.hpp"
#include "affalign/numerics/parameters.hpp"

namespace affalign::alignment {

inline constexpr double kPositionBase = 10000.0;
inline constexpr std::string_view kPrefix = "align.";

// 2D sinusoidal table [n x d]. Token i sits at (i / side, i % side) with
// side = sqrt(n); the first d/2 columns encode the row, the last d/2 the
// column, each as interleaved (sin, cos) pairs at frequencies
// base^(-2j / (d/2)). Throws UsageError for odd d or non-square n.
Tensor positional_embedding(std::size_t n, std::size_t d);

// z_aff + P. Throws DegenerateInputError naming the first row whose norm
// falls below 1e-12.
Tensor build_target(const Tensor& z_aff, const Tensor& positions);

struct ProjectionShape {
  std::size_t input_dim = 64;   // d_v
  std::size_t hidden_dim = 64;  // d_hidden
  std::size_t output_dim = 32;  // teacher dim
};

// Registers align.w1/b1/w2/b2. Weights are N(0, 1/fan_in), biases zero.
void add_projection_parameters(ParameterTable& params, const ProjectionShape& shape, Rng& rng);
// Marks the align.* entries trainable or frozen.
void set_projection_trainable(ParameterTable& params, bool trainable);
bool is_projection_parameter(std::string_view name);

// Resize -> layer_norm -> W1, GELU, W2. `features` stacks `batch` grids of
// side*side tokens ([batch*side^2 x d_v]); the result stacks batch grids of
// target_side^2 rows ([batch*target_side^2 x d]).
Var project_features(Tape& tape, const ParameterTable& params, Var features, std::size_t batch,
                     std::size_t target_side);

// -mean_i cos(x_hat_i, target_i); the target is a constant.
Var align_loss(Var x_hat, const Tensor& target);

// l_action + lambda * l_align. Throws UsageError for negative lambda.
Var combined_loss(Var l_action, Var l_align, double lambda);
double combined_loss(double l_action, double l_align, double lambda);

// Process-wide count of project_features evaluations.
std::uint64_t projection_evaluations();

// Side of a square token count; throws UsageError when n is not square.
std::size_t square_side(std::size_t n);

}  // namespace affalign::alignment
