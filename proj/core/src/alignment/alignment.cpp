#include "affalign/alignment/alignment.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "affalign/common/error.hpp"

namespace affalign::alignment {
namespace {

std::atomic<std::uint64_t> g_projections{0};

std::string pname(const char* s) { return std::string(kPrefix) + s; }

Tensor gaussian(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = sd * standard_normal(rng);
  return t;
}

}  // namespace

std::size_t square_side(std::size_t n) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n || n == 0) {
    throw UsageError(std::to_string(n) + " tokens do not form a square grid");
  }
  return side;
}

Tensor positional_embedding(std::size_t n, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw UsageError("positional_embedding: d must be even, got " +
                                             std::to_string(d));
  const std::size_t side = square_side(n);
  const std::size_t half = d / 2;
  Tensor p(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double coord[2] = {static_cast<double>(i / side), static_cast<double>(i % side)};
    for (std::size_t axis = 0; axis < 2; ++axis) {
      for (std::size_t j = 0; 2 * j < half; ++j) {
        const double freq =
            std::pow(kPositionBase, -2.0 * static_cast<double>(j) / static_cast<double>(half));
        const std::size_t c = axis * half + 2 * j;
        p.at(i, c) = std::sin(coord[axis] * freq);
        if (c + 1 < (axis + 1) * half) p.at(i, c + 1) = std::cos(coord[axis] * freq);
      }
    }
  }
  return p;
}

Tensor build_target(const Tensor& z_aff, const Tensor& positions) {
  if (z_aff.shape() != positions.shape()) {
    throw DimensionError("build_target: " + to_string(z_aff.shape()) + " vs " +
                         to_string(positions.shape()));
  }
  Tensor out(z_aff.shape());
  const std::size_t d = out.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_aff[i] + positions[i];
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double norm2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm2 += out.at(r, c) * out.at(r, c);
    if (std::sqrt(norm2) < 1e-12) {
      throw DegenerateInputError("build_target: target row " + std::to_string(r) +
                                 " has zero norm");
    }
  }
  return out;
}

void add_projection_parameters(ParameterTable& params, const ProjectionShape& s, Rng& rng) {
  params.add(pname("w1"), gaussian({s.input_dim, s.hidden_dim},
                                   1.0 / std::sqrt(static_cast<double>(s.input_dim)), rng));
  params.add(pname("b1"), Tensor(Shape{s.hidden_dim}));
  params.add(pname("w2"), gaussian({s.hidden_dim, s.output_dim},
                                   1.0 / std::sqrt(static_cast<double>(s.hidden_dim)), rng));
  params.add(pname("b2"), Tensor(Shape{s.output_dim}));
}

bool is_projection_parameter(std::string_view name) { return name.starts_with(kPrefix); }

void set_projection_trainable(ParameterTable& params, bool trainable) {
  for (auto& p : params) {
    if (is_projection_parameter(p.name)) p.trainable = trainable;
  }
}

Var project_features(Tape& tape, const ParameterTable& params, Var features, std::size_t batch,
                     std::size_t target_side) {
  g_projections.fetch_add(1, std::memory_order_relaxed);
  if (batch == 0 || features.rows() % batch != 0) {
    throw DimensionError("project_features: " + std::to_string(features.rows()) +
                         " rows do not split into " + std::to_string(batch) + " grids");
  }
  const std::size_t tokens = features.rows() / batch;
  const std::size_t side = square_side(tokens);
  const std::size_t dv = features.cols();
  Var grids;
  if (side == target_side) {
    grids = features;  // align-corners resize to the same size is the identity
  } else {
    std::vector<Var> parts;
    parts.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      Var g = reshape(slice_rows(features, b * tokens, tokens), Shape{side, side, dv});
      parts.push_back(reshape(bilinear_resize(g, target_side, target_side),
                              Shape{target_side * target_side, dv}));
    }
    grids = parts.size() == 1 ? parts.front() : concat_rows(parts);
  }
  Var h = layer_norm(grids);
  h = gelu(linear(h, tape.parameter(params, pname("w1")), tape.parameter(params, pname("b1"))));
  return linear(h, tape.parameter(params, pname("w2")), tape.parameter(params, pname("b2")));
}

Var align_loss(Var x_hat, const Tensor& target) {
  if (x_hat.shape() != target.shape()) {
    throw DimensionError("align_loss: features " + to_string(x_hat.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  Var t = x_hat.tape().constant(target);
  return scale(mean(cosine_rows(x_hat, t)), -1.0);
}

Var combined_loss(Var l_action, Var l_align, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be >= 0");
  return add(l_action, scale(l_align, lambda));
}

double combined_loss(double l_action, double l_align, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be >= 0");
  return l_action + lambda * l_align;
}

std::uint64_t projection_evaluations() { return g_projections.load(std::memory_order_relaxed); }

}  // namespace affalign::alignment
