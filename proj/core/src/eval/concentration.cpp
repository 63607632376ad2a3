#include "affalign/eval/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "affalign/alignment/alignment.hpp"
#include "affalign/common/error.hpp"
#include "affalign/io/binary.hpp"
#include "affalign/teacher/teacher.hpp"
#include "affalign/world/world.hpp"

namespace affalign::eval {

double concentration_score(const Tensor& mapped, const Tensor& part_mask) {
  if (mapped.size() != part_mask.size()) {
    throw DimensionError("concentration_score: map " + to_string(mapped.shape()) + " vs mask " +
                         to_string(part_mask.shape()));
  }
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    total += mapped[i];
    if (part_mask[i] > 0.0) inside += mapped[i];
  }
  if (!(total > 0.0)) throw DegenerateInputError("concentration_score: map has zero mass");
  return inside / total;
}

ConcentrationMap concentration_map(const ParameterTable& params, const model::ModelConfig& cfg,
                                   const world::Scene& scene) {
  if (cfg.teacher_grid != world::kGrid || cfg.teacher_dim != teacher::kTeacherDim) {
    throw UsageError("concentration needs the teacher's 16x16x32 target space");
  }
  const world::RobotState start{scene.gripper_start.x, scene.gripper_start.y, 1.0};
  const world::Observation obs = world::render(scene, start, 0);
  Tape tape(Tape::Mode::kInference);
  const model::ModelInput input = model::as_input(obs);
  Var tokens = model::embed_inputs(tape, params, cfg, std::span<const model::ModelInput>(&input, 1));
  const auto ctx = model::forward_understanding(tape, params, cfg, tokens, 1);
  Var x_hat = alignment::project_features(tape, params, ctx.aligned, 1, cfg.teacher_grid);

  const Tensor xv = x_hat.value();
  const Tensor positions = alignment::positional_embedding(cfg.teacher_tokens(), cfg.teacher_dim);
  const auto concept_vec =
      teacher::ConceptTable::instance().concept_vector(teacher::parse_task(scene.task).concept_id);

  ConcentrationMap out;
  out.similarity = Tensor(Shape{cfg.teacher_grid, cfg.teacher_grid});
  out.mapped = Tensor(out.similarity.shape());
  const std::size_t d = cfg.teacher_dim;
  std::vector<double> u(d), e(d);
  for (std::size_t i = 0; i < cfg.teacher_tokens(); ++i) {
    const double* p = positions.ptr() + i * d;
    const double* x = xv.ptr() + i * d;
    double pp = 0.0, xp = 0.0, ep = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      pp += p[k] * p[k];
      xp += x[k] * p[k];
      ep += concept_vec[k] * p[k];
    }
    double uu = 0.0, ee = 0.0, ue = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      u[k] = x[k] - xp / pp * p[k];
      e[k] = concept_vec[k] - ep / pp * p[k];
      uu += u[k] * u[k];
      ee += e[k] * e[k];
      ue += u[k] * e[k];
    }
    const double denom = std::sqrt(uu * ee);
    const double sim = denom > 1e-12 ? std::clamp(ue / denom, -1.0, 1.0) : 0.0;
    out.similarity[i] = sim;
    out.mapped[i] = (sim + 1.0) / 2.0;
  }
  out.score = concentration_score(out.mapped, world::target_part_mask(scene));
  return out;
}

double concentration_score(const ParameterTable& params, const model::ModelConfig& cfg,
                           const world::Scene& scene) {
  return concentration_map(params, cfg, scene).score;
}

std::string heatmap_pgm(const Tensor& grid) {
  if (grid.rank() != 2) throw DimensionError("heatmap must be 2D, got " + to_string(grid.shape()));
  double max = 0.0;
  for (double v : grid.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DegenerateInputError("heatmap has a negative or non-finite cell");
    }
    max = std::max(max, v);
  }
  const std::size_t h = grid.shape()[0], w = grid.shape()[1];
  std::string out = "P2\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const long px = max > 0.0 ? std::lround(255.0 * grid.at(r, c) / max) : 0;
      if (c) out += ' ';
      out += std::to_string(px);
    }
    out += '\n';
  }
  return out;
}

void export_heatmap(const Tensor& grid, const std::string& path) {
  io::write_file(path, heatmap_pgm(grid));
}

}  // namespace affalign::eval
