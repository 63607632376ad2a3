#pragma once

#include <string>

#include "affalign/model/model.hpp"
#include "affalign/numerics/parameters.hpp"
#include "affalign/world/types.hpp"

namespace affalign::eval {

struct ConcentrationMap {
  Tensor similarity;  // s_i per teacher token, [teacher_grid x teacher_grid]
  Tensor mapped;      // (s_i + 1) / 2
  double score = 0.0; // mapped mass on target-part cells / total mapped mass
};

// Fraction of (s+1)/2 mass that falls on the target part. s_i is the cosine
// between the projected layer-m feature of token i and the task's concept
// vector, both with their component along the token's positional embedding
// removed; the content-free positional part of the alignment target would
// otherwise saturate s_i on every token. Uses the checkpoint's align.*
// projection, which for a model trained without alignment is still its
// initialization.
ConcentrationMap concentration_map(const ParameterTable& params, const model::ModelConfig& cfg,
                                   const world::Scene& scene);

// Mass of `mapped` on cells where `part_mask` > 0, over total mass.
double concentration_score(const Tensor& mapped, const Tensor& part_mask);
double concentration_score(const ParameterTable& params, const model::ModelConfig& cfg,
                           const world::Scene& scene);

// ASCII PGM "P2", maxval 255, pixel = round(255 * g / max g) (all zero when
// max g <= 0). Throws DegenerateInputError on negative or non-finite cells.
std::string heatmap_pgm(const Tensor& grid);
void export_heatmap(const Tensor& grid, const std::string& path);

}  // namespace affalign::eval
