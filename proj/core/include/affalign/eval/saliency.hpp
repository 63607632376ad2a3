#pragma once

#include "affalign/numerics/tensor.hpp"

namespace affalign::eval {

inline constexpr double kKldEpsilon = 1e-12;
inline constexpr double kFixationThreshold = 0.5;

// Saliency metrics over heat grids of equal size. Grids must be nonnegative
// with positive mass; both are normalized to sum 1 before comparison.
// Violations throw DegenerateInputError, size mismatches DimensionError.

// sum_i G_i ln(G_i / (P_i + eps) + eps), G = truth, P = prediction.
double kld(const Tensor& pred, const Tensor& truth);
// sum_i min(P_i, G_i).
double sim(const Tensor& pred, const Tensor& truth);
// Mean of the standardized prediction over fixation cells (fixation > 0).
// A prediction with population std below 1e-12 scores 0.
double nss(const Tensor& pred, const Tensor& fixation);

// 0/1 grid of cells whose heat reaches kFixationThreshold.
Tensor fixation_map(const Tensor& truth);

struct SaliencyScores {
  double kld = 0.0;
  double sim = 0.0;
  double nss = 0.0;
};

// All three metrics, NSS against fixation_map(truth).
SaliencyScores score(const Tensor& pred, const Tensor& truth);

}  // namespace affalign::eval
