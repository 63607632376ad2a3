#include "affalign/eval/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "affalign/common/error.hpp"

namespace affalign::eval {
namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError(std::string(op) + ": grids " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ in size");
  }
}

std::vector<double> normalized(const Tensor& g, const char* op) {
  double mass = 0.0;
  for (double v : g.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DegenerateInputError(std::string(op) + ": heat grid has a negative or non-finite cell");
    }
    mass += v;
  }
  if (!(mass > 0.0)) throw DegenerateInputError(std::string(op) + ": heat grid has zero mass");
  std::vector<double> out(g.data().begin(), g.data().end());
  for (double& v : out) v /= mass;
  return out;
}

}  // namespace

double kld(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "kld");
  const auto p = normalized(pred, "kld");
  const auto g = normalized(truth, "kld");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    total += g[i] * std::log(g[i] / (p[i] + kKldEpsilon) + kKldEpsilon);
  }
  return total;
}

double sim(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "sim");
  const auto p = normalized(pred, "sim");
  const auto g = normalized(truth, "sim");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::min(p[i], g[i]);
  return total;
}

double nss(const Tensor& pred, const Tensor& fixation) {
  check_pair(pred, fixation, "nss");
  const auto n = static_cast<double>(pred.size());
  double mean = 0.0;
  for (double v : pred.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : pred.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (fixation[i] > 0.0) {
      sum += pred[i] - mean;
      ++count;
    }
  }
  if (count == 0) throw DegenerateInputError("nss: fixation map has no positive cell");
  if (sd < 1e-12) return 0.0;
  return sum / (static_cast<double>(count) * sd);
}

Tensor fixation_map(const Tensor& truth) {
  Tensor out(truth.shape());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out[i] = truth[i] >= kFixationThreshold ? 1.0 : 0.0;
  }
  return out;
}

SaliencyScores score(const Tensor& pred, const Tensor& truth) {
  return {kld(pred, truth), sim(pred, truth), nss(pred, fixation_map(truth))};
}

}  // namespace affalign::eval
