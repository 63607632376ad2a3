#include "affalign/teacher/teacher.hpp"

#include <openssl/evp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cstdio>

#include "affalign/common/error.hpp"
#include "affalign/common/rng.hpp"
#include "affalign/world/world.hpp"

namespace affalign::teacher {
namespace {

constexpr std::uint64_t kConceptSeed = 0xc0ce97ULL;
std::atomic<std::uint64_t> g_evaluations{0};

}  // namespace

std::size_t concept_id(world::ObjectKind object, world::PartKind part) {
  return static_cast<std::size_t>(object) * world::kPartKinds + static_cast<std::size_t>(part);
}

ConceptTable::ConceptTable() {
  constexpr std::size_t n = kConceptCount + 1;
  static_assert(n <= kTeacherDim, "concepts must fit in the teacher space");
  Rng rng = substream(kConceptSeed, "concepts");
  Eigen::MatrixXd gauss(kTeacherDim, n);
  for (Eigen::Index c = 0; c < gauss.cols(); ++c) {
    for (Eigen::Index r = 0; r < gauss.rows(); ++r) gauss(r, c) = standard_normal(rng);
  }
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ() *
      Eigen::MatrixXd::Identity(kTeacherDim, n);
  rows_.resize(n * kTeacherDim);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < kTeacherDim; ++k) {
      rows_[v * kTeacherDim + k] = q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v));
    }
  }
}

const ConceptTable& ConceptTable::instance() {
  static const ConceptTable table;
  return table;
}

std::span<const double> ConceptTable::concept_vector(std::size_t id) const {
  if (id >= kConceptCount) throw UsageError("concept id " + std::to_string(id) + " out of range");
  return {rows_.data() + id * kTeacherDim, kTeacherDim};
}

std::span<const double> ConceptTable::background() const {
  return {rows_.data() + kConceptCount * kTeacherDim, kTeacherDim};
}

std::string ConceptTable::sha256() const {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(rows_.data(), rows_.size() * sizeof(double), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

ConceptPrompt parse_task(const world::TaskSpec& task) {
  const auto part = world::affordance_part(task.verb, task.object);
  if (!part) {
    throw UnsupportedTaskError("no affordance for '" + world::task_name(task.verb, task.object) +
                               "'");
  }
  return ConceptPrompt{task.verb, task.object, *part, concept_id(task.object, *part)};
}

AffordanceTarget teach(const world::Observation& /*obs*/, const ConceptPrompt& prompt,
                       const world::Scene& scene) {
  g_evaluations.fetch_add(1, std::memory_order_relaxed);
  const auto& table = ConceptTable::instance();
  const auto e_concept = table.concept_vector(prompt.concept_id);
  const auto e_bg = table.background();
  AffordanceTarget out;
  out.m_aff = world::affordance_ground_truth(scene);
  out.z_aff = Tensor(Shape{kTeacherTokens, kTeacherDim});
  for (std::size_t i = 0; i < kTeacherTokens; ++i) {
    const double h = out.m_aff[i];
    double* row = out.z_aff.ptr() + i * kTeacherDim;
    for (std::size_t k = 0; k < kTeacherDim; ++k) row[k] = h * e_concept[k] + (1.0 - h) * e_bg[k];
  }
  return out;
}

std::uint64_t evaluation_count() { return g_evaluations.load(std::memory_order_relaxed); }

eval::SaliencyScores teacher_self_eval(std::span<const Tensor> predictions,
                                       std::span<const Tensor> truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw DimensionError("teacher_self_eval: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  eval::SaliencyScores mean;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto s = eval::score(predictions[i], truths[i]);
    mean.kld += s.kld;
    mean.sim += s.sim;
    mean.nss += s.nss;
  }
  const auto n = static_cast<double>(predictions.size());
  mean.kld /= n;
  mean.sim /= n;
  mean.nss /= n;
  return mean;
}

Tensor perturb_heat(const Tensor& heat, double noise, std::uint64_t seed, std::uint64_t index) {
  if (!(noise >= 0.0)) throw UsageError("noise amplitude must be >= 0");
  Tensor out = heat;
  if (noise == 0.0) return out;
  Rng rng = substream(seed, "teacher-noise", index);
  for (double& v : out.data()) v = std::max(0.0, v + noise * standard_normal(rng));
  return out;
}

std::vector<SceneScore> teacher_eval_scenes(std::size_t scenes, double noise, std::uint64_t seed,
                                            world::Difficulty difficulty) {
  if (scenes == 0) throw UsageError("teacher_eval needs at least one scene");
  std::vector<SceneScore> out;
  out.reserve(scenes);
  for (std::size_t i = 0; i < scenes; ++i) {
    SceneScore row;
    const world::Scene scene = world::generate_scene_from(seed + i, difficulty, &row.scene_seed);
    const world::RobotState start{scene.gripper_start.x, scene.gripper_start.y, 1.0};
    const AffordanceTarget t = teach(world::render(scene, start), parse_task(scene.task), scene);
    row.scores = eval::score(perturb_heat(t.m_aff, noise, seed, i), world::affordance_ground_truth(scene));
    out.push_back(row);
  }
  return out;
}

eval::SaliencyScores teacher_eval(std::size_t scenes, double noise, std::uint64_t seed,
                                  world::Difficulty difficulty) {
  eval::SaliencyScores mean;
  for (const SceneScore& r : teacher_eval_scenes(scenes, noise, seed, difficulty)) {
    mean.kld += r.scores.kld;
    mean.sim += r.scores.sim;
    mean.nss += r.scores.nss;
  }
  const auto n = static_cast<double>(scenes);
  return {mean.kld / n, mean.sim / n, mean.nss / n};
}

}  // namespace affalign::teacher
