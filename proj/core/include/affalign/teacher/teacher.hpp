#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affalign/eval/saliency.hpp"
#include "affalign/numerics/tensor.hpp"
#include "affalign/world/types.hpp"

namespace affalign::teacher {

inline constexpr std::size_t kTeacherDim = 32;
inline constexpr std::size_t kConceptCount = world::kObjectKinds * world::kPartKinds;
inline constexpr std::size_t kTeacherTokens = world::kGrid * world::kGrid;

struct ConceptPrompt {
  world::Verb verb = world::Verb::kGrasp;
  world::ObjectKind object = world::ObjectKind::kHammer;
  world::PartKind part = world::PartKind::kHandle;
  std::size_t concept_id = 0;
  friend bool operator==(const ConceptPrompt&, const ConceptPrompt&) = default;
};

// concept_id of an (object, part) pair: object * kPartKinds + part.
std::size_t concept_id(world::ObjectKind object, world::PartKind part);

// kConceptCount concept vectors plus a background vector, mutually
// orthonormal in R^kTeacherDim. Built once from a fixed seed and immutable.
class ConceptTable {
 public:
  static const ConceptTable& instance();

  std::span<const double> concept_vector(std::size_t id) const;
  std::span<const double> background() const;
  // SHA-256 of the table contents, lowercase hex.
  std::string sha256() const;

 private:
  ConceptTable();
  // Row v holds vector v; row kConceptCount is the background.
  std::vector<double> rows_;
};

struct AffordanceTarget {
  Tensor z_aff;  // [kTeacherTokens x kTeacherDim]
  Tensor m_aff;  // [G x G]
};

// Deterministic task parser. Throws UnsupportedTaskError for pairs outside
// the affordance table.
ConceptPrompt parse_task(const world::TaskSpec& task);

// z_i = h_i e_concept + (1 - h_i) e_bg with h = affordance_ground_truth(scene).
// The observation is accepted for interface parity; the analytic teacher
// reads the scene only.
AffordanceTarget teach(const world::Observation& obs, const ConceptPrompt& prompt,
                       const world::Scene& scene);

// Process-wide count of teach() evaluations.
std::uint64_t evaluation_count();

// Mean KLD / SIM / NSS of predictions against truths, pairwise.
eval::SaliencyScores teacher_self_eval(std::span<const Tensor> predictions,
                                       std::span<const Tensor> truths);

// heat + noise * N(0, 1) per cell, clamped at 0. Draws depend only on
// (seed, index), so every noise level perturbs along the same directions.
Tensor perturb_heat(const Tensor& heat, double noise, std::uint64_t seed, std::uint64_t index);

struct SceneScore {
  std::uint64_t scene_seed = 0;  // seed generate_scene accepted
  eval::SaliencyScores scores;
};

// Scores over scenes generate_scene_from(seed + i): each teacher heat map,
// perturbed by `noise`, is scored against the scene's analytic ground truth.
std::vector<SceneScore> teacher_eval_scenes(std::size_t scenes, double noise, std::uint64_t seed,
                                            world::Difficulty difficulty);
// Mean of teacher_eval_scenes.
eval::SaliencyScores teacher_eval(std::size_t scenes, double noise, std::uint64_t seed,
                                  world::Difficulty difficulty);

}  // namespace affalign::teacher
