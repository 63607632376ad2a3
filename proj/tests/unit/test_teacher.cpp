#include <cmath>

#include "affalign/common/error.hpp"
#include "affalign/teacher/teacher.hpp"
#include "affalign/world/world.hpp"
#include "doctest.h"

using namespace affalign;
using namespace affalign::world;
using teacher::ConceptTable;

namespace {

TaskSpec task(Verb v, ObjectKind o) { return TaskSpec{v, o, tokenize(v, o)}; }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

teacher::AffordanceTarget teach_scene(const Scene& s) {
  return teacher::teach(render(s, RobotState{0.5, 0.5, 1.0}), teacher::parse_task(s.task), s);
}

}  // namespace

TEST_SUITE("teacher") {

TEST_CASE("parse_task follows the affordance table") {
  CHECK(teacher::parse_task(task(Verb::kStrike, ObjectKind::kHammer)).part == PartKind::kHead);
  CHECK(teacher::parse_task(task(Verb::kGrasp, ObjectKind::kKnife)).part == PartKind::kHandle);
  CHECK(teacher::parse_task(task(Verb::kCut, ObjectKind::kKnife)).part == PartKind::kBlade);
  TaskSpec bad{Verb::kCut, ObjectKind::kMarker, {}};
  CHECK_THROWS_AS(teacher::parse_task(bad), UnsupportedTaskError);
}

TEST_CASE("concept ids are unique per (object, part)") {
  std::vector<bool> seen(teacher::kConceptCount, false);
  for (std::size_t o = 0; o < kObjectKinds; ++o) {
    for (std::size_t p = 0; p < kPartKinds; ++p) {
      const auto id = teacher::concept_id(static_cast<ObjectKind>(o), static_cast<PartKind>(p));
      REQUIRE(id < teacher::kConceptCount);
      CHECK_FALSE(seen[id]);
      seen[id] = true;
    }
  }
  const auto a = teacher::parse_task(task(Verb::kGrasp, ObjectKind::kKnife));
  const auto b = teacher::parse_task(task(Verb::kCut, ObjectKind::kKnife));
  CHECK(a.concept_id != b.concept_id);
}

TEST_CASE("concept table is orthonormal and frozen") {
  const auto& t = ConceptTable::instance();
  std::vector<std::span<const double>> rows;
  for (std::size_t i = 0; i < teacher::kConceptCount; ++i) rows.push_back(t.concept_vector(i));
  rows.push_back(t.background());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].size() == teacher::kTeacherDim);
    CHECK(std::abs(std::sqrt(dot(rows[i], rows[i])) - 1.0) <= 1e-12);
    for (std::size_t j = i + 1; j < rows.size(); ++j) CHECK(std::abs(dot(rows[i], rows[j])) <= 1e-10);
  }
  const std::string h = t.sha256();
  CHECK(h.size() == 64);
  CHECK(h == ConceptTable::instance().sha256());
}

TEST_CASE("teach blends concept and background by the heat") {
  const auto& table = ConceptTable::instance();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene_from(seed, seed % 2 ? Difficulty::kHard : Difficulty::kEasy);
    const auto prompt = teacher::parse_task(s.task);
    const auto out = teacher::teach(render(s, RobotState{0.2, 0.8, 1.0}), prompt, s);
    CHECK(out.m_aff == affordance_ground_truth(s));
    REQUIRE(out.z_aff.shape() == Shape{teacher::kTeacherTokens, teacher::kTeacherDim});
    const auto e = table.concept_vector(prompt.concept_id);
    const auto bg = table.background();
    for (std::size_t i = 0; i < teacher::kTeacherTokens; ++i) {
      const double h = out.m_aff[i];
      double norm2 = 0.0;
      for (std::size_t k = 0; k < teacher::kTeacherDim; ++k) {
        const double z = out.z_aff.at(i, k);
        CHECK(z == doctest::Approx(h * e[k] + (1 - h) * bg[k]).epsilon(1e-12));
        norm2 += z * z;
      }
      const double norm = std::sqrt(norm2);
      CHECK(norm > 0.0);
      CHECK(norm <= std::sqrt(2.0));
      CHECK(std::abs(norm - std::sqrt(h * h + (1 - h) * (1 - h))) <= 1e-12);
      if (h == 1.0) {
        for (std::size_t k = 0; k < teacher::kTeacherDim; ++k) CHECK(out.z_aff.at(i, k) == e[k]);
      }
    }
  }
}

TEST_CASE("half heat gives norm sqrt(2)/2") {
  const auto& table = ConceptTable::instance();
  const auto e = table.concept_vector(3);
  const auto bg = table.background();
  double n2 = 0.0;
  for (std::size_t k = 0; k < teacher::kTeacherDim; ++k) {
    const double z = 0.5 * e[k] + 0.5 * bg[k];
    n2 += z * z;
  }
  CHECK(std::abs(std::sqrt(n2) - 0.70711) <= 1e-5);
}

TEST_CASE("task conditioning moves the heat peak between knife parts") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 400 && checked < 10; ++seed) {
    Scene s = generate_scene_from(seed, Difficulty::kEasy);
    if (s.task.object != ObjectKind::kKnife) continue;
    ++checked;
    auto argmax_part = [&](Verb v) {
      s.task = task(v, ObjectKind::kKnife);
      const auto out = teach_scene(s);
      std::size_t best = 0;
      for (std::size_t i = 1; i < out.m_aff.size(); ++i)
        if (out.m_aff[i] > out.m_aff[best]) best = i;
      const Vec2 c = cell_center(best / kGrid, best % kGrid);
      const auto& parts = s.target_object().parts;
      return parts[0].rect.contains(c) ? parts[0].kind : parts[1].kind;
    };
    CHECK(argmax_part(Verb::kGrasp) == PartKind::kHandle);
    CHECK(argmax_part(Verb::kCut) == PartKind::kBlade);
  }
  CHECK(checked == 10);
}

TEST_CASE("teach counts evaluations and is side-effect free otherwise") {
  const Scene s = generate_scene(4, Difficulty::kEasy);
  const auto before = teacher::evaluation_count();
  const auto a = teach_scene(s);
  const auto b = teach_scene(s);
  CHECK(teacher::evaluation_count() == before + 2);
  CHECK(a.z_aff == b.z_aff);
  CHECK(a.m_aff == b.m_aff);
}

TEST_CASE("self-eval on unperturbed output is exact") {
  std::vector<Tensor> preds, truths;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene_from(seed, Difficulty::kHard);
    preds.push_back(teach_scene(s).m_aff);
    truths.push_back(affordance_ground_truth(s));
  }
  const auto m = teacher::teacher_self_eval(preds, truths);
  CHECK(m.kld <= 1e-9);
  CHECK(m.sim >= 1 - 1e-9);
  CHECK_THROWS_AS(teacher::teacher_self_eval(std::span(preds).first(3), truths), DimensionError);
}

TEST_CASE("noise at 0.1 raises KLD on every one of 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene_from(seed, Difficulty::kHard);
    const Tensor truth = affordance_ground_truth(s);
    const Tensor clean = teach_scene(s).m_aff;
    const Tensor noisy = teacher::perturb_heat(clean, 0.1, 11, seed);
    CHECK(eval::kld(noisy, truth) > eval::kld(clean, truth));
  }
}

TEST_CASE("uniform prediction against peaked truth has SIM below one half") {
  const Scene s = generate_scene(6, Difficulty::kEasy);
  const Tensor truth = affordance_ground_truth(s);
  CHECK(eval::sim(Tensor(truth.shape(), 1.0), truth) < 0.5);
}

TEST_CASE("perturb_heat contract") {
  const Tensor heat(Shape{4, 4}, 0.3);
  CHECK(teacher::perturb_heat(heat, 0.0, 1, 2) == heat);
  const Tensor a = teacher::perturb_heat(heat, 0.2, 1, 2);
  CHECK(a == teacher::perturb_heat(heat, 0.2, 1, 2));
  CHECK_FALSE(a == teacher::perturb_heat(heat, 0.2, 1, 3));
  const Tensor loud = teacher::perturb_heat(heat, 5.0, 1, 2);
  for (double v : loud.data()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(teacher::perturb_heat(heat, -0.1, 1, 2), UsageError);
}

TEST_CASE("teacher_eval degrades monotonically with noise") {
  const auto s0 = teacher::teacher_eval(20, 0.0, 0, Difficulty::kHard);
  const auto s1 = teacher::teacher_eval(20, 0.1, 0, Difficulty::kHard);
  const auto s2 = teacher::teacher_eval(20, 0.2, 0, Difficulty::kHard);
  CHECK(s0.kld <= 1e-9);
  CHECK(s0.sim >= 1 - 1e-9);
  CHECK(s0.kld < s1.kld);
  CHECK(s1.kld < s2.kld);
  CHECK(s0.sim > s1.sim);
  CHECK(s1.sim > s2.sim);
  CHECK(s0.nss > s1.nss);
  CHECK(s1.nss > s2.nss);
}

}  // TEST_SUITE
