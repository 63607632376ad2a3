#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "affalign/common/error.hpp"
#include "affalign/common/rng.hpp"
#include "affalign/eval/concentration.hpp"
#include "affalign/eval/episode.hpp"
#include "affalign/eval/saliency.hpp"
#include "affalign/io/binary.hpp"
#include "affalign/world/world.hpp"
#include "doctest.h"

using namespace affalign;
using namespace affalign::eval;

namespace {

Tensor grid(std::size_t n, std::vector<double> v) { return Tensor(Shape{n, n}, std::move(v)); }

Tensor random_heat(std::uint64_t seed, std::size_t n = 8) {
  Rng rng = substream(seed, "heat-test");
  Tensor t(Shape{n, n});
  for (double& v : t.data()) v = uniform01(rng) * uniform01(rng) + 1e-3;
  return t;
}

// Straight-loop references: no shared helpers with the library.
double ref_kld(const Tensor& p, const Tensor& g) {
  double sp = 0, sg = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sp += p[i];
  for (std::size_t i = 0; i < g.size(); ++i) sg += g[i];
  double out = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] / sg, pi = p[i] / sp;
    out += gi * std::log(gi / (pi + 1e-12) + 1e-12);
  }
  return out;
}

double ref_sim(const Tensor& p, const Tensor& g) {
  double sp = 0, sg = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sp += p[i];
  for (std::size_t i = 0; i < g.size(); ++i) sg += g[i];
  double out = 0;
  for (std::size_t i = 0; i < p.size(); ++i) out += std::min(p[i] / sp, g[i] / sg);
  return out;
}

double ref_nss(const Tensor& p, const Tensor& fix) {
  const double n = static_cast<double>(p.size());
  double mean = 0;
  for (std::size_t i = 0; i < p.size(); ++i) mean += p[i];
  mean /= n;
  double var = 0;
  for (std::size_t i = 0; i < p.size(); ++i) var += (p[i] - mean) * (p[i] - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-12) return 0.0;
  double acc = 0, k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (fix[i] > 0) {
      acc += (p[i] - mean) / sd;
      k += 1;
    }
  }
  return acc / k;
}

Tensor blur(const Tensor& h, double sigma) {
  const std::size_t n = h.shape()[0];
  Tensor out(h.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          const double d2 = (double(r) - a) * (double(r) - a) + (double(c) - b) * (double(c) - b);
          out.at(r, c) += h.at(a, b) * std::exp(-d2 / (2 * sigma * sigma));
        }
  return out;
}

// Area of the success disc inside the unit square, by midpoint integration.
double clipped_disc_area(world::Vec2 c, double r) {
  constexpr int kSteps = 400;
  double area = 0;
  const double h = 2 * r / kSteps;
  for (int i = 0; i < kSteps; ++i)
    for (int j = 0; j < kSteps; ++j) {
      const double x = c.x - r + (i + 0.5) * h, y = c.y - r + (j + 0.5) * h;
      if (x < 0 || x > 1 || y < 0 || y > 1) continue;
      if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r) area += h * h;
    }
  return area;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("KLD closed forms") {
  const Tensor one_hot = grid(2, {1, 0, 0, 0});
  const Tensor uniform = grid(2, {1, 1, 1, 1});
  CHECK(std::abs(kld(uniform, one_hot) - std::log(4.0)) <= 1e-6);
  CHECK(std::abs(kld(one_hot, one_hot)) <= 1e-9);
  CHECK_THROWS_AS(kld(grid(2, {0, 0, 0, 0}), one_hot), DegenerateInputError);
  CHECK_THROWS_AS(kld(grid(2, {1, -1, 1, 1}), one_hot), DegenerateInputError);
}

TEST_CASE("SIM closed forms") {
  CHECK(std::abs(sim(grid(2, {1, 2, 3, 4}), grid(2, {1, 2, 3, 4})) - 1.0) <= 1e-12);
  CHECK(sim(grid(2, {1, 1, 0, 0}), grid(2, {0, 0, 1, 1})) == 0.0);
  for (std::size_t n : {2u, 3u, 5u}) {
    Tensor hot(Shape{n, n});
    hot[0] = 1;
    CHECK(std::abs(sim(Tensor(Shape{n, n}, 1.0), hot) - 1.0 / (n * n)) <= 1e-6);
  }
}

TEST_CASE("NSS closed forms") {
  CHECK(nss(grid(2, {3, 3, 3, 3}), grid(2, {1, 0, 0, 0})) == 0.0);
  CHECK(std::abs(nss(grid(2, {1, 0, 0, 0}), grid(2, {1, 0, 0, 0})) - std::sqrt(3.0)) <= 1e-6);
  const Tensor p = random_heat(1);
  const Tensor fix = fixation_map(random_heat(2));
  Tensor shifted = p;
  for (double& v : shifted.data()) v = 2.5 * v + 7.0;
  CHECK(std::abs(nss(shifted, fix) - nss(p, fix)) <= 1e-9);
  CHECK_THROWS_AS(nss(p, Tensor(p.shape())), DegenerateInputError);
}

TEST_CASE("fixation map thresholds at one half") {
  const Tensor f = fixation_map(grid(2, {0.49, 0.5, 0.9, 0.1}));
  CHECK(f == grid(2, {0, 1, 1, 0}));
}

TEST_CASE("metrics match straight-loop references on 100 random pairs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor p = random_heat(2 * seed), g = random_heat(2 * seed + 1);
    const Tensor fix = fixation_map(g);
    CHECK(std::abs(kld(p, g) - ref_kld(p, g)) <= 1e-9);
    CHECK(std::abs(sim(p, g) - ref_sim(p, g)) <= 1e-9);
    if (std::count(fix.data().begin(), fix.data().end(), 1.0) > 0) {
      CHECK(std::abs(nss(p, fix) - ref_nss(p, fix)) <= 1e-9);
    }
    const auto s = score(p, g);
    CHECK(s.kld == kld(p, g));
    CHECK(s.sim == sim(p, g));
    CHECK(kld(p, g) >= 0.0);
    CHECK(kld(p, p) <= 1e-9);
    CHECK(sim(p, g) >= 0.0);
    CHECK(sim(p, g) <= 1.0);
    CHECK(sim(p, p) >= 1 - 1e-9);
  }
}

TEST_CASE("blurred truth sits between exact and uniform in KLD") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = world::generate_scene_from(seed, world::Difficulty::kHard);
    const Tensor truth = world::affordance_ground_truth(scene);
    const double k_blur = kld(blur(truth, 1.0), truth);
    CHECK(k_blur > 0.0);
    CHECK(k_blur < kld(Tensor(truth.shape(), 1.0), truth));
  }
}

TEST_CASE("expert policy succeeds on every EASY scene") {
  ExpertPolicy expert(8);
  const EvalReport r = evaluate(expert, {world::Difficulty::kEasy}, 100, 0);
  CHECK(r.aggregate(world::Difficulty::kEasy).rate() == 1.0);
}

TEST_CASE("random policy matches the success-disc area") {
  RandomPolicy random(8, 3);
  constexpr std::size_t kTrials = 1000;
  std::size_t hits = 0;
  double expected = 0;
  for (std::size_t i = 0; i < kTrials; ++i) {
    const auto scene = world::generate_scene_from(50000 + i, world::Difficulty::kEasy);
    hits += run_episode(random, scene).success ? 1 : 0;
    expected += clipped_disc_area(scene.success_target(), world::kSuccessRadius);
  }
  expected /= kTrials;
  CHECK(std::abs(expected - std::numbers::pi * world::kSuccessRadius * world::kSuccessRadius) < 0.01);
  const double rate = static_cast<double>(hits) / kTrials;
  const double sd = std::sqrt(expected * (1 - expected) / kTrials);
  CHECK(std::abs(rate - expected) <= 3 * sd);
}

TEST_CASE("episodes are deterministic") {
  const auto scene = world::generate_scene_from(9, world::Difficulty::kHard);
  RandomPolicy a(4, 1), b(4, 1);
  const auto ra = run_episode(a, scene), rb = run_episode(b, scene);
  CHECK(ra.trajectory == rb.trajectory);
  CHECK(ra.trajectory.size() == world::kMaxControlSteps + 1);
  CHECK(ra.success == rb.success);
}

TEST_CASE("report rates and CSV layout") {
  ExpertPolicy expert(4);
  const EvalReport r = evaluate(expert, {world::Difficulty::kEasy, world::Difficulty::kHard}, 30, 7);
  CHECK(r.seed_begin == 7);
  CHECK(r.seed_end == 37);
  std::size_t trials = 0;
  for (const auto& c : r.cells) {
    CHECK(c.trials > 0);
    CHECK(c.rate() == static_cast<double>(c.successes) / static_cast<double>(c.trials));
    trials += c.trials;
  }
  CHECK(trials == 60);
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("task,difficulty,trials,successes,rate\n", 0) == 0);
  CHECK(csv.find("all,easy,30,30,1\n") != std::string::npos);
  CHECK(csv == report_csv(evaluate(expert, {world::Difficulty::kEasy, world::Difficulty::kHard}, 30, 7)));
  CHECK_THROWS_AS(evaluate(expert, {world::Difficulty::kEasy}, 0, 0), UsageError);
}

TEST_CASE("concentration score mass ratio") {
  Tensor mask(Shape{4, 4});
  mask[5] = mask[6] = 1;
  CHECK(concentration_score(Tensor(Shape{4, 4}, 0.7), mask) == doctest::Approx(2.0 / 16));
  Tensor s(Shape{4, 4}, -1.0);
  s[5] = s[6] = 1.0;
  Tensor mapped = s;
  for (double& v : mapped.data()) v = (v + 1) / 2;
  CHECK(concentration_score(mapped, mask) == 1.0);
  CHECK_THROWS_AS(concentration_score(Tensor(Shape{4, 4}), mask), DegenerateInputError);
  CHECK_THROWS_AS(concentration_score(Tensor(Shape{3, 3}, 1.0), mask), DimensionError);
}

TEST_CASE("PGM export") {
  CHECK(heatmap_pgm(Tensor(Shape{2, 3})) == "P2\n3 2\n255\n0 0 0\n0 0 0\n");
  Tensor hot(Shape{2, 2});
  hot[3] = 0.25;
  CHECK(heatmap_pgm(hot) == "P2\n2 2\n255\n0 0\n0 255\n");
  CHECK(heatmap_pgm(grid(2, {1, 0.5, 0.25, 0})) == "P2\n2 2\n255\n255 128\n64 0\n");
  const auto path = (std::filesystem::temp_directory_path() / "affalign_eval_test.pgm").string();
  export_heatmap(random_heat(4), path);
  const std::string first = io::read_file(path);
  export_heatmap(random_heat(4), path);
  CHECK(io::read_file(path) == first);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(export_heatmap(hot, "/nonexistent/dir/x.pgm"), IoError);
}

}  // TEST_SUITE
