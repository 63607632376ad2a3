#include "affalign/world/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "affalign/common/error.hpp"
#include "affalign/common/rng.hpp"

namespace affalign::world {
namespace {

constexpr std::size_t kSignatureCount = kObjectKinds * kPartKinds;
constexpr std::uint64_t kAppearanceSeed = 0xa11ce5eedULL;

struct AppearanceTable {
  std::array<std::array<double, kAppearanceDim>, kSignatureCount> parts{};
  std::array<double, kAppearanceDim> background{};
};

const AppearanceTable& appearance_table() {
  static const AppearanceTable table = [] {
    Rng rng = substream(kAppearanceSeed, "appearance");
    std::array<std::array<double, kAppearanceDim>, kPartKinds> family{};
    std::array<std::array<double, kAppearanceDim>, kObjectKinds> object{};
    for (auto& f : family) {
      for (double& v : f) v = standard_normal(rng);
    }
    for (auto& o : object) {
      for (double& v : o) v = standard_normal(rng);
    }
    AppearanceTable t;
    for (std::size_t o = 0; o < kObjectKinds; ++o) {
      for (std::size_t p = 0; p < kPartKinds; ++p) {
        auto& sig = t.parts[o * kPartKinds + p];
        for (std::size_t c = 0; c < kAppearanceDim; ++c) {
          sig[c] = std::clamp(0.8 * family[p][c] + 0.6 * object[o][c], -2.0, 2.0);
        }
      }
    }
    for (double& v : t.background) v = 0.2 * standard_normal(rng);
    return t;
  }();
  return table;
}

// Part footprint (length along the object axis, thickness) in cells.
struct Footprint {
  int length;
  int thickness;
};

Footprint base_footprint(ObjectKind obj, PartKind part) {
  switch (obj) {
    case ObjectKind::kHammer: return part == PartKind::kHandle ? Footprint{5, 2} : Footprint{2, 4};
    case ObjectKind::kKnife: return part == PartKind::kHandle ? Footprint{3, 2} : Footprint{5, 2};
    case ObjectKind::kSkillet:
      return part == PartKind::kHandle ? Footprint{4, 2} : Footprint{4, 4};
    case ObjectKind::kCan: return part == PartKind::kBody ? Footprint{3, 4} : Footprint{2, 4};
    case ObjectKind::kMarker: return part == PartKind::kBody ? Footprint{4, 2} : Footprint{2, 2};
  }
  return {2, 2};
}

struct CellBox {
  int x0, y0, x1, y1;  // half-open
  bool overlaps(const CellBox& o, int margin) const {
    return x0 - margin < o.x1 && o.x0 - margin < x1 && y0 - margin < o.y1 && o.y0 - margin < y1;
  }
};

Rect to_rect(const CellBox& b) {
  const double g = static_cast<double>(kGrid);
  return Rect{(b.x0 + b.x1) / (2.0 * g), (b.y0 + b.y1) / (2.0 * g), (b.x1 - b.x0) / (2.0 * g),
              (b.y1 - b.y0) / (2.0 * g)};
}

int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Tries to place one object; returns false when it does not fit.
bool place_object(Rng& rng, ObjectKind kind, bool distractor, std::vector<CellBox>& occupied,
                  std::vector<ObjectInstance>& objects) {
  const auto kinds = parts_of(kind);
  std::array<Footprint, 2> fp{};
  for (int i = 0; i < 2; ++i) {
    fp[i] = base_footprint(kind, kinds[i]);
    fp[i].length += uniform_int(rng, 0, 1);
  }
  const bool horizontal = uniform_int(rng, 0, 1) == 1;
  const bool reversed = uniform_int(rng, 0, 1) == 1;
  const int length = fp[0].length + fp[1].length;
  const int thickness = std::max(fp[0].thickness, fp[1].thickness);
  const int g = static_cast<int>(kGrid);
  const int span_x = horizontal ? length : thickness;
  const int span_y = horizontal ? thickness : length;
  const int ox = uniform_int(rng, 0, g - span_x);
  const int oy = uniform_int(rng, 0, g - span_y);
  const CellBox bbox{ox, oy, ox + span_x, oy + span_y};
  for (const auto& b : occupied) {
    if (bbox.overlaps(b, 1)) return false;
  }
  ObjectInstance obj;
  obj.kind = kind;
  obj.is_distractor = distractor;
  int along = 0;
  for (int k = 0; k < 2; ++k) {
    const int i = reversed ? 1 - k : k;
    const int inset = (thickness - fp[i].thickness) / 2;
    CellBox cell{};
    if (horizontal) {
      cell = {ox + along, oy + inset, ox + along + fp[i].length, oy + inset + fp[i].thickness};
    } else {
      cell = {ox + inset, oy + along, ox + inset + fp[i].thickness, oy + along + fp[i].length};
    }
    along += fp[i].length;
    obj.parts[i] = Part{kinds[i], to_rect(cell), appearance_id(kind, kinds[i])};
  }
  occupied.push_back(bbox);
  objects.push_back(obj);
  return true;
}

bool shares_part(ObjectKind a, ObjectKind b) {
  const auto pa = parts_of(a), pb = parts_of(b);
  for (auto x : pa) {
    for (auto y : pb) {
      if (x == y) return true;
    }
  }
  return false;
}

// Kept out of line: GCC 11's SLP vectorizer folds an inlined
// double->float->double round trip into a no-op.
[[gnu::noinline]] double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_f32(Tensor& t) {
  for (double& v : t.data()) v = to_f32(v);
}

}  // namespace

int appearance_id(ObjectKind object, PartKind part) {
  return static_cast<int>(object) * static_cast<int>(kPartKinds) + static_cast<int>(part);
}

std::span<const double> appearance_signature(int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= kSignatureCount) {
    throw UsageError("appearance id " + std::to_string(id) + " out of range");
  }
  return appearance_table().parts[static_cast<std::size_t>(id)];
}

std::span<const double> background_signature() { return appearance_table().background; }

Scene generate_scene(std::uint64_t seed, Difficulty difficulty) {
  Rng rng = substream(seed, "scene", static_cast<std::uint64_t>(difficulty));
  const auto& tasks = supported_tasks();
  const auto [verb, object] =
      tasks[std::uniform_int_distribution<std::size_t>(0, tasks.size() - 1)(rng)];

  Scene scene;
  scene.seed = seed;
  scene.difficulty = difficulty;
  scene.task = TaskSpec{verb, object, tokenize(verb, object)};
  scene.noise_seed = mix64(seed ^ 0x7e47a4e5ULL);

  std::vector<ObjectKind> kinds{object};
  if (difficulty == Difficulty::kHard) {
    std::vector<ObjectKind> family, others;
    for (std::size_t k = 0; k < kObjectKinds; ++k) {
      const auto kind = static_cast<ObjectKind>(k);
      if (kind == object) continue;
      others.push_back(kind);
      if (shares_part(kind, object)) family.push_back(kind);
    }
    const int count = uniform_int(rng, 2, 4);
    kinds.push_back(family[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(family.size()) - 1))]);
    for (int i = 1; i < count; ++i) {
      kinds.push_back(others[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(others.size()) - 1))]);
    }
    scene.texture_amplitude = 0.2 + 0.2 * uniform01(rng);
  }

  // A layout that wedges itself is discarded and restarted; attempts count
  // against one budget across restarts.
  constexpr int kAttemptsPerObject = 40;
  std::vector<CellBox> occupied;
  int attempts = 0;
  for (std::size_t i = 0; i < kinds.size();) {
    int tries = 0;
    while (!place_object(rng, kinds[i], i > 0, occupied, scene.objects)) {
      if (++attempts >= kMaxPlacementAttempts) {
        throw GenerationError("scene " + std::to_string(seed) + ": could not place " +
                              std::to_string(kinds.size()) + " objects in " +
                              std::to_string(kMaxPlacementAttempts) + " attempts");
      }
      if (++tries >= kAttemptsPerObject) break;
    }
    if (tries >= kAttemptsPerObject) {
      occupied.clear();
      scene.objects.clear();
      i = 0;
      continue;
    }
    ++i;
  }
  scene.gripper_start = Vec2{uniform01(rng), uniform01(rng)};
  return scene;
}

Scene generate_scene_from(std::uint64_t seed, Difficulty difficulty, std::uint64_t* used_seed) {
  // Retries stride by 2^32 so that consecutive base seeds never collide.
  constexpr std::uint64_t kStride = std::uint64_t{1} << 32;
  constexpr int kMaxRetries = 64;
  for (int k = 0;; ++k) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(k) * kStride;
    try {
      Scene scene = generate_scene(s, difficulty);
      if (used_seed) *used_seed = s;
      return scene;
    } catch (const GenerationError&) {
      if (k + 1 >= kMaxRetries) throw;
    }
  }
}

Vec2 cell_center(std::size_t row, std::size_t col) {
  return Vec2{(static_cast<double>(col) + 0.5) * kCell, (static_cast<double>(row) + 0.5) * kCell};
}

Observation render(const Scene& scene, const RobotState& state, std::size_t timestep) {
  Observation obs;
  obs.visual = Tensor(Shape{kGrid, kGrid, kFeatureDim});
  obs.instruction_tokens = scene.task.instruction_tokens;
  obs.robot_state = state;

  const auto bg = background_signature();
  const bool noisy = scene.texture_amplitude > 0.0;
  Rng noise = substream(scene.noise_seed, "texture", timestep);
  const double gx = state.x * static_cast<double>(kGrid) - 0.5;
  const double gy = state.y * static_cast<double>(kGrid) - 0.5;

  for (std::size_t r = 0; r < kGrid; ++r) {
    for (std::size_t c = 0; c < kGrid; ++c) {
      const Vec2 p = cell_center(r, c);
      std::span<const double> sig = bg;
      for (const auto& obj : scene.objects) {
        for (const auto& part : obj.parts) {
          if (part.rect.contains(p)) sig = appearance_signature(part.appearance_id);
        }
      }
      double* cell = obs.visual.ptr() + (r * kGrid + c) * kFeatureDim;
      for (std::size_t ch = 0; ch < kAppearanceDim; ++ch) {
        double v = sig[ch];
        if (noisy) v += scene.texture_amplitude * standard_normal(noise);
        cell[ch] = std::clamp(v, -kFeatureClamp, kFeatureClamp);
      }
      const double wx = std::max(0.0, 1.0 - std::abs(static_cast<double>(c) - gx));
      const double wy = std::max(0.0, 1.0 - std::abs(static_cast<double>(r) - gy));
      cell[kGripperChannel] = 2.0 * wx * wy;
    }
  }
  return obs;
}

Tensor affordance_ground_truth(const Scene& scene) {
  const Rect& rect = scene.target_part().rect;
  Tensor heat(Shape{kGrid, kGrid});
  const double inv_two_sigma2 = 1.0 / (2.0 * kHeatSigmaCells * kHeatSigmaCells);
  for (std::size_t r = 0; r < kGrid; ++r) {
    for (std::size_t c = 0; c < kGrid; ++c) {
      const double d = rect.distance_to(cell_center(r, c)) * static_cast<double>(kGrid);
      heat.at(r, c) = std::exp(-d * d * inv_two_sigma2);
    }
  }
  return heat;
}

Tensor target_part_mask(const Scene& scene) {
  const Rect& rect = scene.target_part().rect;
  Tensor mask(Shape{kGrid, kGrid});
  for (std::size_t r = 0; r < kGrid; ++r) {
    for (std::size_t c = 0; c < kGrid; ++c) {
      mask.at(r, c) = rect.contains(cell_center(r, c)) ? 1.0 : 0.0;
    }
  }
  return mask;
}

ActionChunk expert_chunk_toward(Vec2 from, Vec2 target, std::size_t horizon, double step_cap) {
  if (horizon == 0) throw UsageError("expert_chunk: horizon must be >= 1");
  const double dist = distance(from, target);
  const double spacing = step_cap > 0.0 ? step_cap : dist / static_cast<double>(horizon);
  ActionChunk chunk{Tensor(Shape{horizon, 2})};
  for (std::size_t k = 1; k <= horizon; ++k) {
    const double travel = static_cast<double>(k) * spacing;
    Vec2 w = target;
    if (travel < dist) {
      const double f = travel / dist;
      w = Vec2{from.x + f * (target.x - from.x), from.y + f * (target.y - from.y)};
    }
    chunk.waypoints.at(k - 1, 0) = std::clamp(w.x, 0.0, 1.0);
    chunk.waypoints.at(k - 1, 1) = std::clamp(w.y, 0.0, 1.0);
  }
  return chunk;
}

ActionChunk expert_chunk(const Scene& scene, const RobotState& state, std::size_t horizon,
                         double step_cap) {
  return expert_chunk_toward(state.position(), scene.success_target(), horizon, step_cap);
}

Demonstration make_demonstration(const Scene& scene, std::size_t horizon) {
  Demonstration demo;
  demo.scene = scene;
  demo.success_target = scene.success_target();
  RobotState state{to_f32(scene.gripper_start.x), to_f32(scene.gripper_start.y), 1.0};
  for (std::size_t t = 0; t < kMaxControlSteps; ++t) {
    Observation obs = render(scene, state, t);
    round_to_f32(obs.visual);
    ActionChunk chunk = expert_chunk(scene, state, horizon);
    round_to_f32(chunk.waypoints);
    demo.observations.push_back(std::move(obs));
    demo.action_chunks.push_back(chunk);
    if (state.position() == demo.success_target) break;
    state.x = chunk.waypoints.at(0, 0);
    state.y = chunk.waypoints.at(0, 1);
  }
  return demo;
}

}  // namespace affalign::world
