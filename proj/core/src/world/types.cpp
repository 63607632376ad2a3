#include "affalign/world/types.hpp"

#include <algorithm>
#include <cmath>

#include "affalign/common/error.hpp"

namespace affalign::world {

std::string_view name(PartKind k) {
  switch (k) {
    case PartKind::kHandle: return "handle";
    case PartKind::kHead: return "head";
    case PartKind::kBlade: return "blade";
    case PartKind::kBody: return "body";
    case PartKind::kOpening: return "opening";
  }
  return "?";
}

std::string_view name(ObjectKind k) {
  switch (k) {
    case ObjectKind::kHammer: return "hammer";
    case ObjectKind::kKnife: return "knife";
    case ObjectKind::kSkillet: return "skillet";
    case ObjectKind::kCan: return "can";
    case ObjectKind::kMarker: return "marker";
  }
  return "?";
}

std::string_view name(Verb v) {
  switch (v) {
    case Verb::kGrasp: return "grasp";
    case Verb::kStrike: return "strike";
    case Verb::kCut: return "cut";
    case Verb::kPlaceInto: return "place_into";
    case Verb::kPour: return "pour";
  }
  return "?";
}

std::string_view name(Difficulty d) { return d == Difficulty::kEasy ? "easy" : "hard"; }

std::optional<Difficulty> parse_difficulty(std::string_view s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "hard") return Difficulty::kHard;
  return std::nullopt;
}

std::array<PartKind, 2> parts_of(ObjectKind k) {
  switch (k) {
    case ObjectKind::kHammer: return {PartKind::kHandle, PartKind::kHead};
    case ObjectKind::kKnife: return {PartKind::kHandle, PartKind::kBlade};
    case ObjectKind::kSkillet: return {PartKind::kHandle, PartKind::kOpening};
    case ObjectKind::kCan: return {PartKind::kBody, PartKind::kOpening};
    case ObjectKind::kMarker: return {PartKind::kBody, PartKind::kHead};
  }
  throw UsageError("unknown object kind");
}

PartKind part_for_verb(Verb v) {
  switch (v) {
    case Verb::kGrasp: return PartKind::kHandle;
    case Verb::kStrike: return PartKind::kHead;
    case Verb::kCut: return PartKind::kBlade;
    case Verb::kPlaceInto: return PartKind::kOpening;
    case Verb::kPour: return PartKind::kOpening;
  }
  throw UsageError("unknown verb");
}

std::optional<PartKind> affordance_part(Verb v, ObjectKind k) {
  const PartKind part = part_for_verb(v);
  const auto parts = parts_of(k);
  if (parts[0] == part || parts[1] == part) return part;
  return std::nullopt;
}

const std::vector<std::pair<Verb, ObjectKind>>& supported_tasks() {
  static const std::vector<std::pair<Verb, ObjectKind>> tasks = [] {
    std::vector<std::pair<Verb, ObjectKind>> out;
    for (std::size_t o = 0; o < kObjectKinds; ++o) {
      for (std::size_t v = 0; v < kVerbs; ++v) {
        const auto verb = static_cast<Verb>(v);
        const auto obj = static_cast<ObjectKind>(o);
        if (affordance_part(verb, obj)) out.emplace_back(verb, obj);
      }
    }
    return out;
  }();
  return tasks;
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool Rect::contains(Vec2 p) const {
  return std::abs(p.x - cx) <= hx && std::abs(p.y - cy) <= hy;
}

double Rect::distance_to(Vec2 p) const {
  const double dx = std::max(0.0, std::abs(p.x - cx) - hx);
  const double dy = std::max(0.0, std::abs(p.y - cy) - hy);
  return std::hypot(dx, dy);
}

namespace {

// Closed vocabulary. Ids below 32 are words; the rest of the table is unused
// headroom for the embedding.
enum Token : std::uint16_t {
  kPad = 0,
  kBos = 1,
  kEos = 2,
  kThe = 3,
  kWith = 4,
  kInto = 5,
  kIt = 6,
  kVerbBase = 10,
  kObjectBase = 20,
};

}  // namespace

InstructionTokens tokenize(Verb v, ObjectKind k) {
  if (!affordance_part(v, k)) {
    throw UnsupportedTaskError("no affordance for '" + task_name(v, k) + "'");
  }
  const auto verb = static_cast<std::uint16_t>(kVerbBase + static_cast<int>(v));
  const auto obj = static_cast<std::uint16_t>(kObjectBase + static_cast<int>(k));
  std::vector<std::uint16_t> words;
  switch (v) {
    case Verb::kGrasp: words = {kBos, verb, kThe, obj, kEos}; break;
    case Verb::kStrike:
    case Verb::kCut: words = {kBos, verb, kWith, kThe, obj, kEos}; break;
    case Verb::kPlaceInto: words = {kBos, verb, kIt, kInto, kThe, obj, kEos}; break;
    case Verb::kPour: words = {kBos, verb, kInto, kThe, obj, kEos}; break;
  }
  InstructionTokens tokens{};
  std::copy(words.begin(), words.end(), tokens.begin());
  return tokens;
}

std::string task_name(Verb v, ObjectKind k) {
  return std::string(name(v)) + "_" + std::string(name(k));
}

const ObjectInstance& Scene::target_object() const {
  for (const auto& o : objects) {
    if (!o.is_distractor && o.kind == task.object) return o;
  }
  throw UsageError("scene has no target object");
}

const Part& Scene::target_part() const {
  const auto part = affordance_part(task.verb, task.object);
  if (!part) throw UnsupportedTaskError("scene task has no affordance");
  for (const auto& p : target_object().parts) {
    if (p.kind == *part) return p;
  }
  throw UsageError("target object lacks its affordance part");
}

}  // namespace affalign::world
