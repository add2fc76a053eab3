#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace mili::world {

inline constexpr std::size_t kFeatureDim = 6;
inline constexpr std::size_t kEffectorDim = 4;
// Per object slot: present, feature, x, y, held, activated.
inline constexpr std::size_t kSlotDim = 1 + kFeatureDim + 2 + 1 + 1;
inline constexpr std::size_t kActionDim = 4;

using TypeId = std::int32_t;
inline constexpr TypeId kNoTarget = -1;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 a);
double distance(Vec2 a, Vec2 b);

struct ObjectType {
  TypeId id = 0;
  std::array<double, kFeatureDim> feature{};
  bool pressable = false;
  bool graspable = false;
  double radius = 0.05;
};

struct SceneObject {
  TypeId type = 0;
  Vec2 position;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  Vec2 effector_start;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Effector {
  Vec2 position;
  double z = 1.0;         // 1 = fully up
  double aperture = 1.0;  // 1 = fully open
  friend bool operator==(const Effector&, const Effector&) = default;
};

struct ObjectState {
  Vec2 position;
  bool held = false;
  bool activated = false;  // latched once a pressable object has been pressed
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct WorldState {
  Effector effector;
  std::vector<ObjectState> objects;  // parallel to Scene::objects
  std::size_t t = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

using Observation = std::vector<double>;
using Action = std::array<double, kActionDim>;

enum class Family : std::uint8_t { press = 0, grasp = 1, push = 2, pick_place = 3 };
inline constexpr std::array<Family, 4> kFamilies = {Family::press, Family::grasp, Family::push,
                                                    Family::pick_place};

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);
bool has_target(Family family);

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

// Task identity is (family, subject, target); the split tag is metadata.
struct Task {
  Family family = Family::press;
  TypeId subject = 0;
  TypeId target = kNoTarget;
  Split split = Split::train;

  bool same_task(const Task& other) const {
    return family == other.family && subject == other.subject && target == other.target;
  }
  auto identity() const { return std::tuple(family, subject, target); }
};

std::string describe(const Task& task);

struct FilterResult {
  bool useful = false;
  std::vector<Task> achieved;
};

}  // namespace mili::world
