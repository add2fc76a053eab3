#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mili/world/types.hpp"

namespace mili::world {

struct WorldConfig {
  std::size_t vocabulary_size = 30;
  std::size_t train_type_count = 20;
  std::uint64_t world_seed = 0;
  std::size_t object_slots = 4;

  std::size_t train_tasks = 80;
  std::size_t val_tasks = 10;
  std::size_t test_tasks = 10;

  std::size_t horizon = 60;
  double max_action = 0.1;

  double low_height = 0.3;        // grasping and pushing happen below this z
  double effector_radius = 0.03;  // contact disc for pushing
  double grasp_margin = 0.03;
  double press_margin = 0.02;
  double press_height = 0.15;
  double place_tolerance = 0.05;
  double grasp_displacement = 0.1;

  double separation = 0.02;            // extra clearance between sampled objects
  double task_pair_separation = 0.15;  // extra clearance between subject and target
  double workspace_margin = 0.15;      // object centers lie in [margin, 1 - margin]
  double radius_min = 0.04;
  double radius_max = 0.06;
  std::size_t min_objects = 2;
  std::size_t max_distractors = 2;
  std::size_t placement_attempts = 2000;
};

// Throws Error(config) naming the first invalid field.
void validate(const WorldConfig& config);

struct TaskSets {
  std::vector<Task> train;
  std::vector<Task> val;
  std::vector<Task> test;
};

// Kinematic tabletop world. Immutable after construction; all methods are
// const and safe to call concurrently.
class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const noexcept { return config_; }
  const std::vector<ObjectType>& vocabulary() const noexcept { return vocabulary_; }
  const ObjectType& type(TypeId id) const;
  bool is_train_type(TypeId id) const;
  std::vector<TypeId> types_for(Split split) const;

  std::size_t observation_dim() const noexcept;
  std::size_t object_channels() const noexcept { return config_.object_slots * kSlotDim; }

  TaskSets generate_task_sets(std::uint64_t seed) const;
  Scene sample_scene(const Task& task, std::uint64_t seed) const;

  WorldState initial_state(const Scene& scene) const;
  WorldState step(const WorldState& state, const Scene& scene, const Action& action) const;
  Observation observe(const WorldState& state, const Scene& scene) const;

  bool check_success(std::span<const WorldState> states, const Scene& scene, const Task& task) const;
  // Every task instantiable from the scene's objects.
  std::vector<Task> enumerate_tasks(const Scene& scene) const;
  FilterResult filter(std::span<const WorldState> states, const Scene& scene) const;

  // Index of the scene object with the given type; throws Error(world) if absent.
  std::size_t object_index(const Scene& scene, TypeId type) const;

 private:
  WorldConfig config_;
  std::vector<ObjectType> vocabulary_;
};

}  // namespace mili::world
