#pragma once

// Kinematic desk-scale manipulation world. The end-effector is a point that is
// displaced directly by the action; the gripper is a scalar openness in [0, 1].
//
// Observation layout (39): frame(t) | frame(t-1) | goal(3), where a frame is
//   ee(3) | openness(1) | obj1 pos(3) | obj1 quat(4) | obj2 pos(3) | obj2 quat(4).
// Workspace: x, y in [-1, 1], z in [0, 1].

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slrl/common.hpp"

namespace slrl::env {

enum class TaskId : std::uint8_t {
  WindowOpen = 0,
  WindowClose = 1,
  DrawerOpen = 2,
  DrawerClose = 3,
  PickPlace = 4,
  Push = 5,
  ButtonPress = 6,
};

inline constexpr std::array<TaskId, kNumTasks> kAllTasks{
    TaskId::WindowOpen, TaskId::WindowClose, TaskId::DrawerOpen, TaskId::DrawerClose,
    TaskId::PickPlace,  TaskId::Push,        TaskId::ButtonPress};

std::string_view task_name(TaskId task);
/// Accepts the names produced by task_name (case-insensitive) and integer codes.
TaskId parse_task(std::string_view text);
TaskId task_from_index(int index);
inline int task_index(TaskId task) { return static_cast<int>(task); }

using Vec3 = std::array<double, 3>;
using Observation = std::array<double, kObsDim>;
using Frame = std::array<double, kFrameDim>;

struct Action {
  Vec3 delta{0.0, 0.0, 0.0};
  double gripper = 0.0;  // torque command; positive closes

  static Action from_span(std::span<const double> values);
  [[nodiscard]] std::array<double, kActionDim> as_array() const { return {delta[0], delta[1], delta[2], gripper}; }
};

struct EnvConfig {
  int horizon = 200;
  /// Radius of the novelty offset ball; 0 reproduces the base layout.
  double novelty_radius = 0.3;
  double max_step = 0.05;
  double contact_radius = 0.06;
  double success_threshold = 0.05;
  std::uint64_t seed = 0;
  /// When false, success no longer ends the episode (only the horizon does). Not persisted.
  bool terminate_on_success = true;

  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

inline constexpr Vec3 kWorkspaceLow{-1.0, -1.0, 0.0};
inline constexpr Vec3 kWorkspaceHigh{1.0, 1.0, 1.0};
inline constexpr double kGraspClose = 0.35;
inline constexpr double kGraspRelease = 0.65;
inline constexpr double kGripperRate = 0.04;
inline constexpr double kRailLength = 0.2;
inline constexpr double kButtonTravel = 0.03;
inline constexpr double kButtonPressedDepth = 0.02;
inline constexpr double kArticulationTolerance = 0.02;

struct EnvState {
  TaskId task = TaskId::ButtonPress;
  Vec3 ee{0.0, 0.0, 0.0};
  double gripper_openness = 1.0;
  // Movable object position (PickPlace/Push) or current handle/button-top position.
  Vec3 entity{0.0, 0.0, 0.0};
  // Entity position at articulation coordinate 0 (rail origin); unused for free objects.
  Vec3 fixture_origin{0.0, 0.0, 0.0};
  // Slide along the rail (window, drawer) or button depth.
  double articulation = 0.0;
  double articulation_target = 0.0;
  Vec3 goal{0.0, 0.0, 0.0};
  Vec3 novelty_offset{0.0, 0.0, 0.0};
  bool attached = false;
  int step_count = 0;
  int horizon = 200;
  bool done = false;
  Frame previous_frame{};

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

struct ResetResult {
  EnvState state;
  Observation observation{};
};

/// Base layout with no novelty; the ee starts at kEeStart with the gripper open.
EnvState base_layout(TaskId task, int horizon);
inline constexpr Vec3 kEeStart{0.0, 0.0, 0.2};

/// Uniform draw from the closed ball of the given radius.
Vec3 sample_ball(double radius, Rng& rng);

ResetResult reset(TaskId task, const EnvConfig& config, Rng& rng);
/// Advances `state` in place. Throws ContractViolation if the episode is already done.
StepResult step(EnvState& state, const Action& action, const EnvConfig& config);

Frame current_frame(const EnvState& state);
Observation observe(const EnvState& state);

/// Distance from the ee to the task's interaction point.
double reach_distance(const EnvState& state);
/// Task progress distance: entity-to-goal or articulation-to-target.
double goal_distance(const EnvState& state);
/// (1 - tanh(10 d_reach)) + 2 (1 - tanh(10 d_goal)) + 10 [success]
double shaped_reward(double reach, double goal, bool success);
double reward(TaskId task, const EnvState& state, const EnvConfig& config);
bool success(TaskId task, const EnvState& state, const EnvConfig& config);

Observation mask_goal(const Observation& obs);

/// Hand-coded controller that solves each task from any reachable layout.
Action scripted_action(const EnvState& state, const EnvConfig& config);

struct TrajectoryRow {
  int step = 0;
  Observation observation{};
  std::array<double, kActionDim> action{};
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

// CSV columns: step, obs_0..obs_38, act_0..act_3, reward, done, success.
// Row k holds the observation the action was chosen from and the outcome of that step.
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows);
std::string trajectory_csv_header();

}  // namespace slrl::env
