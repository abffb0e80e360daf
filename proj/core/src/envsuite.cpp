#include "slrl/envsuite.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "slrl/text.hpp"

namespace slrl::env {

namespace {

constexpr std::array<std::string_view, kNumTasks> kTaskNames{
    "WindowOpen", "WindowClose", "DrawerOpen", "DrawerClose", "PickPlace", "Push", "ButtonPress"};

// Novelty never pushes anchors outside this box so every displaced layout stays solvable.
constexpr Vec3 kPlacementLow{-0.9, -0.9, 0.05};
constexpr Vec3 kPlacementHigh{0.9, 0.9, 0.9};

constexpr double kTableHeight = 0.02;

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }
double distance(const Vec3& a, const Vec3& b) { return norm(sub(a, b)); }

Vec3 clamp_workspace(const Vec3& p) {
  return {std::clamp(p[0], kWorkspaceLow[0], kWorkspaceHigh[0]), std::clamp(p[1], kWorkspaceLow[1], kWorkspaceHigh[1]),
          std::clamp(p[2], kWorkspaceLow[2], kWorkspaceHigh[2])};
}

bool is_window(TaskId t) { return t == TaskId::WindowOpen || t == TaskId::WindowClose; }
bool is_drawer(TaskId t) { return t == TaskId::DrawerOpen || t == TaskId::DrawerClose; }
bool is_object(TaskId t) { return t == TaskId::PickPlace || t == TaskId::Push; }

// Unit direction of the articulation axis; entity = origin + articulation * axis.
Vec3 articulation_axis(TaskId t) {
  if (is_window(t)) return {1.0, 0.0, 0.0};
  if (is_drawer(t)) return {0.0, -1.0, 0.0};
  return {0.0, 0.0, -1.0};  // button
}

double articulation_limit(TaskId t) { return t == TaskId::ButtonPress ? kButtonTravel : kRailLength; }

void sync_entity(EnvState& s) {
  if (!is_object(s.task)) s.entity = add(s.fixture_origin, scale(articulation_axis(s.task), s.articulation));
}

// Points that must stay inside the placement box after a novelty shift.
std::vector<Vec3> anchors(const EnvState& s) {
  if (is_object(s.task)) return {s.entity, s.goal};
  return {s.fixture_origin, add(s.fixture_origin, scale(articulation_axis(s.task), articulation_limit(s.task))),
          s.goal};
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

std::string_view task_name(TaskId task) { return kTaskNames.at(static_cast<std::size_t>(task)); }

TaskId task_from_index(int index) {
  if (index < 0 || index >= kNumTasks) {
    throw ConfigError("task index " + std::to_string(index) + " out of range [0, 7)");
  }
  return static_cast<TaskId>(index);
}

TaskId parse_task(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const std::string needle = lower(text);
  for (int i = 0; i < kNumTasks; ++i) {
    if (lower(kTaskNames[static_cast<std::size_t>(i)]) == needle || std::to_string(i) == needle) {
      return static_cast<TaskId>(i);
    }
  }
  throw ConfigError("unknown task '" + std::string(text) + "'");
}

Action Action::from_span(std::span<const double> values) {
  if (values.size() != kActionDim) throw ConfigError("action must have 4 components");
  return Action{{values[0], values[1], values[2]}, values[3]};
}

void EnvConfig::validate() const {
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  if (novelty_radius < 0.0) throw ConfigError("novelty_radius must be >= 0");
  if (max_step <= 0.0 || contact_radius <= 0.0 || success_threshold <= 0.0) {
    throw ConfigError("max_step, contact_radius and success_threshold must be positive");
  }
}

EnvState base_layout(TaskId task, int horizon) {
  EnvState s;
  s.task = task;
  s.ee = kEeStart;
  s.gripper_openness = 1.0;
  s.horizon = horizon;
  switch (task) {
    case TaskId::WindowOpen:
    case TaskId::WindowClose:
      s.fixture_origin = {-0.1, 0.15, 0.2};
      s.articulation = task == TaskId::WindowOpen ? 0.0 : kRailLength;
      s.articulation_target = task == TaskId::WindowOpen ? kRailLength : 0.0;
      break;
    case TaskId::DrawerOpen:
    case TaskId::DrawerClose:
      s.fixture_origin = {0.0, 0.2, 0.1};
      s.articulation = task == TaskId::DrawerOpen ? 0.0 : kRailLength;
      s.articulation_target = task == TaskId::DrawerOpen ? kRailLength : 0.0;
      break;
    case TaskId::ButtonPress:
      s.fixture_origin = {0.1, 0.15, 0.12};
      s.articulation = 0.0;
      s.articulation_target = kButtonPressedDepth;
      break;
    case TaskId::PickPlace:
      s.entity = {0.0, 0.15, kTableHeight};
      s.goal = {0.1, 0.25, 0.2};
      break;
    case TaskId::Push:
      s.entity = {0.0, 0.15, kTableHeight};
      s.goal = {0.15, 0.3, kTableHeight};
      break;
  }
  if (!is_object(task)) {
    s.goal = add(s.fixture_origin, scale(articulation_axis(task), s.articulation_target));
    sync_entity(s);
  }
  s.previous_frame = current_frame(s);
  return s;
}

Vec3 sample_ball(double radius, Rng& rng) {
  if (radius <= 0.0) return {0.0, 0.0, 0.0};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 dir{normal(rng), normal(rng), normal(rng)};
  double n = norm(dir);
  while (n < 1e-12) {
    dir = {normal(rng), normal(rng), normal(rng)};
    n = norm(dir);
  }
  const double r = radius * std::cbrt(unit(rng));
  Vec3 out = scale(dir, r / n);
  // Guard against rounding pushing the norm a hair past the radius.
  const double len = norm(out);
  if (len > radius) out = scale(out, radius / len);
  return out;
}

ResetResult reset(TaskId task, const EnvConfig& config, Rng& rng) {
  config.validate();
  EnvState s = base_layout(task, config.horizon);
  if (config.novelty_radius > 0.0) {
    Vec3 offset = sample_ball(config.novelty_radius, rng);
    if (is_object(task)) offset[2] = 0.0;  // objects stay on the table
    // Per-axis projection: shrinking components can only reduce the norm.
    for (const Vec3& p : anchors(s)) {
      for (int c = 0; c < 3; ++c) {
        if (is_object(task) && c == 2) continue;
        offset[c] = std::clamp(offset[c], kPlacementLow[c] - p[c], kPlacementHigh[c] - p[c]);
      }
    }
    s.novelty_offset = offset;
    if (is_object(task)) {
      s.entity = add(s.entity, offset);
    } else {
      s.fixture_origin = add(s.fixture_origin, offset);
      sync_entity(s);
    }
    s.goal = add(s.goal, offset);
  }
  s.previous_frame = current_frame(s);
  return {s, observe(s)};
}

Frame current_frame(const EnvState& s) {
  Frame f{};
  f[0] = s.ee[0];
  f[1] = s.ee[1];
  f[2] = s.ee[2];
  f[3] = s.gripper_openness;
  f[4] = s.entity[0];
  f[5] = s.entity[1];
  f[6] = s.entity[2];
  f[7] = 1.0;  // identity quaternion (w, x, y, z)
  // obj2 position stays zero
  f[14] = 1.0;
  return f;
}

Observation observe(const EnvState& s) {
  Observation obs{};
  const Frame now = current_frame(s);
  std::copy(now.begin(), now.end(), obs.begin());
  std::copy(s.previous_frame.begin(), s.previous_frame.end(), obs.begin() + kFrameDim);
  obs[kGoalOffset + 0] = s.goal[0];
  obs[kGoalOffset + 1] = s.goal[1];
  obs[kGoalOffset + 2] = s.goal[2];
  return obs;
}

StepResult step(EnvState& s, const Action& action, const EnvConfig& config) {
  if (s.done || s.step_count >= s.horizon) {
    throw ContractViolation("step called on a finished episode");
  }
  const Frame before = current_frame(s);
  const Vec3 delta{clamp_unit(action.delta[0]), clamp_unit(action.delta[1]), clamp_unit(action.delta[2])};
  const double tau = clamp_unit(action.gripper);

  const Vec3 old_ee = s.ee;
  const Vec3 new_ee = clamp_workspace(add(old_ee, scale(delta, config.max_step)));
  const Vec3 moved = sub(new_ee, old_ee);
  const bool in_contact = distance(old_ee, s.entity) < config.contact_radius;

  switch (s.task) {
    case TaskId::WindowOpen:
    case TaskId::WindowClose:
      if (in_contact) s.articulation = std::clamp(s.articulation + moved[0], 0.0, kRailLength);
      break;
    case TaskId::DrawerOpen:
    case TaskId::DrawerClose:
      if (in_contact) {
        double slide = -moved[1];
        // Pulling the drawer open needs a closed grip; pushing it shut does not.
        if (slide > 0.0 && s.gripper_openness >= kGraspClose) slide = 0.0;
        s.articulation = std::clamp(s.articulation + slide, 0.0, kRailLength);
      }
      break;
    case TaskId::ButtonPress:
      if (in_contact && moved[2] < 0.0) s.articulation = std::clamp(s.articulation - moved[2], 0.0, kButtonTravel);
      break;
    case TaskId::PickPlace:
    case TaskId::Push:
      if (s.attached) {
        s.entity = clamp_workspace(add(s.entity, moved));
      } else if (in_contact) {
        s.entity = clamp_workspace({s.entity[0] + moved[0], s.entity[1] + moved[1], s.entity[2]});
      }
      break;
  }
  sync_entity(s);

  s.ee = new_ee;
  s.gripper_openness = std::clamp(s.gripper_openness - tau * kGripperRate, 0.0, 1.0);

  if (is_object(s.task)) {
    if (!s.attached && s.gripper_openness < kGraspClose && distance(s.ee, s.entity) < config.contact_radius) {
      s.attached = true;
    } else if (s.attached && s.gripper_openness > kGraspRelease) {
      s.attached = false;
    }
  }

  s.previous_frame = before;
  ++s.step_count;

  StepResult out;
  out.success = success(s.task, s, config);
  out.done = (out.success && config.terminate_on_success) || s.step_count >= s.horizon;
  out.reward = reward(s.task, s, config);
  out.observation = observe(s);
  s.done = out.done;
  return out;
}

double reach_distance(const EnvState& s) { return distance(s.ee, s.entity); }

double goal_distance(const EnvState& s) {
  if (is_object(s.task)) return distance(s.entity, s.goal);
  if (s.task == TaskId::ButtonPress) return std::max(0.0, kButtonPressedDepth - s.articulation);
  return std::abs(s.articulation - s.articulation_target);
}

double shaped_reward(double reach, double goal, bool succeeded) {
  return (1.0 - std::tanh(10.0 * reach)) + 2.0 * (1.0 - std::tanh(10.0 * goal)) + (succeeded ? 10.0 : 0.0);
}

double reward(TaskId task, const EnvState& s, const EnvConfig& config) {
  (void)task;
  return shaped_reward(reach_distance(s), goal_distance(s), success(s.task, s, config));
}

bool success(TaskId task, const EnvState& s, const EnvConfig& config) {
  switch (task) {
    case TaskId::PickPlace:
    case TaskId::Push:
      return distance(s.entity, s.goal) < config.success_threshold;
    case TaskId::ButtonPress:
      return s.articulation >= kButtonPressedDepth;
    default:
      return std::abs(s.articulation - s.articulation_target) < kArticulationTolerance;
  }
}

Observation mask_goal(const Observation& obs) {
  Observation out = obs;
  out[kGoalOffset] = 0.0;
  out[kGoalOffset + 1] = 0.0;
  out[kGoalOffset + 2] = 0.0;
  return out;
}

Action scripted_action(const EnvState& s, const EnvConfig& config) {
  auto toward = [&](const Vec3& target) {
    const Vec3 d = sub(target, s.ee);
    return Vec3{clamp_unit(d[0] / config.max_step), clamp_unit(d[1] / config.max_step),
                clamp_unit(d[2] / config.max_step)};
  };
  const bool engaged = reach_distance(s) < 0.75 * config.contact_radius;
  Action a;
  switch (s.task) {
    case TaskId::WindowOpen:
    case TaskId::WindowClose:
    case TaskId::ButtonPress:
    case TaskId::DrawerClose: {
      if (!engaged) {
        a.delta = toward(s.entity);
      } else {
        const double remaining =
            s.task == TaskId::ButtonPress ? kButtonTravel - s.articulation : s.articulation_target - s.articulation;
        a.delta = toward(add(s.ee, scale(articulation_axis(s.task), remaining)));
      }
      break;
    }
    case TaskId::DrawerOpen: {
      a.gripper = 1.0;
      if (!engaged) {
        a.delta = toward(s.entity);
      } else if (s.gripper_openness < kGraspClose) {
        a.delta = toward(add(s.ee, scale(articulation_axis(s.task), s.articulation_target - s.articulation)));
      }
      break;
    }
    case TaskId::PickPlace: {
      if (s.attached) {
        a.gripper = 1.0;
        a.delta = toward(add(s.ee, sub(s.goal, s.entity)));
      } else if (!engaged) {
        a.gripper = -1.0;
        a.delta = toward(s.entity);
      } else {
        a.gripper = 1.0;
      }
      break;
    }
    case TaskId::Push: {
      if (!engaged) {
        a.delta = toward(s.entity);
      } else {
        Vec3 push = sub(s.goal, s.entity);
        push[2] = 0.0;
        a.delta = toward(add(s.ee, push));
      }
      break;
    }
  }
  return a;
}

std::string trajectory_csv_header() {
  std::string h = "step";
  for (int i = 0; i < kObsDim; ++i) h += ",obs_" + std::to_string(i);
  for (int i = 0; i < kActionDim; ++i) h += ",act_" + std::to_string(i);
  h += ",reward,done,success";
  return h;
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows) {
  out << trajectory_csv_header() << '\n';
  for (const auto& row : rows) {
    out << row.step;
    for (double v : row.observation) out << ',' << format_double(v);
    for (double v : row.action) out << ',' << format_double(v);
    out << ',' << format_double(row.reward) << ',' << (row.done ? 1 : 0) << ',' << (row.success ? 1 : 0) << '\n';
  }
}

}  // namespace slrl::env
