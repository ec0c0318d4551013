#include "grasp/controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grasp/errors.hpp"

namespace grasp {

namespace {

constexpr float kPi = 3.14159265358979323846f;

float map_max(const ActivationMap& map) {
  return *std::max_element(map.values.begin(), map.values.end());
}

// True when (value, angle) beats the incumbent: higher maximum, then
// smaller |angle|, then negative over positive.
bool beats(float value, float angle, float best_value, float best_angle) {
  if (value != best_value) return value > best_value;
  const float a = std::fabs(angle), b = std::fabs(best_angle);
  if (a != b) return a < b;
  return angle < best_angle;
}

// Scans the rotation set in order; fills map0 with the unrotated map when
// the set contains angle 0.
float scan_rotations(const GraspNetParams& params, const Image& frame,
                     const std::vector<float>& rotation_set_deg,
                     ActivationMap* map0) {
  const float cx = frame.width / 2.0f, cy = frame.height / 2.0f;
  float best_angle = 0.0f;
  float best_value = 0.0f;
  bool have_best = false;
  for (const float angle : rotation_set_deg) {
    ActivationMap map;
    if (angle == 0.0f) {
      map = forward_full(params, image_to_chw(frame));
    } else {
      map = forward_full(params,
                         image_to_chw(rotate_image(frame, angle, cx, cy)));
    }
    const float value = map_max(map);
    if (!have_best || beats(value, angle, best_value, best_angle)) {
      have_best = true;
      best_value = value;
      best_angle = angle;
    }
    if (angle == 0.0f && map0 != nullptr) *map0 = std::move(map);
  }
  return best_angle;
}

const char* action_name(const ControlCommand& cmd) {
  if (cmd.grasp) return "grasp";
  return cmd.dyaw_rad != 0.0f ? "rotate" : "translate";
}

}  // namespace

void validate_controller_config(const ControllerConfig& cfg) {
  if (!(cfg.gain_mm_per_px > 0.0f)) {
    throw ConfigError("controller gain must be positive");
  }
  if (!(cfg.max_step_mm > 0.0f)) {
    throw ConfigError("controller max_step_mm must be positive");
  }
  if (!(cfg.center_tol_px > 0.0f)) {
    throw ConfigError("controller center_tol_px must be positive");
  }
  if (!(cfg.rotation_step_deg > 0.0f)) {
    throw ConfigError("controller rotation_step_deg must be positive");
  }
  if (cfg.max_steps < 0) {
    throw ConfigError("controller max_steps must be >= 0");
  }
  if (cfg.rotation_set_deg.empty() ||
      std::find(cfg.rotation_set_deg.begin(), cfg.rotation_set_deg.end(),
                0.0f) == cfg.rotation_set_deg.end()) {
    throw ConfigError("controller rotation set must contain angle 0");
  }
  if (cfg.max_offset_mm < 0.0f || cfg.max_yaw_deg < 0.0f) {
    throw ConfigError("controller perturbation bounds must be >= 0");
  }
  if (!(cfg.pos_tol_mm > 0.0f) || !(cfg.yaw_tol_deg > 0.0f)) {
    throw ConfigError("controller grasp tolerances must be positive");
  }
  if (!(cfg.lost_threshold >= 0.0f) || cfg.lost_patience < 1) {
    throw ConfigError("controller lost-target rule must use a non-negative "
                      "threshold and patience >= 1");
  }
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kGrasped: return "grasped";
    case Termination::kMaxSteps: return "max_steps";
    case Termination::kLostTarget: return "lost_target";
  }
  return "unknown";
}

void compute_direction(const ActivationMap& map, float* dx_px, float* dy_px) {
  int best = 0;
  for (int idx = 1; idx < static_cast<int>(map.values.size()); ++idx) {
    if (map.values[idx] > map.values[best]) best = idx;
  }
  const int i = best / map.cols, j = best % map.cols;
  *dx_px = static_cast<float>(map.pixel_x(j)) - map.input_w / 2.0f;
  *dy_px = static_cast<float>(map.pixel_y(i)) - map.input_h / 2.0f;
}

float rotation_search(const GraspNetParams& params, const Image& frame,
                      const std::vector<float>& rotation_set_deg) {
  if (rotation_set_deg.empty()) {
    throw ConfigError("rotation_search needs a non-empty rotation set");
  }
  return scan_rotations(params, frame, rotation_set_deg, nullptr);
}

ControlCommand command_from(const ControllerConfig& cfg,
                            float best_rotation_deg, float dx_px,
                            float dy_px) {
  ControlCommand cmd;
  if (best_rotation_deg != 0.0f) {
    const float sign = best_rotation_deg > 0.0f ? 1.0f : -1.0f;
    cmd.dyaw_rad = sign * cfg.rotation_step_deg * kPi / 180.0f;
    return cmd;
  }
  if (std::hypot(dx_px, dy_px) > cfg.center_tol_px) {
    float mx = cfg.gain_mm_per_px * dx_px;
    float my = cfg.gain_mm_per_px * dy_px;
    const float mag = std::hypot(mx, my);
    if (mag > cfg.max_step_mm) {
      const float scale = cfg.max_step_mm / mag;
      mx *= scale;
      my *= scale;
    }
    cmd.dx_mm = mx;
    cmd.dy_mm = my;
    return cmd;
  }
  cmd.grasp = true;
  return cmd;
}

ControlCommand step(const GraspNetParams& params, const Image& frame,
                    const ControllerConfig& cfg) {
  ActivationMap map0;
  const float best = scan_rotations(params, frame, cfg.rotation_set_deg, &map0);
  float dx = 0.0f, dy = 0.0f;
  compute_direction(map0, &dx, &dy);
  return command_from(cfg, best, dx, dy);
}

EpisodeResult run_episode(const WorkspaceState& ws,
                          const GraspNetParams& params, int target_id,
                          const ControllerConfig& cfg, Rng& rng) {
  validate_controller_config(cfg);
  validate_params(params);
  const Block& target = find_block(ws, target_id);
  CameraPose cam{target.x_mm, target.y_mm, target.yaw_rad};
  const WorkspaceState world =
      perturb(ws, target_id, rng, cfg.max_offset_mm, cfg.max_yaw_deg);

  EpisodeResult res;
  int lost_streak = 0;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const Image frame = render(world, cam);
    ActivationMap map0;
    const float best = scan_rotations(params, frame, cfg.rotation_set_deg, &map0);
    float dx = 0.0f, dy = 0.0f;
    compute_direction(map0, &dx, &dy);
    const ControlCommand cmd = command_from(cfg, best, dx, dy);
    const float peak = map_max(map0);
    res.trajectory.push_back({cam, peak, cmd});
    res.steps = t + 1;
    if (cmd.grasp) {
      res.termination = Termination::kGrasped;
      res.success =
          check_grasp(world, target_id, cam, cfg.pos_tol_mm, cfg.yaw_tol_deg);
      return res;
    }
    lost_streak = peak < cfg.lost_threshold ? lost_streak + 1 : 0;
    if (lost_streak >= cfg.lost_patience) {
      res.termination = Termination::kLostTarget;
      return res;
    }
    // Camera-frame move into world coordinates: w = cam + R(-yaw) * v.
    const float c = std::cos(cam.yaw_rad), s = std::sin(cam.yaw_rad);
    cam.x_mm += cmd.dx_mm * c + cmd.dy_mm * s;
    cam.y_mm += -cmd.dx_mm * s + cmd.dy_mm * c;
    cam.yaw_rad += cmd.dyaw_rad;
  }
  res.termination = Termination::kMaxSteps;
  return res;
}

void save_trajectory(const EpisodeResult& result, const std::string& path) {
  std::ostringstream out;
  out << "step,x_mm,y_mm,yaw_rad,argmax_value,action\n";
  char row[160];
  for (int i = 0; i < static_cast<int>(result.trajectory.size()); ++i) {
    const TrajectoryPoint& p = result.trajectory[i];
    std::snprintf(row, sizeof(row), "%d,%.6f,%.6f,%.6f,%.6f,%s\n", i,
                  static_cast<double>(p.pose.x_mm),
                  static_cast<double>(p.pose.y_mm),
                  static_cast<double>(p.pose.yaw_rad),
                  static_cast<double>(p.map_max), action_name(p.command));
    out << row;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw NotFoundError("cannot open " + tmp + " for writing");
    f << out.str();
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace grasp
