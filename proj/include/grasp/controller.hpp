#pragma once

#include <string>
#include <vector>

#include "grasp/augment.hpp"
#include "grasp/graspnet.hpp"
#include "grasp/image.hpp"
#include "grasp/rng.hpp"
#include "grasp/sim.hpp"

namespace grasp {

// Closed-loop grasp controller: rotate until the unrotated view activates
// strongest, translate toward the activation argmax, grasp once centered.
struct ControllerConfig {
  float gain_mm_per_px = 0.5f;  // pixel error -> mm move
  float max_step_mm = 20.0f;    // translation clamp per step
  float center_tol_px = 8.0f;   // half a map cell
  std::vector<float> rotation_set_deg = {-50.0f, -40.0f, -30.0f, -20.0f,
                                         -10.0f, 0.0f,   10.0f,  20.0f,
                                         30.0f,  40.0f,  50.0f};
  float rotation_step_deg = 10.0f;  // yaw applied per rotate command
  int max_steps = 200;

  // Episode setup: the target is displaced inside this disc / yaw range
  // before the first render.
  float max_offset_mm = 80.0f;
  float max_yaw_deg = 0.0f;

  // Grasp scoring tolerances, forwarded to check_grasp.
  float pos_tol_mm = 10.0f;
  float yaw_tol_deg = 15.0f;

  // Abort as lost_target after lost_patience consecutive frames whose map
  // maximum stays below lost_threshold.
  float lost_threshold = 0.5f;
  int lost_patience = 10;
};

// Throws ConfigError on non-positive gains/tolerances, a rotation set
// missing the 0 entry, or negative budgets.
void validate_controller_config(const ControllerConfig& cfg);

// Camera-frame move (pixel axes, 1 px = 1 mm) plus yaw change. A grasp
// command carries zero motion.
struct ControlCommand {
  float dx_mm = 0.0f, dy_mm = 0.0f;
  float dyaw_rad = 0.0f;
  bool grasp = false;
};

enum class Termination { kGrasped, kMaxSteps, kLostTarget };

// "grasped" | "max_steps" | "lost_target"
const char* termination_name(Termination t);

struct TrajectoryPoint {
  CameraPose pose;       // pose the frame was rendered from
  float map_max = 0.0f;  // unrotated map maximum at that pose
  ControlCommand command;
};

struct EpisodeResult {
  bool success = false;
  int steps = 0;
  Termination termination = Termination::kMaxSteps;
  std::vector<TrajectoryPoint> trajectory;
};

// Vector from the image center to the argmax cell's receptive-field center,
// in pixels; ties pick the smallest row-major cell index.
void compute_direction(const ActivationMap& map, float* dx_px, float* dy_px);

// Angle whose rotated view (about the frame center) yields the highest map
// maximum; ties prefer the smallest |angle|, then negative over positive.
// Scans rotation_set_deg in order.
float rotation_search(const GraspNetParams& params, const Image& frame,
                      const std::vector<float>& rotation_set_deg);

// Decision rule on precomputed quantities: rotate while best_rotation_deg
// is nonzero, translate while the argmax sits outside center_tol_px,
// otherwise grasp. Pure; exposed for direct testing.
ControlCommand command_from(const ControllerConfig& cfg,
                            float best_rotation_deg, float dx_px,
                            float dy_px);

// One controller decision: rotation scan, then direction from the
// unrotated map.
ControlCommand step(const GraspNetParams& params, const Image& frame,
                    const ControllerConfig& cfg);

// Runs one grasp episode. The camera starts on the target's pose recorded
// in `ws` (its demonstration pose); the target is then perturbed via `rng`
// and the control loop runs until a grasp command (check_grasp decides
// success), lost_target, or the step budget. Raises NotFoundError for an
// unknown target and PlacementError when the perturbation cannot be placed.
EpisodeResult run_episode(const WorkspaceState& ws,
                          const GraspNetParams& params, int target_id,
                          const ControllerConfig& cfg, Rng& rng);

// CSV `step,x_mm,y_mm,yaw_rad,argmax_value,action`; action is rotate,
// translate, or grasp. Writes <path>.tmp then renames.
void save_trajectory(const EpisodeResult& result, const std::string& path);

}  // namespace grasp
