#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grasp/controller.hpp"
#include "grasp/errors.hpp"
#include "grasp/graspnet.hpp"
#include "grasp/image.hpp"
#include "grasp/rng.hpp"
#include "grasp/sim.hpp"

using namespace grasp;

namespace {

constexpr float kPi = 3.14159265358979323846f;

GraspNetParams zero_params() {
  Rng rng(1);
  GraspNetParams p = init_params(rng);
  for (Tensor* t : p.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0f);
  return p;
}

// Hand-built blob detector: conv1 scores green dominance (g - (r+b)/2) at
// the window center and conv2..4 blur channel 0 with peaked pyramids, so
// the map is strictly unimodal over a green blob instead of plateauing.
// conv4's pyramid is centered one tap late: that shifts the receptive
// field by +8 px per axis, putting the response centroid of pooled cell
// (i, j) exactly on the map's claimed center (64 + 16j, 64 + 16i). The
// head squashes the pooled mean, so episodes against the default
// scenario's green circle behave like a coarse trained model.
GraspNetParams green_detector(float out_gain, float out_bias) {
  GraspNetParams p = zero_params();
  auto& w1 = p.conv1_w.data;  // [8,3,5,5]
  w1[((0 * 3 + 1) * 5 + 2) * 5 + 2] = 1.0f;
  w1[((0 * 3 + 0) * 5 + 2) * 5 + 2] = -0.5f;
  w1[((0 * 3 + 2) * 5 + 2) * 5 + 2] = -0.5f;
  const auto set_blur = [](Tensor& w, const float (&taps)[5]) {
    for (int kh = 0; kh < 5; ++kh) {
      for (int kw = 0; kw < 5; ++kw) {
        w.data[(0 * w.dim(1) + 0) * 25 + kh * 5 + kw] = taps[kh] * taps[kw];
      }
    }
  };
  const float pyramid[5] = {1.0f / 9, 2.0f / 9, 3.0f / 9, 2.0f / 9, 1.0f / 9};
  const float late[5] = {0.0f, 0.0f, 0.25f, 0.5f, 0.25f};
  set_blur(p.conv2_w, pyramid);
  set_blur(p.conv3_w, pyramid);
  set_blur(p.conv4_w, late);
  p.fc1_w.data[0] = 1.0f;  // unit 0 <- pooled channel 0
  p.fc2_w.data[0] = 1.0f;
  p.out_w.data[0] = out_gain;
  p.out_b.data[0] = out_bias;
  return p;
}

ActivationMap make_map(int rows, int cols, int input_h, int input_w,
                       float fill) {
  ActivationMap map;
  map.rows = rows;
  map.cols = cols;
  map.input_h = input_h;
  map.input_w = input_w;
  map.values.assign(static_cast<std::size_t>(rows) * cols, fill);
  return map;
}

}  // namespace

TEST_CASE("controller config validation") {
  ControllerConfig cfg;
  CHECK_NOTHROW(validate_controller_config(cfg));
  CHECK(cfg.rotation_set_deg.size() == 11);

  SUBCASE("gain must be positive") {
    cfg.gain_mm_per_px = 0.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("max step must be positive") {
    cfg.max_step_mm = -1.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("center tolerance must be positive") {
    cfg.center_tol_px = 0.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("rotation step must be positive") {
    cfg.rotation_step_deg = 0.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("negative step budget rejected") {
    cfg.max_steps = -1;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("zero step budget allowed") {
    cfg.max_steps = 0;
    CHECK_NOTHROW(validate_controller_config(cfg));
  }
  SUBCASE("rotation set must contain zero") {
    cfg.rotation_set_deg = {-10.0f, 10.0f};
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
    cfg.rotation_set_deg.clear();
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("perturbation bounds non-negative") {
    cfg.max_offset_mm = -5.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("grasp tolerances positive") {
    cfg.yaw_tol_deg = 0.0f;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
  SUBCASE("lost-target patience at least one") {
    cfg.lost_patience = 0;
    CHECK_THROWS_AS(validate_controller_config(cfg), ConfigError);
  }
}

TEST_CASE("direction points at the argmax cell") {
  SUBCASE("center cell of a 640x480 map gives zero") {
    ActivationMap map = make_map(23, 33, 480, 640, 0.1f);
    map.values[11 * 33 + 16] = 0.9f;
    float dx = -1.0f, dy = -1.0f;
    compute_direction(map, &dx, &dy);
    CHECK(dx == 0.0f);
    CHECK(dy == 0.0f);
  }
  SUBCASE("single-cell map is centered by construction") {
    ActivationMap map = make_map(1, 1, 128, 128, 0.7f);
    float dx = -1.0f, dy = -1.0f;
    compute_direction(map, &dx, &dy);
    CHECK(dx == 0.0f);
    CHECK(dy == 0.0f);
  }
  SUBCASE("corner cell offset") {
    ActivationMap map = make_map(23, 33, 480, 640, 0.1f);
    map.values[0] = 0.9f;  // cell (0,0) -> pixel (64,64)
    float dx = 0.0f, dy = 0.0f;
    compute_direction(map, &dx, &dy);
    CHECK(dx == -256.0f);
    CHECK(dy == -176.0f);
  }
  SUBCASE("matches a brute-force scan, ties row-major") {
    Rng rng(404);
    const float levels[4] = {0.2f, 0.4f, 0.6f, 0.8f};
    for (int trial = 0; trial < 200; ++trial) {
      ActivationMap map = make_map(23, 33, 480, 640, 0.0f);
      for (float& v : map.values) v = levels[rng.uniform_u32(4)];
      // independent oracle: global max value, then first cell holding it
      const float top = *std::max_element(map.values.begin(), map.values.end());
      int first = 0;
      while (map.values[first] != top) ++first;
      const int i = first / 33, j = first % 33;
      float dx = 0.0f, dy = 0.0f;
      compute_direction(map, &dx, &dy);
      CHECK(dx == static_cast<float>(64 + 16 * j) - 320.0f);
      CHECK(dy == static_cast<float>(64 + 16 * i) - 240.0f);
    }
  }
  SUBCASE("invariant under monotone rescaling") {
    Rng rng(77);
    ActivationMap map = make_map(23, 33, 480, 640, 0.0f);
    for (float& v : map.values) v = rng.uniform();
    float dx1 = 0.0f, dy1 = 0.0f;
    compute_direction(map, &dx1, &dy1);
    ActivationMap scaled = map;
    for (float& v : scaled.values) v = 0.2f + 0.5f * v;
    ActivationMap cubed = map;
    for (float& v : cubed.values) v = v * v * v;
    float dx2 = 0.0f, dy2 = 0.0f, dx3 = 0.0f, dy3 = 0.0f;
    compute_direction(scaled, &dx2, &dy2);
    compute_direction(cubed, &dx3, &dy3);
    CHECK(dx1 == dx2);
    CHECK(dy1 == dy2);
    CHECK(dx1 == dx3);
    CHECK(dy1 == dy3);
  }
}

TEST_CASE("rotation scan tie rules") {
  // All-zero weights give a constant 0.5 map for every view, so every angle
  // ties and only the tie rules decide.
  const GraspNetParams zeros = zero_params();
  const Image frame(128, 128, 0.5f);

  SUBCASE("full default set resolves to zero") {
    const std::vector<float> set = {-50.0f, -40.0f, -30.0f, -20.0f, -10.0f,
                                    0.0f,   10.0f,  20.0f,  30.0f,  40.0f,
                                    50.0f};
    CHECK(rotation_search(zeros, frame, set) == 0.0f);
  }
  SUBCASE("singleton") {
    CHECK(rotation_search(zeros, frame, {0.0f}) == 0.0f);
  }
  SUBCASE("equal magnitudes prefer negative") {
    CHECK(rotation_search(zeros, frame, {20.0f, -20.0f}) == -20.0f);
    CHECK(rotation_search(zeros, frame, {-10.0f, 10.0f}) == -10.0f);
  }
  SUBCASE("smaller magnitude wins ties") {
    CHECK(rotation_search(zeros, frame, {30.0f, 10.0f}) == 10.0f);
    CHECK(rotation_search(zeros, frame, {-30.0f, 10.0f}) == 10.0f);
  }
  SUBCASE("empty set rejected") {
    CHECK_THROWS_AS(rotation_search(zeros, frame, {}), ConfigError);
  }
}

TEST_CASE("command priorities and clamping") {
  ControllerConfig cfg;

  SUBCASE("rotation preempts translation") {
    const ControlCommand cmd = command_from(cfg, -20.0f, 100.0f, 0.0f);
    CHECK(cmd.dyaw_rad == doctest::Approx(-10.0 * kPi / 180.0));
    CHECK(cmd.dx_mm == 0.0f);
    CHECK(cmd.dy_mm == 0.0f);
    CHECK_FALSE(cmd.grasp);
    CHECK(command_from(cfg, 30.0f, 0.0f, 0.0f).dyaw_rad ==
          doctest::Approx(10.0 * kPi / 180.0));
  }
  SUBCASE("translation clamps to max step") {
    const ControlCommand cmd = command_from(cfg, 0.0f, 100.0f, 0.0f);
    CHECK(cmd.dx_mm == doctest::Approx(20.0f));
    CHECK(cmd.dy_mm == 0.0f);
    CHECK(cmd.dyaw_rad == 0.0f);
    CHECK_FALSE(cmd.grasp);
  }
  SUBCASE("clamp preserves direction") {
    const ControlCommand cmd = command_from(cfg, 0.0f, 30.0f, 40.0f);
    CHECK(cmd.dx_mm == doctest::Approx(12.0f));
    CHECK(cmd.dy_mm == doctest::Approx(16.0f));
    CHECK(std::hypot(cmd.dx_mm, cmd.dy_mm) <= 20.0f * 1.00001f);
  }
  SUBCASE("small error moves proportionally") {
    const ControlCommand cmd = command_from(cfg, 0.0f, 10.0f, 0.0f);
    CHECK(cmd.dx_mm == doctest::Approx(5.0f));
  }
  SUBCASE("inside tolerance grasps") {
    const ControlCommand cmd = command_from(cfg, 0.0f, 3.0f, -4.0f);
    CHECK(cmd.grasp);
    CHECK(cmd.dx_mm == 0.0f);
    CHECK(cmd.dy_mm == 0.0f);
    CHECK(cmd.dyaw_rad == 0.0f);
  }
  SUBCASE("tolerance boundary is inclusive") {
    CHECK(command_from(cfg, 0.0f, 8.0f, 0.0f).grasp);
    CHECK_FALSE(command_from(cfg, 0.0f, 8.00001f, 0.0f).grasp);
  }
  SUBCASE("step wires scan and direction together") {
    // constant map: best rotation 0, argmax cell (0,0) -> v = (-256,-176)
    const GraspNetParams zeros = zero_params();
    const Image frame(640, 480, 0.5f);
    const ControlCommand cmd = step(zeros, frame, cfg);
    CHECK_FALSE(cmd.grasp);
    CHECK(cmd.dyaw_rad == 0.0f);
    CHECK(std::hypot(cmd.dx_mm, cmd.dy_mm) == doctest::Approx(20.0f));
    CHECK(cmd.dx_mm < 0.0f);
    CHECK(cmd.dy_mm / cmd.dx_mm == doctest::Approx(176.0f / 256.0f));
  }
}

TEST_CASE("episodes against the green circle") {
  const WorkspaceState ws = default_scenario();
  const GraspNetParams detector = green_detector(40.0f, -1.0f);
  ControllerConfig cfg;
  cfg.rotation_set_deg = {0.0f};  // circle target: rotation disabled

  SUBCASE("detector fixture sees the target") {
    const Image frame =
        render(ws, CameraPose{320.0f, 240.0f, 0.0f});
    const ActivationMap map = forward_full(detector, image_to_chw(frame));
    const float top = *std::max_element(map.values.begin(), map.values.end());
    CHECK(top > 0.6f);
    float dx = 0.0f, dy = 0.0f;
    compute_direction(map, &dx, &dy);
    CHECK(std::hypot(dx, dy) <= 16.0f * std::sqrt(2.0f) + 1e-3f);
  }

  SUBCASE("target at demonstration pose grasps immediately") {
    cfg.max_offset_mm = 0.0f;
    cfg.max_yaw_deg = 0.0f;
    Rng rng(7);
    const EpisodeResult res = run_episode(ws, detector, 4, cfg, rng);
    CHECK(res.success);
    CHECK(res.termination == Termination::kGrasped);
    CHECK(res.steps <= 2);
    CHECK(res.trajectory.back().command.grasp);
  }

  SUBCASE("offset target is walked back under the camera") {
    cfg.max_offset_mm = 60.0f;
    Rng rng(11);
    const EpisodeResult res = run_episode(ws, detector, 4, cfg, rng);
    CHECK(res.success);
    CHECK(res.termination == Termination::kGrasped);
    CHECK(res.steps <= 40);
    CHECK(static_cast<int>(res.trajectory.size()) == res.steps);
    for (const TrajectoryPoint& p : res.trajectory) {
      CHECK(std::hypot(p.command.dx_mm, p.command.dy_mm) <=
            cfg.max_step_mm * 1.00001f);
      CHECK(p.command.dyaw_rad == 0.0f);
      CHECK(p.map_max > 0.0f);
      CHECK(p.map_max < 1.0f);
    }
    // only the last command grasps
    for (int i = 0; i + 1 < static_cast<int>(res.trajectory.size()); ++i) {
      CHECK_FALSE(res.trajectory[i].command.grasp);
    }
  }

  SUBCASE("episodes are deterministic") {
    cfg.max_offset_mm = 60.0f;
    Rng a(3), b(3);
    const EpisodeResult r1 = run_episode(ws, detector, 4, cfg, a);
    const EpisodeResult r2 = run_episode(ws, detector, 4, cfg, b);
    REQUIRE(r1.steps == r2.steps);
    CHECK(r1.success == r2.success);
    for (int i = 0; i < r1.steps; ++i) {
      CHECK(r1.trajectory[i].pose.x_mm == r2.trajectory[i].pose.x_mm);
      CHECK(r1.trajectory[i].pose.y_mm == r2.trajectory[i].pose.y_mm);
      CHECK(r1.trajectory[i].map_max == r2.trajectory[i].map_max);
    }
  }

  SUBCASE("inverted detector loses the target") {
    // negative head: every activation sits below 0.5, so the episode ends
    // as lost_target after exactly lost_patience steps
    const GraspNetParams inverted = green_detector(-40.0f, -1.0f);
    cfg.max_offset_mm = 0.0f;
    Rng rng(5);
    const EpisodeResult res = run_episode(ws, inverted, 4, cfg, rng);
    CHECK_FALSE(res.success);
    CHECK(res.termination == Termination::kLostTarget);
    CHECK(res.steps == cfg.lost_patience);
  }

  SUBCASE("zero step budget") {
    cfg.max_steps = 0;
    cfg.max_offset_mm = 0.0f;
    Rng rng(1);
    const EpisodeResult res = run_episode(ws, detector, 4, cfg, rng);
    CHECK_FALSE(res.success);
    CHECK(res.termination == Termination::kMaxSteps);
    CHECK(res.steps == 0);
    CHECK(res.trajectory.empty());
  }

  SUBCASE("unknown target") {
    Rng rng(1);
    CHECK_THROWS_AS(run_episode(ws, detector, 42, cfg, rng), NotFoundError);
  }

  SUBCASE("invalid config rejected before any work") {
    cfg.gain_mm_per_px = -1.0f;
    Rng rng(1);
    CHECK_THROWS_AS(run_episode(ws, detector, 4, cfg, rng), ConfigError);
  }
}

TEST_CASE("trajectory CSV format") {
  EpisodeResult res;
  res.success = true;
  res.steps = 2;
  res.termination = Termination::kGrasped;
  TrajectoryPoint a;
  a.pose = CameraPose{100.0f, 200.0f, 0.0f};
  a.map_max = 0.75f;
  a.command.dx_mm = 10.0f;
  TrajectoryPoint b;
  b.pose = CameraPose{110.0f, 200.0f, 0.0f};
  b.map_max = 0.9f;
  b.command.grasp = true;
  res.trajectory = {a, b};

  const auto path =
      std::filesystem::temp_directory_path() / "grasp_test_traj.csv";
  save_trajectory(res, path.string());
  std::ifstream f(path);
  std::stringstream buf;
  buf << f.rdbuf();
  CHECK(buf.str() ==
        "step,x_mm,y_mm,yaw_rad,argmax_value,action\n"
        "0,100.000000,200.000000,0.000000,0.750000,translate\n"
        "1,110.000000,200.000000,0.000000,0.900000,grasp\n");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);

  SUBCASE("rotate rows named") {
    EpisodeResult rot;
    TrajectoryPoint p;
    p.pose = CameraPose{0.0f, 0.0f, 0.5f};
    p.map_max = 0.6f;
    p.command.dyaw_rad = 0.1745f;
    rot.trajectory = {p};
    save_trajectory(rot, path.string());
    std::ifstream g(path);
    std::stringstream buf2;
    buf2 << g.rdbuf();
    CHECK(buf2.str().find(",rotate\n") != std::string::npos);
    std::filesystem::remove(path);
  }
}
