// Command-line front end: scenario/demo generation, training, Reptile
// meta-training, evaluation, activation-map export, and closed-loop
// episodes. Machine-readable results go to stdout as key=value lines (or
// CSV rows for `run`); progress goes to stderr. Exit codes: 0 success,
// 2 input/config error, 3 training integrity error, 4 artifact corruption.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grasp/config.hpp"
#include "grasp/controller.hpp"
#include "grasp/errors.hpp"
#include "grasp/graspnet.hpp"
#include "grasp/image.hpp"
#include "grasp/rng.hpp"
#include "grasp/sim.hpp"
#include "grasp/train.hpp"

namespace {

using namespace grasp;

// Applies `--set key=value` pairs on top of whatever --config loaded.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const std::string& entry : sets) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + entry + "'");
    }
    apply_config_entry(cfg, entry.substr(0, eq), entry.substr(eq + 1));
  }
}

// Demo directories are numbered subdirectories containing meta.txt.
DemonstrationSet load_demos(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw NotFoundError("no demo directory " + dir);
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.txt")) {
      entries.push_back(e.path());
    }
  }
  std::sort(entries.begin(), entries.end());
  DemonstrationSet demos;
  for (const fs::path& p : entries) demos.add(load_demo(p.string()));
  if (demos.size() == 0) throw NotFoundError("no demos under " + dir);
  return demos;
}

GraspNetParams load_weights(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw NotFoundError("no weight file " + path);
  }
  return load_params(path);
}

void print_metrics(const Metrics& metrics) {
  std::printf("iterations=%d\n", (int)metrics.losses.size());
  std::printf("final_loss=%.6f\n",
              metrics.losses.empty() ? 0.0f : metrics.losses.back());
  if (!metrics.points.empty()) {
    std::printf("val_accuracy=%.6f\n", metrics.points.back().val_accuracy);
  }
  std::printf("wall_seconds=%.2f\n", metrics.wall_seconds);
}

int cmd_scenario(const std::string& out) {
  save_scenario(default_scenario(), out);
  std::printf("scenario=%s\nblocks=10\n", out.c_str());
  return 0;
}

int cmd_demo(const std::string& scenario_path, const std::string& out_dir) {
  const WorkspaceState ws = load_scenario(scenario_path);
  std::filesystem::create_directories(out_dir);
  for (const Block& b : ws.blocks) {
    const Demonstration demo = capture_demonstration(ws, b.id);
    save_demo(demo, out_dir + "/" + std::to_string(b.id));
    std::fprintf(stderr, "captured demo %d\n", b.id);
  }
  std::printf("demos=%d\nout=%s\n", (int)ws.blocks.size(), out_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& demos_dir, int target,
              const std::string& out, const std::string& metrics_path) {
  validate_config(cfg.augment);
  validate_train_config(cfg.train);
  const DemonstrationSet demos = load_demos(demos_dir);
  std::fprintf(stderr, "training target %d, scheme %s, %d iterations\n",
               target, scheme_name(cfg.train.scheme).c_str(),
               cfg.train.iterations);
  Rng rng(cfg.seed);
  const auto [params, metrics] = train(demos, target, cfg.train, rng);
  save_params(params, out);
  if (!metrics_path.empty()) save_metrics_csv(metrics, metrics_path);
  std::printf("target=%d\nscheme=%s\n", target,
              scheme_name(cfg.train.scheme).c_str());
  print_metrics(metrics);
  if (!metrics.points.empty()) {
    std::printf("val_seed=%llu\n",
                (unsigned long long)validation_stream_seed(cfg.seed));
  }
  std::printf("weights=%s\n", out.c_str());
  return 0;
}

int cmd_meta_train(const RunConfig& cfg, const std::string& demos_dir,
                   int held_out, const std::string& out) {
  validate_config(cfg.augment);
  validate_reptile_config(cfg.reptile);
  const DemonstrationSet demos = load_demos(demos_dir);
  std::fprintf(stderr, "meta-training, held-out %d, %d outer iterations\n",
               held_out, cfg.reptile.outer_iterations);
  Rng rng(cfg.seed);
  const GraspNetParams phi =
      reptile_meta_train(demos, held_out, cfg.reptile, rng);
  save_params(phi, out);
  std::printf("held_out=%d\nouter_iterations=%d\nweights=%s\n", held_out,
              cfg.reptile.outer_iterations, out.c_str());
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& phi_path,
                 const std::string& demos_dir, int target,
                 const std::string& out, const std::string& metrics_path) {
  validate_config(cfg.augment);
  validate_reptile_config(cfg.reptile);
  const GraspNetParams phi = load_weights(phi_path);
  const DemonstrationSet demos = load_demos(demos_dir);
  std::fprintf(stderr, "fine-tuning target %d, %d iterations\n", target,
               cfg.reptile.finetune_iterations);
  Rng rng(cfg.seed);
  const auto [params, metrics] = fine_tune(phi, demos, target, cfg.reptile, rng);
  save_params(params, out);
  if (!metrics_path.empty()) save_metrics_csv(metrics, metrics_path);
  std::printf("target=%d\n", target);
  print_metrics(metrics);
  std::printf("weights=%s\n", out.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& weights,
             const std::string& demos_dir, int target, int n_pos, int n_neg) {
  validate_config(cfg.augment);
  const GraspNetParams params = load_weights(weights);
  const DemonstrationSet demos = load_demos(demos_dir);
  std::fprintf(stderr, "evaluating %d+%d samples, target %d\n", n_pos, n_neg,
               target);
  const Batch set =
      generate_eval_set(demos, target, n_pos, n_neg, cfg.seed, cfg.augment);
  std::printf("accuracy=%.6f\n", evaluate(params, set.samples));
  return 0;
}

int cmd_map(const std::string& weights, const std::string& image_path,
            const std::string& demo_dir, const std::string& out) {
  const GraspNetParams params = load_weights(weights);
  Image frame;
  if (!image_path.empty()) {
    frame = load_ppm(image_path);
  } else {
    frame = load_demo(demo_dir).frame;
  }
  const ActivationMap map = forward_full(params, image_to_chw(frame));
  save_pgm(upsample_map(map, frame.height, frame.width), out);
  std::printf("map=%s\nwidth=%d\nheight=%d\n", out.c_str(), frame.width,
              frame.height);
  return 0;
}

int cmd_run(const RunConfig& cfg, const std::string& weights,
            const std::string& scenario_path, int target, int episodes,
            const std::string& trajectory_dir) {
  validate_controller_config(cfg.controller);
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  const GraspNetParams params = load_weights(weights);
  const WorkspaceState ws = load_scenario(scenario_path);
  if (!trajectory_dir.empty()) {
    std::filesystem::create_directories(trajectory_dir);
  }
  Rng rng(cfg.seed);
  int successes = 0;
  std::printf("episode,success,steps,termination\n");
  for (int e = 0; e < episodes; ++e) {
    const EpisodeResult result =
        run_episode(ws, params, target, cfg.controller, rng);
    successes += result.success ? 1 : 0;
    std::printf("%d,%d,%d,%s\n", e, result.success ? 1 : 0, result.steps,
                termination_name(result.termination));
    if (!trajectory_dir.empty()) {
      save_trajectory(result, trajectory_dir + "/episode_" +
                                  std::to_string(e) + ".csv");
    }
    std::fprintf(stderr, "episode %d: %s in %d steps\n", e,
                 result.success ? "success" : "failure", result.steps);
  }
  std::printf("success_rate=%.6f\n",
              static_cast<double>(successes) / episodes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-demonstration grasp pipeline"};
  app.require_subcommand(1);

  std::string config_path, scenario_path, demos_dir, weights, phi_path;
  std::string out, metrics_path, image_path, demo_dir, trajectory_dir;
  std::vector<std::string> sets;
  int target = 0, held_out = -1, n_pos = 5000, n_neg = 5000, episodes = 20;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string scheme;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", sets, "config override key=value (repeatable)");
    cmd->add_option("--seed", seed, "run seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* scenario = app.add_subcommand("scenario", "write the default scenario");
  scenario->add_option("--out", out, "scenario file")->required();

  CLI::App* demo = app.add_subcommand("demo", "capture one demo per block");
  demo->add_option("--scenario", scenario_path, "scenario file")->required();
  demo->add_option("--out", out, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train from one demonstration");
  add_common(train);
  train->add_option("--demos", demos_dir, "demos directory")->required();
  train->add_option("--target", target, "target block id")->required();
  train->add_option("--scheme", scheme, "single|multi");
  train->add_option("--out", out, "weight file")->required();
  train->add_option("--metrics", metrics_path, "metrics CSV");

  CLI::App* meta = app.add_subcommand("meta-train", "Reptile meta-training");
  add_common(meta);
  meta->add_option("--demos", demos_dir, "demos directory")->required();
  meta->add_option("--held-out", held_out, "excluded block id (-1 none)");
  meta->add_option("--out", out, "weight file")->required();

  CLI::App* finetune = app.add_subcommand("finetune", "fine-tune from phi");
  add_common(finetune);
  finetune->add_option("--phi", phi_path, "meta-trained weights")->required();
  finetune->add_option("--demos", demos_dir, "demos directory")->required();
  finetune->add_option("--target", target, "target block id")->required();
  finetune->add_option("--out", out, "weight file")->required();
  finetune->add_option("--metrics", metrics_path, "metrics CSV");

  CLI::App* eval = app.add_subcommand("eval", "accuracy on a fresh eval set");
  add_common(eval);
  eval->add_option("--weights", weights, "weight file")->required();
  eval->add_option("--demos", demos_dir, "demos directory")->required();
  eval->add_option("--target", target, "target block id")->required();
  eval->add_option("--n-pos", n_pos, "positive samples");
  eval->add_option("--n-neg", n_neg, "negative samples");

  CLI::App* map = app.add_subcommand("map", "export activation map as PGM");
  map->add_option("--weights", weights, "weight file")->required();
  map->add_option("--image", image_path, "input PPM frame");
  map->add_option("--demo", demo_dir, "demo directory (frame.ppm)");
  map->add_option("--out", out, "output PGM")->required();

  CLI::App* run = app.add_subcommand("run", "closed-loop grasp episodes");
  add_common(run);
  run->add_option("--weights", weights, "weight file")->required();
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--target", target, "target block id")->required();
  run->add_option("--episodes", episodes, "episode count");
  double max_offset = -1.0, max_yaw = -1.0;
  run->add_option("--max-offset", max_offset, "perturbation radius mm");
  run->add_option("--max-yaw", max_yaw, "perturbation yaw deg");
  run->add_option("--trajectories", trajectory_dir, "per-episode CSV dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) merge_run_config(cfg, config_path);
    apply_overrides(cfg, sets);
    if (seed_given) apply_config_entry(cfg, "seed", std::to_string(seed));
    if (!scheme.empty()) apply_config_entry(cfg, "scheme", scheme);
    if (max_offset >= 0.0) cfg.controller.max_offset_mm = (float)max_offset;
    if (max_yaw >= 0.0) cfg.controller.max_yaw_deg = (float)max_yaw;

    if (scenario->parsed()) return cmd_scenario(out);
    if (demo->parsed()) return cmd_demo(scenario_path, out);
    if (train->parsed()) return cmd_train(cfg, demos_dir, target, out, metrics_path);
    if (meta->parsed()) return cmd_meta_train(cfg, demos_dir, held_out, out);
    if (finetune->parsed()) {
      return cmd_finetune(cfg, phi_path, demos_dir, target, out, metrics_path);
    }
    if (eval->parsed()) return cmd_eval(cfg, weights, demos_dir, target, n_pos, n_neg);
    if (map->parsed()) {
      if (image_path.empty() == demo_dir.empty()) {
        throw ConfigError("map needs exactly one of --image / --demo");
      }
      return cmd_map(weights, image_path, demo_dir, out);
    }
    if (run->parsed()) {
      return cmd_run(cfg, weights, scenario_path, target, episodes, trajectory_dir);
    }
    return 2;
  } catch (const CorruptFileError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
