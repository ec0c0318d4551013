#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "grasp/augment.hpp"
#include "grasp/graspnet.hpp"
#include "grasp/rng.hpp"

namespace grasp {

struct TrainConfig {
  int iterations = 512;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  Scheme scheme = Scheme::kSingle;
  std::uint64_t seed = 0;
  // Validation cadence in optimizer steps; 0 skips validation entirely
  // (the 200+200 set is then never generated).
  int eval_every = 16;
  int val_positives = 200;
  int val_negatives = 200;
  float pos_fraction = 0.5f;
  AugmentationConfig augment;
};

// iterations >= 1, batch_size >= 2, lr > 0, betas in [0,1). ConfigError.
void validate_train_config(const TrainConfig& cfg);

struct ReptileConfig {
  int outer_iterations = 250;  // T
  // eps_0, annealed linearly: eps_t = eps_0 * (1 - t/T)
  double outer_step = 0.6;
  int meta_batch = 4;        // distinct tasks per outer iteration
  int inner_iterations = 10; // k Adam steps per task
  int inner_batch = 10;
  double inner_lr = 1e-3;
  double inner_beta1 = 0.0;
  int finetune_iterations = 200;
  int finetune_batch = 64;
  std::uint64_t seed = 0;
  AugmentationConfig augment;
};

void validate_reptile_config(const ReptileConfig& cfg);

struct EvalPoint {
  int iteration = 0;   // optimizer steps taken when measured
  float loss = 0.0f;   // training-batch loss at that step
  float val_accuracy = 0.0f;
};

struct Metrics {
  std::vector<EvalPoint> points;
  std::vector<float> losses;  // training-batch loss, every iteration
  // Callers that run a held-out test set record it here; NaN otherwise.
  float test_accuracy = std::numeric_limits<float>::quiet_NaN();
  double wall_seconds = 0.0;
};

// CSV: header `iteration,loss,val_accuracy`, one row per eval point, then a
// trailing `# test_accuracy=<float>` comment when one was recorded.
void save_metrics_csv(const Metrics& metrics, const std::string& path);

// Fraction of samples with (probability >= threshold) == label; a
// probability of exactly 0.5 counts as a positive prediction.
float evaluate(const GraspNetParams& params,
               const std::vector<LabeledSample>& samples,
               float threshold = 0.5f);

// Seed train() hands generate_eval_set for its validation set. Feeding it
// back through generate_eval_set reproduces the metrics' val sets exactly.
std::uint64_t validation_stream_seed(std::uint64_t run_seed);

// Fresh He-normal parameters, then cfg.iterations of Adam on batches from
// the demo sampler; validation runs every cfg.eval_every steps on a fixed
// set derived from cfg.seed. Bit-reproducible given (demos, cfg, rng).
std::pair<GraspNetParams, Metrics> train(const DemonstrationSet& demos,
                                         int target_id,
                                         const TrainConfig& cfg, Rng& rng);

// Called after every outer update with the annealed step and the task
// results, so tests can check phi_new - phi_old == eps_t * mean(W - phi).
using ReptileHook = std::function<void(
    int t, double eps_t, const GraspNetParams& phi_before,
    const std::vector<GraspNetParams>& task_results,
    const GraspNetParams& phi_after)>;

// Reptile: T outer iterations of [sample meta_batch distinct tasks; run k
// inner Adam steps per task from phi; phi += eps_t * mean(W_i - phi)].
// Inner batches use the multi scheme over every demo except held_out_id;
// pass -1 to train on all demos. Touching the held-out demo anywhere in
// the inner loops raises IntegrityError (checked via demo access counts).
GraspNetParams reptile_meta_train(const DemonstrationSet& demos,
                                  int held_out_id, const ReptileConfig& cfg,
                                  Rng& rng, const ReptileHook& hook = {});

// Same loop as train() but starting from phi: finetune_iterations batches
// of finetune_batch, fresh Adam with ordinary momentum (beta1 0.9). Zero
// iterations returns phi unchanged.
std::pair<GraspNetParams, Metrics> fine_tune(const GraspNetParams& phi,
                                             const DemonstrationSet& demos,
                                             int target_id,
                                             const ReptileConfig& cfg,
                                             Rng& rng);

}  // namespace grasp
