#include "grasp/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grasp/adam.hpp"
#include "grasp/errors.hpp"
#include "grasp/ops.hpp"

namespace grasp {

namespace {

// Derivation tags; batch/eval sample streams use 0x42/0x45 in augment.cpp.
constexpr std::uint64_t kStreamValidation = 0x76616c;  // validation set seed
constexpr std::uint64_t kStreamInnerTask = 0x52;       // Reptile inner loops

constexpr int kEvalChunk = 64;  // caps activation memory during evaluate

double seconds_since(std::chrono::steady_clock::time_point start) {
  const auto dt = std::chrono::steady_clock::now() - start;
  return std::chrono::duration<double>(dt).count();
}

Tensor label_tensor(const std::vector<LabeledSample>& samples) {
  Tensor y({static_cast<int>(samples.size()), 1, 1, 1});
  for (std::size_t i = 0; i < samples.size(); ++i)
    y.data[i] = samples[i].label != 0 ? 1.0f : 0.0f;
  return y;
}

// One forward/backward/Adam update; returns the pre-update batch loss.
float sgd_step(GraspNetParams& params, AdamState& adam,
               const std::vector<LabeledSample>& samples) {
  const Tensor x = stack_patches(samples);
  const Tensor y = label_tensor(samples);
  ForwardCache cache;
  net_forward(params, x, kPoolWindow, &cache);
  const float loss = bce_loss(cache.y, y);
  const Tensor grad_y = bce_backward(cache.y, y);
  const GraspNetParams grads = net_backward(params, cache, grad_y);
  adam_step(params.tensors(), grads.tensors(), adam);
  return loss;
}

std::pair<GraspNetParams, Metrics> run_training(GraspNetParams params,
                                                const DemonstrationSet& demos,
                                                int target_id,
                                                const TrainConfig& cfg,
                                                Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  Metrics metrics;
  std::vector<LabeledSample> val;
  if (cfg.eval_every > 0) {
    val = generate_eval_set(demos, target_id, cfg.val_positives,
                            cfg.val_negatives,
                            mix64(cfg.seed, kStreamValidation), cfg.augment)
              .samples;
  }
  AdamState adam = init_adam(
      static_cast<const GraspNetParams&>(params).tensors(), cfg.lr, cfg.beta1,
      cfg.beta2);
  metrics.losses.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    const Batch batch =
        generate_batch(demos, target_id, cfg.scheme, cfg.batch_size,
                       cfg.pos_fraction, cfg.augment, rng);
    const float loss = sgd_step(params, adam, batch.samples);
    metrics.losses.push_back(loss);
    const int done = it + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0)
      metrics.points.push_back({done, loss, evaluate(params, val)});
  }
  metrics.wall_seconds = seconds_since(start);
  return {std::move(params), std::move(metrics)};
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
    throw ConfigError("lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0)
    throw ConfigError("beta1 must be in [0,1)");
  if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw ConfigError("beta2 must be in [0,1)");
  if (cfg.eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (cfg.eval_every > 0 &&
      (cfg.val_positives < 0 || cfg.val_negatives < 0 ||
       cfg.val_positives + cfg.val_negatives < 1))
    throw ConfigError("validation set must hold at least one sample");
  if (cfg.pos_fraction < 0.0f || cfg.pos_fraction > 1.0f)
    throw ConfigError("pos_fraction must be in [0,1]");
  validate_config(cfg.augment);
}

void validate_reptile_config(const ReptileConfig& cfg) {
  if (cfg.outer_iterations < 1)
    throw ConfigError("outer_iterations must be >= 1");
  if (cfg.outer_step < 0.0 || !std::isfinite(cfg.outer_step))
    throw ConfigError("outer_step must be >= 0");
  if (cfg.meta_batch < 1) throw ConfigError("meta_batch must be >= 1");
  if (cfg.inner_iterations < 1)
    throw ConfigError("inner_iterations must be >= 1");
  if (cfg.inner_batch < 2) throw ConfigError("inner_batch must be >= 2");
  if (!(cfg.inner_lr > 0.0) || !std::isfinite(cfg.inner_lr))
    throw ConfigError("inner_lr must be positive");
  if (cfg.inner_beta1 < 0.0 || cfg.inner_beta1 >= 1.0)
    throw ConfigError("inner_beta1 must be in [0,1)");
  if (cfg.finetune_iterations < 0)
    throw ConfigError("finetune_iterations must be >= 0");
  if (cfg.finetune_batch < 2) throw ConfigError("finetune_batch must be >= 2");
  validate_config(cfg.augment);
}

void save_metrics_csv(const Metrics& metrics, const std::string& path) {
  std::ostringstream out;
  out << "iteration,loss,val_accuracy\n";
  char row[96];
  for (const EvalPoint& p : metrics.points) {
    std::snprintf(row, sizeof(row), "%d,%.6f,%.6f\n", p.iteration,
                  static_cast<double>(p.loss),
                  static_cast<double>(p.val_accuracy));
    out << row;
  }
  if (std::isfinite(metrics.test_accuracy)) {
    std::snprintf(row, sizeof(row), "# test_accuracy=%.6f\n",
                  static_cast<double>(metrics.test_accuracy));
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

std::uint64_t validation_stream_seed(std::uint64_t run_seed) {
  return mix64(run_seed, kStreamValidation);
}

float evaluate(const GraspNetParams& params,
               const std::vector<LabeledSample>& samples, float threshold) {
  if (samples.empty()) throw ConfigError("evaluate needs at least one sample");
  long correct = 0;
  const int n = static_cast<int>(samples.size());
  for (int lo = 0; lo < n; lo += kEvalChunk) {
    const int hi = std::min(n, lo + kEvalChunk);
    const std::vector<LabeledSample> chunk(samples.begin() + lo,
                                           samples.begin() + hi);
    const Tensor probs = forward_batch(params, stack_patches(chunk));
    for (int i = 0; i < hi - lo; ++i) {
      const bool positive = probs.data[static_cast<std::size_t>(i)] >= threshold;
      if (positive == (chunk[static_cast<std::size_t>(i)].label != 0))
        ++correct;
    }
  }
  return static_cast<float>(correct) / static_cast<float>(n);
}

std::pair<GraspNetParams, Metrics> train(const DemonstrationSet& demos,
                                         int target_id,
                                         const TrainConfig& cfg, Rng& rng) {
  validate_train_config(cfg);
  return run_training(init_params(rng), demos, target_id, cfg, rng);
}

GraspNetParams reptile_meta_train(const DemonstrationSet& demos,
                                  int held_out_id, const ReptileConfig& cfg,
                                  Rng& rng, const ReptileHook& hook) {
  validate_reptile_config(cfg);
  const bool held_out = held_out_id >= 0;
  if (held_out && !demos.has_target(held_out_id))
    throw NotFoundError("held-out block " + std::to_string(held_out_id) +
                        " has no demonstration");
  const DemonstrationSet tasks =
      held_out ? demos.without_target(held_out_id) : demos;
  const std::vector<int> ids = tasks.target_ids();
  if (static_cast<int>(ids.size()) < cfg.meta_batch)
    throw ConfigError("meta_batch " + std::to_string(cfg.meta_batch) +
                      " exceeds the " + std::to_string(ids.size()) +
                      " available tasks");
  const long long held_before =
      held_out ? demos.access_count(held_out_id) : 0;

  GraspNetParams phi = init_params(rng);
  std::vector<int> pool(ids);
  for (int t = 0; t < cfg.outer_iterations; ++t) {
    const double eps =
        cfg.outer_step *
        (1.0 - static_cast<double>(t) / cfg.outer_iterations);
    // distinct tasks via partial Fisher-Yates into the tail of the pool
    pool = ids;
    for (int s = 0; s < cfg.meta_batch; ++s) {
      const auto remaining = static_cast<std::uint32_t>(pool.size()) -
                             static_cast<std::uint32_t>(s);
      const std::uint32_t j = rng.uniform_u32(remaining);
      std::swap(pool[j], pool[remaining - 1]);
    }
    const std::uint64_t base = rng.next_u64();

    std::vector<GraspNetParams> results;
    results.reserve(static_cast<std::size_t>(cfg.meta_batch));
    for (int s = 0; s < cfg.meta_batch; ++s) {
      const int task_id = pool[pool.size() - 1 - static_cast<std::size_t>(s)];
      Rng task_rng =
          derive_rng(base, static_cast<std::uint64_t>(s), kStreamInnerTask);
      GraspNetParams w = phi;
      AdamState adam =
          init_adam(static_cast<const GraspNetParams&>(w).tensors(),
                    cfg.inner_lr, cfg.inner_beta1);
      for (int k = 0; k < cfg.inner_iterations; ++k) {
        const Batch batch =
            generate_batch(tasks, task_id, Scheme::kMulti, cfg.inner_batch,
                           0.5f, cfg.augment, task_rng);
        sgd_step(w, adam, batch.samples);
      }
      results.push_back(std::move(w));
    }

    GraspNetParams phi_before;
    if (hook) phi_before = phi;
    if (eps != 0.0) {
      // phi += eps * mean_i(W_i - phi), accumulated in 64-bit
      std::vector<Tensor*> pt = phi.tensors();
      std::vector<std::vector<const Tensor*>> wts;
      for (const GraspNetParams& w : results) wts.push_back(w.tensors());
      for (std::size_t ti = 0; ti < pt.size(); ++ti) {
        for (std::size_t e = 0; e < pt[ti]->data.size(); ++e) {
          const double old = static_cast<double>(pt[ti]->data[e]);
          double delta = 0.0;
          for (const std::vector<const Tensor*>& wt : wts)
            delta += static_cast<double>(wt[ti]->data[e]) - old;
          delta /= static_cast<double>(cfg.meta_batch);
          pt[ti]->data[e] = static_cast<float>(old + eps * delta);
        }
      }
    }
    if (hook) hook(t, eps, phi_before, results, phi);
  }

  if (held_out && demos.access_count(held_out_id) != held_before)
    throw IntegrityError("held-out demonstration " +
                         std::to_string(held_out_id) +
                         " was accessed during meta-training");
  return phi;
}

std::pair<GraspNetParams, Metrics> fine_tune(const GraspNetParams& phi,
                                             const DemonstrationSet& demos,
                                             int target_id,
                                             const ReptileConfig& cfg,
                                             Rng& rng) {
  validate_reptile_config(cfg);
  validate_params(phi);
  if (cfg.finetune_iterations == 0) return {phi, Metrics{}};
  TrainConfig tc;
  tc.iterations = cfg.finetune_iterations;
  tc.batch_size = cfg.finetune_batch;
  tc.lr = cfg.inner_lr;
  tc.beta1 = 0.9;  // ordinary training momentum, unlike the inner loops
  tc.beta2 = 0.999;
  tc.scheme = Scheme::kMulti;
  tc.seed = cfg.seed;
  tc.augment = cfg.augment;
  return run_training(phi, demos, target_id, tc, rng);
}

}  // namespace grasp
