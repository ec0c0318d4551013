#pragma once

#include <vector>

#include "grasp/tensor.hpp"

namespace grasp {

// Adam with bias correction. Moment tensors are stored in 32-bit like
// everything else; hyperparameters and the per-element update are 64-bit
// (from the unrounded intermediates), so a 64-bit reference following the
// same dataflow agrees to well under float32 rounding.
struct AdamState {
  std::vector<Tensor> m, v;
  long long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState init_adam(const std::vector<const Tensor*>& params, double lr = 1e-3,
                    double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-8);

// In-place update: p -= lr * m_hat / (sqrt(v_hat) + epsilon).
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state);

}  // namespace grasp
