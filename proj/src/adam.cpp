#include "grasp/adam.hpp"

#include <cmath>
#include <string>

#include "grasp/errors.hpp"

namespace grasp {

AdamState init_adam(const std::vector<const Tensor*>& params, double lr,
                    double beta1, double beta2, double epsilon) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape, 0.0f);
    s.v.emplace_back(p->shape, 0.0f);
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: got " + std::to_string(params.size()) +
                     " params, " + std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.m.size()) + " moment tensors");
  }
  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const double lr = state.lr;
  const double eps = state.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    require_shape(g, p.shape, "adam_step grad");
    require_shape(state.m[i], p.shape, "adam_step moment");
    float* pp = p.ptr();
    const float* gp = g.ptr();
    float* mp = state.m[i].ptr();
    float* vp = state.v[i].ptr();
    const std::size_t n = p.size();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = gp[j];
      if (!std::isfinite(gj)) {
        throw NumericError("adam_step: non-finite gradient in tensor " +
                           std::to_string(i));
      }
      const double m = b1 * static_cast<double>(mp[j]) + (1.0 - b1) * gj;
      const double v = b2 * static_cast<double>(vp[j]) + (1.0 - b2) * gj * gj;
      mp[j] = static_cast<float>(m);
      vp[j] = static_cast<float>(v);
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      pp[j] = static_cast<float>(static_cast<double>(pp[j]) - update);
    }
  }
}

}  // namespace grasp
