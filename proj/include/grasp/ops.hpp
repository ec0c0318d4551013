#pragma once

#include "grasp/tensor.hpp"

namespace grasp {

struct ConvGrads {
  Tensor input;   // empty when need_grad_input == false
  Tensor kernel;
  Tensor bias;
};

// input [N,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout]; zero padding.
// H' = floor((H + 2*padding - k)/stride) + 1, analogously W'.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                      const Tensor& bias, int stride, int padding);

// Exact adjoint of conv2d_forward. grad_out must match the forward output
// shape. Pass need_grad_input = false for the first layer of a network.
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernel, int stride, int padding,
                          bool need_grad_input = true);

// Mean over window x window patches, H' = floor((H - window)/stride) + 1.
Tensor avgpool_forward(const Tensor& input, int window, int stride);
Tensor avgpool_backward(const Tensor& grad_out, const std::vector<int>& input_shape,
                        int window, int stride);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// Output clamped into the open interval (0,1) at float32 resolution.
Tensor sigmoid(const Tensor& input);
// `output` is the forward result (sigmoid'(x) = y*(1-y)).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

// Mean binary cross-entropy. Predictions are clamped to
// [kBceClamp, 1 - kBceClamp] before the logs.
inline constexpr float kBceClamp = 1e-7f;
float bce_loss(const Tensor& predictions, const Tensor& targets);
Tensor bce_backward(const Tensor& predictions, const Tensor& targets);

// Plain-loop reference kernels, kept for cross-checking the tuned versions
// and for the kernel benchmark. Same contracts, bit-identical results.
namespace serial {
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                      const Tensor& bias, int stride, int padding);
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernel, int stride, int padding,
                          bool need_grad_input = true);
Tensor avgpool_forward(const Tensor& input, int window, int stride);
Tensor avgpool_backward(const Tensor& grad_out, const std::vector<int>& input_shape,
                        int window, int stride);
}  // namespace serial

}  // namespace grasp
