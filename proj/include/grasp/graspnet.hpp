#pragma once

#include <string>
#include <vector>

#include "grasp/rng.hpp"
#include "grasp/tensor.hpp"

namespace grasp {

// Four 5x5 stride-2 conv layers (8, 8, 16, 16 filters), average pooling,
// then a head of two hidden 1x1 conv layers (16 units, ReLU) and a 1x1
// sigmoid output. 12,409 parameters in total.
struct GraspNetParams {
  Tensor conv1_w, conv1_b;  // 8x3x5x5
  Tensor conv2_w, conv2_b;  // 8x8x5x5
  Tensor conv3_w, conv3_b;  // 16x8x5x5
  Tensor conv4_w, conv4_b;  // 16x16x5x5
  Tensor fc1_w, fc1_b;      // 16x16x1x1
  Tensor fc2_w, fc2_b;      // 16x16x1x1
  Tensor out_w, out_b;      // 1x16x1x1

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

inline constexpr int kParamCount = 12409;
inline constexpr int kPatchSize = 128;
inline constexpr int kPoolWindow = 8;

// Throws ShapeError unless every tensor has its documented shape
// (total parameter count 12,409).
void validate_params(const GraspNetParams& params);

// He-normal kernels (std = sqrt(2/fan_in)), zero biases. Deterministic
// given the generator state.
GraspNetParams init_params(Rng& rng);

// Map cell (i, j) corresponds to the 128x128 receptive field centered at
// input pixel (kCellOffset + kCellStride*j, kCellOffset + kCellStride*i).
inline constexpr int kCellStride = 16;
inline constexpr int kCellOffset = 64;

struct ActivationMap {
  int rows = 0, cols = 0;
  int input_h = 0, input_w = 0;
  std::vector<float> values;  // row-major, in (0,1)

  float at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
  // center pixel (x, y) of a cell's receptive field
  int pixel_x(int j) const { return kCellOffset + kCellStride * j; }
  int pixel_y(int i) const { return kCellOffset + kCellStride * i; }
};

// Activations kept for the backward pass. pool_window is 8 in the real
// model; gradient tests shrink it so tiny inputs stay viable.
struct ForwardCache {
  Tensor input;
  Tensor z1, a1, z2, a2, z3, a3, z4, a4;
  Tensor pooled;
  Tensor hz1, ha1, hz2, ha2, zout;
  Tensor y;
  int pool_window = kPoolWindow;
};

// Shared forward pass: batch [N,3,H,W] -> sigmoid outputs [N,1,ph,pw].
// Patch, batch, and full-image inference all route through this, so their
// agreement is exact by construction.
Tensor net_forward(const GraspNetParams& params, const Tensor& batch,
                   int pool_window = kPoolWindow, ForwardCache* cache = nullptr);

// Gradients of sum(grad_y * y) wrt every parameter, as a params-shaped
// container in the same fixed tensor order.
GraspNetParams net_backward(const GraspNetParams& params,
                            const ForwardCache& cache, const Tensor& grad_y);

// patch [3,128,128] -> grasp-success probability
float forward_patch(const GraspNetParams& params, const Tensor& patch);

// batch [N,3,128,128] -> probabilities [N]
Tensor forward_batch(const GraspNetParams& params, const Tensor& batch,
                     ForwardCache* cache = nullptr);

// image [3,H,W], H,W >= 128 -> dense map (pool window 8, stride 1)
ActivationMap forward_full(const GraspNetParams& params, const Tensor& image);

// Bilinear upsample of the map onto the full image grid; cell values sit at
// their receptive-field centers, edges replicate outward. Returns [H,W].
Tensor upsample_map(const ActivationMap& map, int target_h, int target_w);

// .gnw format: "GNW1" magic, format version u32 LE, tensor count u32 LE,
// reserved u32, then a shape table (4 x u32 LE per tensor, biases padded to
// [C,1,1,1]) and the raw float32 LE payload in table order.
void save_params(const GraspNetParams& params, const std::string& path);
GraspNetParams load_params(const std::string& path);

}  // namespace grasp
