#pragma once

#include <string>
#include <vector>

#include "grasp/tensor.hpp"

namespace grasp {

// Interleaved RGB, row-major, values in [0,1].
struct Image {
  int width = 0, height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Bilinear lookup; coordinates outside the image replicate the edge.
float sample_bilinear(const Image& img, float x, float y, int c);

// Destination pixel p takes its value from source position
// center + R(-angle)·(p − center), where R(a) rotates (dx, dy) to
// (dx·cos a − dy·sin a, dx·sin a + dy·cos a). Content at offset d from the
// center moves to R(angle)·d: with y down, +90° turns the +x axis toward
// +y (downward on screen). Equivalently the output is the scene as seen by
// a camera whose yaw increased by `angle` relative to the source view.
Image rotate_image(const Image& img, float angle_deg, float cx, float cy);

// size×size crop centered at integer pixel (cx, cy); must be in-bounds.
Image crop_image(const Image& img, int cx, int cy, int size);

// One fused step of rotate_image(frame, angle, frame center) followed by
// crop_image(. , cx, cy, size): only the crop's pixels are interpolated.
Image extract_patch(const Image& frame, int cx, int cy, int size,
                    float angle_deg);

// out = clamp(((x·b) − 0.5)·c + 0.5, 0, 1)
Image apply_brightness_contrast(const Image& img, float b, float c);

Tensor image_to_chw(const Image& img);   // [3,H,W]
Image chw_to_image(const Tensor& chw);   // inverse

// Binary PPM (P6) / PGM (P5), 8-bit, maxval 255. Floats quantize by
// round(v*255); loads divide by 255. Writes go to <path>.tmp then rename.
void save_ppm(const Image& img, const std::string& path);
Image load_ppm(const std::string& path);
void save_pgm(const Tensor& gray, const std::string& path);  // [H,W] in [0,1]

}  // namespace grasp
