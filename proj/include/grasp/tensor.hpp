#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grasp {

std::int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major float32 array. Image data uses N x C x H x W order.
// Invariant: data.size() == product(shape) at all times.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, float fill);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Throws ShapeError unless t.shape == expected.
void require_shape(const Tensor& t, const std::vector<int>& expected,
                   const char* what);
// Throws ShapeError unless t has `nd` dimensions.
void require_ndim(const Tensor& t, int nd, const char* what);
// Throws NumericError if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace grasp
