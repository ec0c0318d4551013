#include "grasp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "grasp/errors.hpp"

namespace grasp {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_size(shape)), 0.0f);
}

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_size(shape)), fill);
}

void require_shape(const Tensor& t, const std::vector<int>& expected,
                   const char* what) {
  if (t.shape != expected) {
    throw ShapeError(std::string(what) + ": expected shape " +
                     shape_str(expected) + ", got " + shape_str(t.shape));
  }
}

void require_ndim(const Tensor& t, int nd, const char* what) {
  if (t.ndim() != nd) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(nd) +
                     "-d tensor, got " + shape_str(t.shape));
  }
}

void require_finite(const Tensor& t, const char* what) {
  for (float v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

}  // namespace grasp
