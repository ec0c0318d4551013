#include "grasp/ops.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "conv_detail.hpp"
#include "grasp/errors.hpp"

namespace grasp {

using detail::ConvDims;

namespace {

void check_bias(const Tensor& bias, int cout) {
  if (bias.ndim() != 1 || bias.dim(0) != cout) {
    throw ShapeError("conv2d bias must be [" + std::to_string(cout) +
                     "], got " + shape_str(bias.shape));
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                      const Tensor& bias, int stride, int padding) {
  const ConvDims d = detail::conv_dims(input, kernel, stride, padding);
  check_bias(bias, d.cout);
  Tensor out({d.n, d.cout, d.oh, d.ow});
  const std::vector<float> wpk = detail::pack_kernel_oc_inner(kernel);
  const float* in = input.ptr();
  const float* bp = bias.ptr();
  float* op = out.ptr();
  detail::dispatch_channels(d.cout, [&](auto oc_tag) {
    constexpr int OC = decltype(oc_tag)::value;
    const std::int64_t rows = static_cast<std::int64_t>(d.n) * d.oh;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      detail::conv_fwd_row<OC>(d, in, wpk.data(), bp, op,
                               static_cast<int>(r / d.oh),
                               static_cast<int>(r % d.oh));
    }
  });
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernel, int stride, int padding,
                          bool need_grad_input) {
  const ConvDims d = detail::conv_dims(input, kernel, stride, padding);
  require_shape(grad_out, {d.n, d.cout, d.oh, d.ow}, "conv2d grad_out");
  ConvGrads grads;
  const float* g = grad_out.ptr();
  const std::int64_t oplane = static_cast<std::int64_t>(d.oh) * d.ow;

  grads.bias = Tensor({d.cout});
  {
    float* gb = grads.bias.ptr();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < d.cout; ++oc) {
      float acc = 0.0f;
      for (int n = 0; n < d.n; ++n) {
        const float* g_c = g + (static_cast<std::int64_t>(n) * d.cout + oc) * oplane;
        for (std::int64_t i = 0; i < oplane; ++i) acc += g_c[i];
      }
      gb[oc] = acc;
    }
  }

  // grad_out transposed per sample to [oh][ow][oc] so the kernel-gradient
  // inner loop can run vectorized over output channels.
  std::vector<float> gt(static_cast<std::size_t>(d.n) * d.cout * oplane);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.n; ++n) {
    detail::transpose_grad(d, g + static_cast<std::int64_t>(n) * d.cout * oplane,
                           gt.data() + static_cast<std::int64_t>(n) * d.cout * oplane);
  }

  grads.kernel = Tensor({d.cout, d.cin, d.k, d.k}, 0.0f);
  {
    std::vector<float> gk_t(static_cast<std::size_t>(d.cin) * d.k * d.k * d.cout, 0.0f);
    const float* in = input.ptr();
    const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
    detail::dispatch_channels(d.cout, [&](auto oc_tag) {
      constexpr int OC = decltype(oc_tag)::value;
#pragma omp parallel for schedule(static)
      for (int ic = 0; ic < d.cin; ++ic) {
        for (int n = 0; n < d.n; ++n) {
          detail::conv_gk_channel<OC>(
              d, in + static_cast<std::int64_t>(n) * d.cin * plane,
              gt.data() + static_cast<std::int64_t>(n) * d.cout * oplane,
              gk_t.data(), ic);
        }
      }
    });
    float* gk = grads.kernel.ptr();
    for (int oc = 0; oc < d.cout; ++oc) {
      for (int i = 0; i < d.cin * d.k * d.k; ++i) {
        gk[static_cast<std::int64_t>(oc) * d.cin * d.k * d.k + i] =
            gk_t[static_cast<std::int64_t>(i) * d.cout + oc];
      }
    }
  }

  if (need_grad_input) {
    grads.input = Tensor({d.n, d.cin, d.h, d.w});
    const std::vector<float> wpk_ic = detail::pack_kernel_ic_inner(kernel);
    float* gi = grads.input.ptr();
    detail::dispatch_channels(d.cin, [&](auto ic_tag) {
      constexpr int IC = decltype(ic_tag)::value;
      const std::int64_t rows = static_cast<std::int64_t>(d.n) * d.h;
#pragma omp parallel for schedule(static)
      for (std::int64_t r = 0; r < rows; ++r) {
        detail::conv_gi_row<IC>(d, g, wpk_ic.data(), gi,
                                static_cast<int>(r / d.h),
                                static_cast<int>(r % d.h));
      }
    });
  }
  return grads;
}

using detail::PoolDims;
using detail::ceil_div;

Tensor avgpool_forward(const Tensor& input, int window, int stride) {
  const PoolDims p = detail::pool_dims(input.shape, window, stride, "avgpool");
  Tensor out({p.n, p.c, p.oh, p.ow});
  const float inv = 1.0f / static_cast<float>(window * window);
  const float* in = input.ptr();
  float* op = out.ptr();
  const std::int64_t planes = static_cast<std::int64_t>(p.n) * p.c;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const float* in_c = in + pc * p.h * p.w;
    float* out_c = op + pc * p.oh * p.ow;
    for (int oh = 0; oh < p.oh; ++oh) {
      for (int ow = 0; ow < p.ow; ++ow) {
        float acc = 0.0f;
        for (int wh = 0; wh < p.window; ++wh) {
          const float* row = in_c + static_cast<std::int64_t>(oh * p.stride + wh) * p.w +
                             ow * p.stride;
          for (int ww = 0; ww < p.window; ++ww) acc += row[ww];
        }
        out_c[static_cast<std::int64_t>(oh) * p.ow + ow] = acc * inv;
      }
    }
  }
  return out;
}

Tensor avgpool_backward(const Tensor& grad_out, const std::vector<int>& input_shape,
                        int window, int stride) {
  const PoolDims p = detail::pool_dims(input_shape, window, stride, "avgpool");
  require_shape(grad_out, {p.n, p.c, p.oh, p.ow}, "avgpool grad_out");
  Tensor grad({p.n, p.c, p.h, p.w});
  const float inv = 1.0f / static_cast<float>(window * window);
  const float* g = grad_out.ptr();
  float* gi = grad.ptr();
  const std::int64_t planes = static_cast<std::int64_t>(p.n) * p.c;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const float* g_c = g + pc * p.oh * p.ow;
    float* gi_c = gi + pc * p.h * p.w;
    for (int ih = 0; ih < p.h; ++ih) {
      // windows whose vertical span covers ih
      const int oh_hi = std::min(p.oh - 1, ih / p.stride);
      const int oh_lo = std::max(0, ceil_div(ih - p.window + 1, p.stride));
      for (int iw = 0; iw < p.w; ++iw) {
        const int ow_hi = std::min(p.ow - 1, iw / p.stride);
        const int ow_lo = std::max(0, ceil_div(iw - p.window + 1, p.stride));
        float acc = 0.0f;
        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
          for (int ow = ow_lo; ow <= ow_hi; ++ow) {
            acc += g_c[static_cast<std::int64_t>(oh) * p.ow + ow];
          }
        }
        gi_c[static_cast<std::int64_t>(ih) * p.w + iw] = acc * inv;
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape);
  const float* in = input.ptr();
  float* op = out.ptr();
  const std::int64_t n = static_cast<std::int64_t>(input.size());
#pragma omp parallel for schedule(static) if (n > 1 << 14)
  for (std::int64_t i = 0; i < n; ++i) op[i] = in[i] > 0.0f ? in[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  require_shape(grad_out, input.shape, "relu grad_out");
  Tensor grad(input.shape);
  const float* g = grad_out.ptr();
  const float* in = input.ptr();
  float* gp = grad.ptr();
  const std::int64_t n = static_cast<std::int64_t>(input.size());
#pragma omp parallel for schedule(static) if (n > 1 << 14)
  for (std::int64_t i = 0; i < n; ++i) gp[i] = in[i] > 0.0f ? g[i] : 0.0f;
  return grad;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape);
  const float* in = input.ptr();
  float* op = out.ptr();
  const std::int64_t n = static_cast<std::int64_t>(input.size());
  // smallest representable spacing below 1, keeps outputs in the open (0,1)
  const float hi = std::nextafter(1.0f, 0.0f);
  const float lo = std::numeric_limits<float>::min();
#pragma omp parallel for schedule(static) if (n > 1 << 14)
  for (std::int64_t i = 0; i < n; ++i) {
    const float x = in[i];
    float y;
    if (x >= 0.0f) {
      y = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      y = e / (1.0f + e);
    }
    op[i] = std::min(hi, std::max(lo, y));
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
  require_shape(grad_out, output.shape, "sigmoid grad_out");
  Tensor grad(output.shape);
  const float* g = grad_out.ptr();
  const float* y = output.ptr();
  float* gp = grad.ptr();
  const std::int64_t n = static_cast<std::int64_t>(output.size());
#pragma omp parallel for schedule(static) if (n > 1 << 14)
  for (std::int64_t i = 0; i < n; ++i) gp[i] = g[i] * y[i] * (1.0f - y[i]);
  return grad;
}

float bce_loss(const Tensor& predictions, const Tensor& targets) {
  if (predictions.size() != targets.size()) {
    throw ShapeError("bce size mismatch: " + shape_str(predictions.shape) +
                     " vs " + shape_str(targets.shape));
  }
  const float* p = predictions.ptr();
  const float* t = targets.ptr();
  const std::size_t n = predictions.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t[i] == 0.0f || t[i] == 1.0f)) {
      throw NumericError("bce target not in {0,1}: " + std::to_string(t[i]));
    }
    if (!std::isfinite(p[i])) {
      throw NumericError("bce prediction not finite");
    }
    const float pc = std::min(1.0f - kBceClamp, std::max(kBceClamp, p[i]));
    acc -= t[i] == 1.0f ? std::log(static_cast<double>(pc))
                        : std::log(1.0 - static_cast<double>(pc));
  }
  return static_cast<float>(acc / static_cast<double>(n));
}

Tensor bce_backward(const Tensor& predictions, const Tensor& targets) {
  if (predictions.size() != targets.size()) {
    throw ShapeError("bce size mismatch: " + shape_str(predictions.shape) +
                     " vs " + shape_str(targets.shape));
  }
  Tensor grad(predictions.shape);
  const float* p = predictions.ptr();
  const float* t = targets.ptr();
  float* g = grad.ptr();
  const std::size_t n = predictions.size();
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float pc = std::min(1.0f - kBceClamp, std::max(kBceClamp, p[i]));
    g[i] = (t[i] == 1.0f ? -1.0f / pc : 1.0f / (1.0f - pc)) * inv_n;
  }
  return grad;
}

}  // namespace grasp
