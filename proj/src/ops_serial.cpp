#include <cstdint>

#include "conv_detail.hpp"
#include "grasp/errors.hpp"
#include "grasp/ops.hpp"

// Plain-loop references. Kept deliberately naive so the tuned kernels in
// ops.cpp have an independent implementation to be checked against. Per-cell
// accumulation order matches the tuned kernels (forward and grad_kernel sum
// over (ic,kh,kw) resp. (n,oh,ow); grad_input over (kh,kw,oc)), and the
// build disables FP contraction, so results must agree bit for bit.

namespace grasp::serial {

using detail::ConvDims;
using detail::PoolDims;

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                      const Tensor& bias, int stride, int padding) {
  const ConvDims d = detail::conv_dims(input, kernel, stride, padding);
  if (bias.ndim() != 1 || bias.dim(0) != d.cout) {
    throw ShapeError("conv2d bias must be [" + std::to_string(d.cout) +
                     "], got " + shape_str(bias.shape));
  }
  Tensor out({d.n, d.cout, d.oh, d.ow});
  const float* in = input.ptr();
  const float* w = kernel.ptr();
  const float* b = bias.ptr();
  float* op = out.ptr();
  for (int n = 0; n < d.n; ++n) {
    for (int oc = 0; oc < d.cout; ++oc) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          float acc = b[oc];
          for (int ic = 0; ic < d.cin; ++ic) {
            for (int kh = 0; kh < d.k; ++kh) {
              const int ih = oh * d.stride + kh - d.pad;
              if (ih < 0 || ih >= d.h) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iw = ow * d.stride + kw - d.pad;
                if (iw < 0 || iw >= d.w) continue;
                acc += in[((static_cast<std::int64_t>(n) * d.cin + ic) * d.h + ih) * d.w + iw] *
                       w[((static_cast<std::int64_t>(oc) * d.cin + ic) * d.k + kh) * d.k + kw];
              }
            }
          }
          op[((static_cast<std::int64_t>(n) * d.cout + oc) * d.oh + oh) * d.ow + ow] = acc;
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                          const Tensor& kernel, int stride, int padding,
                          bool need_grad_input) {
  const ConvDims d = detail::conv_dims(input, kernel, stride, padding);
  require_shape(grad_out, {d.n, d.cout, d.oh, d.ow}, "conv2d grad_out");
  const float* g = grad_out.ptr();
  const float* in = input.ptr();
  const float* w = kernel.ptr();
  ConvGrads grads;

  grads.bias = Tensor({d.cout});
  for (int oc = 0; oc < d.cout; ++oc) {
    float acc = 0.0f;
    for (int n = 0; n < d.n; ++n) {
      for (int oh = 0; oh < d.oh; ++oh) {
        for (int ow = 0; ow < d.ow; ++ow) {
          acc += g[((static_cast<std::int64_t>(n) * d.cout + oc) * d.oh + oh) * d.ow + ow];
        }
      }
    }
    grads.bias.data[oc] = acc;
  }

  // Accumulation contract shared with the tuned kernels: per-sample partial
  // sums added in sample order, (oh, ow) row-major within a sample.
  grads.kernel = Tensor({d.cout, d.cin, d.k, d.k});
  for (int oc = 0; oc < d.cout; ++oc) {
    for (int ic = 0; ic < d.cin; ++ic) {
      for (int kh = 0; kh < d.k; ++kh) {
        for (int kw = 0; kw < d.k; ++kw) {
          float acc = 0.0f;
          for (int n = 0; n < d.n; ++n) {
            float part = 0.0f;
            for (int oh = 0; oh < d.oh; ++oh) {
              const int ih = oh * d.stride + kh - d.pad;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < d.ow; ++ow) {
                const int iw = ow * d.stride + kw - d.pad;
                if (iw < 0 || iw >= d.w) continue;
                part += in[((static_cast<std::int64_t>(n) * d.cin + ic) * d.h + ih) * d.w + iw] *
                        g[((static_cast<std::int64_t>(n) * d.cout + oc) * d.oh + oh) * d.ow + ow];
              }
            }
            acc += part;
          }
          grads.kernel.data[((static_cast<std::int64_t>(oc) * d.cin + ic) * d.k + kh) * d.k + kw] = acc;
        }
      }
    }
  }

  if (need_grad_input) {
    grads.input = Tensor({d.n, d.cin, d.h, d.w});
    for (int n = 0; n < d.n; ++n) {
      for (int ic = 0; ic < d.cin; ++ic) {
        for (int ih = 0; ih < d.h; ++ih) {
          for (int iw = 0; iw < d.w; ++iw) {
            float acc = 0.0f;
            for (int kh = 0; kh < d.k; ++kh) {
              const int ihp = ih + d.pad - kh;
              if (ihp < 0 || ihp % d.stride != 0) continue;
              const int oh = ihp / d.stride;
              if (oh >= d.oh) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iwp = iw + d.pad - kw;
                if (iwp < 0 || iwp % d.stride != 0) continue;
                const int ow = iwp / d.stride;
                if (ow >= d.ow) continue;
                for (int oc = 0; oc < d.cout; ++oc) {
                  acc += g[((static_cast<std::int64_t>(n) * d.cout + oc) * d.oh + oh) * d.ow + ow] *
                         w[((static_cast<std::int64_t>(oc) * d.cin + ic) * d.k + kh) * d.k + kw];
                }
              }
            }
            grads.input.data[((static_cast<std::int64_t>(n) * d.cin + ic) * d.h + ih) * d.w + iw] = acc;
          }
        }
      }
    }
  }
  return grads;
}

Tensor avgpool_forward(const Tensor& input, int window, int stride) {
  const PoolDims p = detail::pool_dims(input.shape, window, stride, "avgpool");
  Tensor out({p.n, p.c, p.oh, p.ow});
  const float inv = 1.0f / static_cast<float>(window * window);
  const float* in = input.ptr();
  float* op = out.ptr();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(p.n) * p.c; ++pc) {
    const float* in_c = in + pc * p.h * p.w;
    float* out_c = op + pc * p.oh * p.ow;
    for (int oh = 0; oh < p.oh; ++oh) {
      for (int ow = 0; ow < p.ow; ++ow) {
        float acc = 0.0f;
        for (int wh = 0; wh < p.window; ++wh) {
          for (int ww = 0; ww < p.window; ++ww) {
            acc += in_c[static_cast<std::int64_t>(oh * p.stride + wh) * p.w +
                        ow * p.stride + ww];
          }
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
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(p.n) * p.c; ++pc) {
    const float* g_c = g + pc * p.oh * p.ow;
    float* gi_c = gi + pc * p.h * p.w;
    for (int ih = 0; ih < p.h; ++ih) {
      const int oh_hi = std::min(p.oh - 1, ih / p.stride);
      const int oh_lo = std::max(0, detail::ceil_div(ih - p.window + 1, p.stride));
      for (int iw = 0; iw < p.w; ++iw) {
        const int ow_hi = std::min(p.ow - 1, iw / p.stride);
        const int ow_lo = std::max(0, detail::ceil_div(iw - p.window + 1, p.stride));
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

}  // namespace grasp::serial
