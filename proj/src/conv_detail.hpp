#pragma once

// Row-level conv kernels shared by the OpenMP and serial entry points.
// Each output element accumulates in a fixed (ic, kh, kw) order with the
// channel dimension innermost, so results are identical no matter how the
// rows are scheduled across threads. Templating on the channel count lets
// the compiler keep the accumulator block in vector registers.
//
// Interior pixels additionally run through register-blocked fast paths that
// process several output columns per packed-weight load. Blocking spans
// independent output elements only; each element still sees the exact same
// sequence of adds, so the fast paths stay bit-identical to the scalar ones.

#include <algorithm>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "grasp/errors.hpp"
#include "grasp/tensor.hpp"

namespace grasp::detail {

struct ConvDims {
  int n, cin, h, w;
  int cout, k;
  int stride, pad;
  int oh, ow;
};

inline ConvDims conv_dims(const Tensor& input, const Tensor& kernel,
                          int stride, int padding) {
  require_ndim(input, 4, "conv2d input");
  require_ndim(kernel, 4, "conv2d kernel");
  if (kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d kernel must be square, got " + shape_str(kernel.shape));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input Cin=" +
                     std::to_string(input.dim(1)) + ", kernel Cin=" +
                     std::to_string(kernel.dim(1)));
  }
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d padding must be >= 0");
  ConvDims d;
  d.n = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = kernel.dim(0);
  d.k = kernel.dim(2);
  if (d.k > d.h + 2 * padding || d.k > d.w + 2 * padding) {
    throw ShapeError("conv2d kernel exceeds padded input extent");
  }
  d.stride = stride;
  d.pad = padding;
  d.oh = (d.h + 2 * padding - d.k) / stride + 1;
  d.ow = (d.w + 2 * padding - d.k) / stride + 1;
  return d;
}

// [Cout,Cin,k,k] -> [Cin*k*k][Cout]
inline std::vector<float> pack_kernel_oc_inner(const Tensor& kernel) {
  const int co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
  std::vector<float> packed(static_cast<std::size_t>(co) * ci * k * k);
  const float* src = kernel.ptr();
  for (int oc = 0; oc < co; ++oc) {
    for (int i = 0; i < ci * k * k; ++i) {
      packed[static_cast<std::size_t>(i) * co + oc] =
          src[static_cast<std::size_t>(oc) * ci * k * k + i];
    }
  }
  return packed;
}

// [Cout,Cin,k,k] -> [k*k*Cout][Cin]
inline std::vector<float> pack_kernel_ic_inner(const Tensor& kernel) {
  const int co = kernel.dim(0), ci = kernel.dim(1), k = kernel.dim(2);
  std::vector<float> packed(static_cast<std::size_t>(co) * ci * k * k);
  const float* src = kernel.ptr();
  for (int oc = 0; oc < co; ++oc) {
    for (int ic = 0; ic < ci; ++ic) {
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          packed[((static_cast<std::size_t>(kh) * k + kw) * co + oc) * ci + ic] =
              src[((static_cast<std::size_t>(oc) * ci + ic) * k + kh) * k + kw];
        }
      }
    }
  }
  return packed;
}

struct PoolDims {
  int n, c, h, w, window, stride, oh, ow;
};

inline PoolDims pool_dims(const std::vector<int>& shape, int window, int stride,
                          const char* what) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(what) + " expects 4-d input, got " + shape_str(shape));
  }
  if (window < 1 || stride < 1) {
    throw ShapeError(std::string(what) + " window and stride must be >= 1");
  }
  PoolDims p;
  p.n = shape[0];
  p.c = shape[1];
  p.h = shape[2];
  p.w = shape[3];
  p.window = window;
  p.stride = stride;
  if (window > p.h || window > p.w) {
    throw ShapeError(std::string(what) + " window " + std::to_string(window) +
                     " exceeds input " + shape_str(shape));
  }
  p.oh = (p.h - window) / stride + 1;
  p.ow = (p.w - window) / stride + 1;
  return p;
}

// b > 0
inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : a / b; }

inline constexpr int kMaxChannelBlock = 64;

// Kernels wider than this skip the blocked fast paths (tap lists live on the
// stack); correctness is unaffected, only speed.
inline constexpr int kMaxTap = 16;

// Output columns processed together in the blocked fast paths.
inline constexpr int kColBlock = 4;

// One output row (all channels, all columns) of sample n.
template <int OC>
void conv_fwd_row(const ConvDims& d, const float* in, const float* wpk,
                  const float* bias, float* out, int n, int oh) {
  const int oc_n = OC > 0 ? OC : d.cout;
  const int k = d.k;
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t oplane = static_cast<std::int64_t>(d.oh) * d.ow;
  const float* in_n = in + static_cast<std::int64_t>(n) * d.cin * plane;
  float* out_row = out + static_cast<std::int64_t>(n) * d.cout * oplane +
                   static_cast<std::int64_t>(oh) * d.ow;
  const int ih0 = oh * d.stride - d.pad;
  const int kh_lo = std::max(0, -ih0);
  const int kh_hi = std::min(k, d.h - ih0);

  const auto one = [&](int ow) {
    const int iw0 = ow * d.stride - d.pad;
    const int kw_lo = std::max(0, -iw0);
    const int kw_hi = std::min(k, d.w - iw0);
    float acc[OC > 0 ? OC : kMaxChannelBlock];
    for (int oc = 0; oc < oc_n; ++oc) acc[oc] = bias[oc];
    for (int ic = 0; ic < d.cin; ++ic) {
      const float* in_c = in_n + ic * plane;
      for (int kh = kh_lo; kh < kh_hi; ++kh) {
        const float* in_row = in_c + static_cast<std::int64_t>(ih0 + kh) * d.w + iw0;
        const float* wrow = wpk + (static_cast<std::int64_t>(ic) * k + kh) * k * oc_n;
        for (int kw = kw_lo; kw < kw_hi; ++kw) {
          const float xv = in_row[kw];
          const float* wv = wrow + kw * oc_n;
          for (int oc = 0; oc < oc_n; ++oc) acc[oc] += xv * wv[oc];
        }
      }
    }
    for (int oc = 0; oc < oc_n; ++oc) out_row[oc * oplane + ow] = acc[oc];
  };

  // Columns whose full kw window lies inside the row: kw_lo == 0, kw_hi == k.
  const int full_lo = std::min(d.ow, ceil_div(d.pad, d.stride));
  const int full_hi = d.w - k + d.pad >= 0
                          ? std::min(d.ow, (d.w - k + d.pad) / d.stride + 1)
                          : 0;

  int ow = 0;
  for (; ow < full_lo; ++ow) one(ow);
  // Separate named accumulators (not a 2D array) so each stays small enough
  // for the compiler to promote into vector registers.
  for (; ow + kColBlock <= full_hi; ow += kColBlock) {
    constexpr int OCN = OC > 0 ? OC : kMaxChannelBlock;
    float a0[OCN], a1[OCN], a2[OCN], a3[OCN];
    for (int oc = 0; oc < oc_n; ++oc) {
      a0[oc] = bias[oc];
      a1[oc] = bias[oc];
      a2[oc] = bias[oc];
      a3[oc] = bias[oc];
    }
    const int s = d.stride;
    const int iw0 = ow * s - d.pad;
    for (int ic = 0; ic < d.cin; ++ic) {
      const float* in_c = in_n + ic * plane;
      for (int kh = kh_lo; kh < kh_hi; ++kh) {
        const float* in_row = in_c + static_cast<std::int64_t>(ih0 + kh) * d.w + iw0;
        const float* wrow = wpk + (static_cast<std::int64_t>(ic) * k + kh) * k * oc_n;
        for (int kw = 0; kw < k; ++kw) {
          const float* wv = wrow + kw * oc_n;
          const float x0 = in_row[kw];
          const float x1 = in_row[kw + s];
          const float x2 = in_row[kw + 2 * s];
          const float x3 = in_row[kw + 3 * s];
          for (int oc = 0; oc < oc_n; ++oc) a0[oc] += x0 * wv[oc];
          for (int oc = 0; oc < oc_n; ++oc) a1[oc] += x1 * wv[oc];
          for (int oc = 0; oc < oc_n; ++oc) a2[oc] += x2 * wv[oc];
          for (int oc = 0; oc < oc_n; ++oc) a3[oc] += x3 * wv[oc];
        }
      }
    }
    for (int oc = 0; oc < oc_n; ++oc) {
      float* cell = out_row + oc * oplane + ow;
      cell[0] = a0[oc];
      cell[1] = a1[oc];
      cell[2] = a2[oc];
      cell[3] = a3[oc];
    }
  }
  for (; ow < d.ow; ++ow) one(ow);
}

// One grad-input row of sample n; accumulation order (kh, kw, oc) per cell.
template <int IC>
void conv_gi_row(const ConvDims& d, const float* g, const float* wpk_ic,
                 float* gi, int n, int ih) {
  const int ic_n = IC > 0 ? IC : d.cin;
  const int k = d.k;
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t oplane = static_cast<std::int64_t>(d.oh) * d.ow;
  const float* g_n = g + static_cast<std::int64_t>(n) * d.cout * oplane;
  float* gi_row = gi + static_cast<std::int64_t>(n) * d.cin * plane +
                  static_cast<std::int64_t>(ih) * d.w;

  const auto one = [&](int iw) {
    float acc[IC > 0 ? IC : kMaxChannelBlock];
    for (int ic = 0; ic < ic_n; ++ic) acc[ic] = 0.0f;
    for (int kh = 0; kh < k; ++kh) {
      const int ihp = ih + d.pad - kh;
      if (ihp < 0) break;  // ihp decreases with kh, stays negative
      if (ihp % d.stride != 0) continue;
      const int oh = ihp / d.stride;
      if (oh >= d.oh) continue;
      for (int kw = 0; kw < k; ++kw) {
        const int iwp = iw + d.pad - kw;
        if (iwp < 0) break;
        if (iwp % d.stride != 0) continue;
        const int ow = iwp / d.stride;
        if (ow >= d.ow) continue;
        const float* g_cell = g_n + static_cast<std::int64_t>(oh) * d.ow + ow;
        const float* wrow = wpk_ic + (static_cast<std::int64_t>(kh) * k + kw) * d.cout * ic_n;
        for (int oc = 0; oc < d.cout; ++oc) {
          const float gv = g_cell[oc * oplane];
          const float* wv = wrow + oc * ic_n;
          for (int ic = 0; ic < ic_n; ++ic) acc[ic] += gv * wv[ic];
        }
      }
    }
    for (int ic = 0; ic < ic_n; ++ic) gi_row[ic * plane + iw] = acc[ic];
  };

  if (k > kMaxTap) {
    for (int iw = 0; iw < d.w; ++iw) one(iw);
    return;
  }

  // Taps hitting this row: kh with ih + pad - kh a valid multiple of stride.
  int khs[kMaxTap];
  int ohs[kMaxTap];
  int nkh = 0;
  for (int kh = 0; kh < k; ++kh) {
    const int ihp = ih + d.pad - kh;
    if (ihp < 0) break;
    if (ihp % d.stride != 0) continue;
    const int oh = ihp / d.stride;
    if (oh < d.oh) {
      khs[nkh] = kh;
      ohs[nkh] = oh;
      ++nkh;
    }
  }

  const int s = d.stride;
  for (int r = 0; r < s && r < d.w; ++r) {
    // Taps for columns iw ≡ r (mod s): kw ≡ (r + pad) (mod s), ascending.
    int kws[kMaxTap];
    int nkw = 0;
    for (int kw = (r + d.pad) % s; kw < k; kw += s) kws[nkw++] = kw;
    if (nkh == 0 || nkw == 0) {
      for (int iw = r; iw < d.w; iw += s) one(iw);
      continue;
    }
    // Block of kColBlock columns is fully interior when every tap maps to a
    // valid ow for all columns; ow is largest for kws[0], smallest for the
    // last tap.
    const int lo_bound = kws[nkw - 1] - d.pad;
    const int hi_bound = s * (d.ow - 1) - (kColBlock - 1) * s + kws[0] - d.pad;
    int iw = r;
    for (; iw < d.w && iw < lo_bound; iw += s) one(iw);
    for (; iw <= hi_bound && iw + (kColBlock - 1) * s < d.w; iw += kColBlock * s) {
      constexpr int ICN = IC > 0 ? IC : kMaxChannelBlock;
      float a0[ICN], a1[ICN], a2[ICN], a3[ICN];
      for (int ic = 0; ic < ic_n; ++ic) {
        a0[ic] = 0.0f;
        a1[ic] = 0.0f;
        a2[ic] = 0.0f;
        a3[ic] = 0.0f;
      }
      for (int t = 0; t < nkh; ++t) {
        const int kh = khs[t];
        const float* g_row = g_n + static_cast<std::int64_t>(ohs[t]) * d.ow;
        for (int m = 0; m < nkw; ++m) {
          const int kw = kws[m];
          const int ow0 = (iw + d.pad - kw) / s;
          const float* wrow = wpk_ic + (static_cast<std::int64_t>(kh) * k + kw) * d.cout * ic_n;
          for (int oc = 0; oc < d.cout; ++oc) {
            const float* gv = g_row + static_cast<std::int64_t>(oc) * oplane + ow0;
            const float* wv = wrow + oc * ic_n;
            const float g0 = gv[0];
            const float g1 = gv[1];
            const float g2 = gv[2];
            const float g3 = gv[3];
            for (int ic = 0; ic < ic_n; ++ic) a0[ic] += g0 * wv[ic];
            for (int ic = 0; ic < ic_n; ++ic) a1[ic] += g1 * wv[ic];
            for (int ic = 0; ic < ic_n; ++ic) a2[ic] += g2 * wv[ic];
            for (int ic = 0; ic < ic_n; ++ic) a3[ic] += g3 * wv[ic];
          }
        }
      }
      for (int ic = 0; ic < ic_n; ++ic) {
        float* cell = gi_row + ic * plane + iw;
        cell[0] = a0[ic];
        cell[s] = a1[ic];
        cell[2 * s] = a2[ic];
        cell[3 * s] = a3[ic];
      }
    }
    for (; iw < d.w; iw += s) one(iw);
  }
}

// Accumulates sample n's contribution to the packed kernel gradient
// gk_t[ic*k*k + kh*k + kw][oc]. gt_n is grad_out transposed to [oh][ow][oc].
// Per-element accumulation order over (oh, ow) is fixed; the caller iterates
// n in order, so the full order is (n, oh, ow) regardless of scheduling.
template <int OC>
void conv_gk_channel(const ConvDims& d, const float* in_n, const float* gt_n,
                     float* gk_t, int ic) {
  const int oc_n = OC > 0 ? OC : d.cout;
  const int k = d.k;
  const std::int64_t plane = static_cast<std::int64_t>(d.h) * d.w;
  const float* in_c = in_n + ic * plane;

  // Original per-(kh, kw) sweep; kept for kernels too wide to block.
  const auto one_cell = [&](int kh, int kw, int oh_lo, int oh_hi) {
    int ow_lo = 0;
    if (kw < d.pad) ow_lo = (d.pad - kw + d.stride - 1) / d.stride;
    const int max_iw = d.w - 1 - kw + d.pad;
    if (max_iw < 0) return;
    const int ow_hi = std::min(d.ow, max_iw / d.stride + 1);
    float acc[OC > 0 ? OC : kMaxChannelBlock];
    for (int oc = 0; oc < oc_n; ++oc) acc[oc] = 0.0f;
    for (int oh = oh_lo; oh < oh_hi; ++oh) {
      const int ih = oh * d.stride + kh - d.pad;
      const float* in_row = in_c + static_cast<std::int64_t>(ih) * d.w - d.pad + kw;
      const float* gt_row = gt_n + (static_cast<std::int64_t>(oh) * d.ow) * oc_n;
      for (int ow = ow_lo; ow < ow_hi; ++ow) {
        const float xv = in_row[ow * d.stride];
        const float* gv = gt_row + ow * oc_n;
        for (int oc = 0; oc < oc_n; ++oc) acc[oc] += xv * gv[oc];
      }
    }
    float* dst = gk_t + ((static_cast<std::int64_t>(ic) * k + kh) * k + kw) * oc_n;
    for (int oc = 0; oc < oc_n; ++oc) dst[oc] += acc[oc];
  };

  for (int kh = 0; kh < k; ++kh) {
    // oh range with ih = oh*stride + kh - pad inside [0, h)
    int oh_lo = 0;
    if (kh < d.pad) oh_lo = (d.pad - kh + d.stride - 1) / d.stride;
    const int max_ih = d.h - 1 - kh + d.pad;
    if (max_ih < 0) continue;
    const int oh_hi = std::min(d.oh, max_ih / d.stride + 1);

    if (k > kMaxTap) {
      for (int kw = 0; kw < k; ++kw) one_cell(kh, kw, oh_lo, oh_hi);
      continue;
    }

    // One pass over grad rows feeds every kw tap of this kh, so each gt_row
    // load is shared k ways. Per tap the (oh asc, ow asc) add order matches
    // one_cell exactly; the prologue/interior/epilogue split within a row
    // only partitions the same ascending ow sweep.
    int ow_lo[kMaxTap];
    int ow_hi[kMaxTap];
    int lo_int = 0;
    int hi_int = d.ow;
    bool any = false;
    for (int kw = 0; kw < k; ++kw) {
      ow_lo[kw] = kw < d.pad ? (d.pad - kw + d.stride - 1) / d.stride : 0;
      const int max_iw = d.w - 1 - kw + d.pad;
      ow_hi[kw] = max_iw < 0 ? ow_lo[kw] : std::min(d.ow, max_iw / d.stride + 1);
      if (ow_hi[kw] > ow_lo[kw]) any = true;
      lo_int = std::max(lo_int, ow_lo[kw]);
      hi_int = std::min(hi_int, ow_hi[kw]);
    }
    if (!any) continue;
    if (hi_int < lo_int) {
      // Tap ranges have no common interior (k wider than the input); the
      // three-way split below would overlap, so sweep per cell instead.
      for (int kw = 0; kw < k; ++kw) one_cell(kh, kw, oh_lo, oh_hi);
      continue;
    }
    float acc[kMaxTap][OC > 0 ? OC : kMaxChannelBlock];
    for (int kw = 0; kw < k; ++kw) {
      for (int oc = 0; oc < oc_n; ++oc) acc[kw][oc] = 0.0f;
    }
    for (int oh = oh_lo; oh < oh_hi; ++oh) {
      const int ih = oh * d.stride + kh - d.pad;
      const float* in_row = in_c + static_cast<std::int64_t>(ih) * d.w - d.pad;
      const float* gt_row = gt_n + (static_cast<std::int64_t>(oh) * d.ow) * oc_n;
      for (int kw = 0; kw < k; ++kw) {
        const int stop = std::min(lo_int, ow_hi[kw]);
        for (int ow = ow_lo[kw]; ow < stop; ++ow) {
          const float xv = in_row[ow * d.stride + kw];
          const float* gv = gt_row + ow * oc_n;
          for (int oc = 0; oc < oc_n; ++oc) acc[kw][oc] += xv * gv[oc];
        }
      }
      for (int ow = lo_int; ow < hi_int; ++ow) {
        const float* gv = gt_row + ow * oc_n;
        const float* in_cell = in_row + ow * d.stride;
        for (int kw = 0; kw < k; ++kw) {
          const float xv = in_cell[kw];
          for (int oc = 0; oc < oc_n; ++oc) acc[kw][oc] += xv * gv[oc];
        }
      }
      for (int kw = 0; kw < k; ++kw) {
        for (int ow = std::max(hi_int, ow_lo[kw]); ow < ow_hi[kw]; ++ow) {
          const float xv = in_row[ow * d.stride + kw];
          const float* gv = gt_row + ow * oc_n;
          for (int oc = 0; oc < oc_n; ++oc) acc[kw][oc] += xv * gv[oc];
        }
      }
    }
    float* dst_kh = gk_t + ((static_cast<std::int64_t>(ic) * k + kh) * k) * oc_n;
    for (int kw = 0; kw < k; ++kw) {
      if (ow_hi[kw] <= ow_lo[kw]) continue;
      float* dst = dst_kh + static_cast<std::int64_t>(kw) * oc_n;
      for (int oc = 0; oc < oc_n; ++oc) dst[oc] += acc[kw][oc];
    }
  }
}

// grad_out [n][oc][oh][ow] -> [oh][ow][oc] for one sample.
inline void transpose_grad(const ConvDims& d, const float* g_n, float* gt_n) {
  const std::int64_t oplane = static_cast<std::int64_t>(d.oh) * d.ow;
  for (int oc = 0; oc < d.cout; ++oc) {
    const float* src = g_n + oc * oplane;
    for (std::int64_t i = 0; i < oplane; ++i) gt_n[i * d.cout + oc] = src[i];
  }
}

template <typename F>
void dispatch_channels(int channels, F&& f) {
  switch (channels) {
    case 1:  f(std::integral_constant<int, 1>{});  break;
    case 3:  f(std::integral_constant<int, 3>{});  break;
    case 8:  f(std::integral_constant<int, 8>{});  break;
    case 16: f(std::integral_constant<int, 16>{}); break;
    default:
      if (channels > kMaxChannelBlock) {
        throw ShapeError("conv2d supports at most " +
                         std::to_string(kMaxChannelBlock) + " channels");
      }
      f(std::integral_constant<int, 0>{});
      break;
  }
}

}  // namespace grasp::detail
