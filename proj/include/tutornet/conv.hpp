#pragma once

// Spatial ops on NCHW tensors: convolution (im2col + GEMM), max pooling,
// nearest-neighbor upsampling, channel concatenation.

#include <cstring>
#include <limits>

#include "tutornet/tensor.hpp"

namespace tutornet {
namespace detail {

// Row-major GEMM kernels, all accumulate into C.
// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C) {
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) {
      double a = A[i * K + k];
      if (a == 0.0) continue;
      const double* b = B + k * N;
      double* c = C + i * N;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
}

// C[M,N] += A[M,K] * B[N,K]^T
inline void gemm_abt(int M, int N, int K, const double* A, const double* B, double* C) {
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      const double* a = A + i * K;
      const double* b = B + j * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_atb(int M, int N, int K, const double* A, const double* B, double* C) {
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < M; ++i) {
      double a = A[k * M + i];
      if (a == 0.0) continue;
      const double* b = B + k * N;
      double* c = C + i * N;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
}

// Unfolds one image [C,H,W] into col [C*KH*KW, OH*OW]; zero padding.
inline void im2col(const double* in, int C, int H, int W, int KH, int KW,
                   int stride, int pad, int OH, int OW, double* col) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        double* dst = col + ((static_cast<std::size_t>(c) * KH + kh) * KW + kw) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) {
            std::memset(dst + static_cast<std::size_t>(oh) * OW, 0, sizeof(double) * OW);
            continue;
          }
          const double* src = in + (static_cast<std::size_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            dst[static_cast<std::size_t>(oh) * OW + ow] =
                (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
}

// Scatter-adds a col gradient back onto the padded input layout.
inline void col2im_acc(const double* col, int C, int H, int W, int KH, int KW,
                       int stride, int pad, int OH, int OW, double* in_grad) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        const double* src = col + ((static_cast<std::size_t>(c) * KH + kh) * KW + kw) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          double* dst = in_grad + (static_cast<std::size_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) dst[iw] += src[static_cast<std::size_t>(oh) * OW + ow];
          }
        }
      }
}

}  // namespace detail

// input [N,IC,H,W], kernel [OC,IC,KH,KW], bias [OC] (pass an empty handle
// for none). Output spatial size floor((in + 2p - k)/stride) + 1.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     int stride, int padding) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4)
    throw TensorError("conv2d expects rank-4 input and kernel");
  if (stride < 1 || padding < 0) throw TensorError("conv2d: stride >= 1, padding >= 0");
  int N = is[0], IC = is[1], H = is[2], W = is[3];
  int OC = ks[0], KH = ks[2], KW = ks[3];
  if (ks[1] != IC)
    throw TensorError("conv2d: kernel expects " + std::to_string(ks[1]) +
                      " input channels, got " + std::to_string(IC));
  if (KH > H + 2 * padding || KW > W + 2 * padding)
    throw TensorError("conv2d: kernel larger than padded input");
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != OC))
    throw TensorError("conv2d: bias must have one value per output channel");
  int OH = (H + 2 * padding - KH) / stride + 1;
  int OW = (W + 2 * padding - KW) / stride + 1;

  const std::size_t colsz = static_cast<std::size_t>(IC) * KH * KW * OH * OW;
  const std::size_t osz = static_cast<std::size_t>(OC) * OH * OW;
  const bool unit = (KH == 1 && KW == 1 && stride == 1 && padding == 0);

  std::vector<double> out(static_cast<std::size_t>(N) * osz, 0.0);
  std::vector<double> col;
  if (!unit) col.resize(colsz);
  for (int n = 0; n < N; ++n) {
    const double* in = input.values().data() + static_cast<std::size_t>(n) * IC * H * W;
    const double* c = in;
    if (!unit) {
      detail::im2col(in, IC, H, W, KH, KW, stride, padding, OH, OW, col.data());
      c = col.data();
    }
    double* o = out.data() + static_cast<std::size_t>(n) * osz;
    detail::gemm_nn(OC, OH * OW, IC * KH * KW, kernel.values().data(), c, o);
    if (bias.defined())
      for (int oc = 0; oc < OC; ++oc) {
        double b = bias.values()[oc];
        for (int i = 0; i < OH * OW; ++i) o[static_cast<std::size_t>(oc) * OH * OW + i] += b;
      }
  }

  std::vector<Tensor> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  // The col buffer is recomputed in the backward pass instead of captured:
  // halves graph memory at the cost of one extra im2col.
  auto back = [input, kernel, bias, stride, padding, N, IC, H, W, OC, KH, KW, OH, OW,
               colsz, unit](Tensor::Impl& self) {
    const std::size_t osz = static_cast<std::size_t>(OC) * OH * OW;
    std::vector<double> col;
    if (!unit) col.resize(colsz);
    std::vector<double> dcol;
    if (!unit && input.needs_grad()) dcol.resize(colsz);
    if (kernel.needs_grad() && kernel.impl().grad.empty())
      kernel.impl().grad.assign(kernel.values().size(), 0.0);
    if (input.needs_grad() && input.impl().grad.empty())
      input.impl().grad.assign(input.values().size(), 0.0);
    if (bias.defined() && bias.needs_grad() && bias.impl().grad.empty())
      bias.impl().grad.assign(bias.values().size(), 0.0);
    for (int n = 0; n < N; ++n) {
      const double* dout = self.grad.data() + static_cast<std::size_t>(n) * osz;
      const double* in = input.values().data() + static_cast<std::size_t>(n) * IC * H * W;
      if (kernel.needs_grad()) {
        const double* c = in;
        if (!unit) {
          detail::im2col(in, IC, H, W, KH, KW, stride, padding, OH, OW, col.data());
          c = col.data();
        }
        detail::gemm_abt(OC, IC * KH * KW, OH * OW, dout, c, kernel.impl().grad.data());
      }
      if (input.needs_grad()) {
        double* dst = unit
            ? input.impl().grad.data() + static_cast<std::size_t>(n) * IC * H * W
            : (std::fill(dcol.begin(), dcol.end(), 0.0), dcol.data());
        detail::gemm_atb(IC * KH * KW, OH * OW, OC, kernel.values().data(), dout, dst);
        if (!unit)
          detail::col2im_acc(dcol.data(), IC, H, W, KH, KW, stride, padding, OH, OW,
                             input.impl().grad.data() + static_cast<std::size_t>(n) * IC * H * W);
      }
      if (bias.defined() && bias.needs_grad())
        for (int oc = 0; oc < OC; ++oc) {
          double acc = 0.0;
          for (int i = 0; i < OH * OW; ++i) acc += dout[static_cast<std::size_t>(oc) * OH * OW + i];
          bias.impl().grad[oc] += acc;
        }
    }
  };
  return detail::make_node({N, OC, OH, OW}, std::move(out), std::move(parents),
                           std::move(back));
}

// No implicit padding; windows must fit. Gradient goes to each window's
// argmax, ties to the first element in row-major scan order.
inline Tensor maxpool2d(const Tensor& input, int k, int stride) {
  const Shape& is = input.shape();
  if (is.size() != 4) throw TensorError("maxpool2d expects a rank-4 input");
  if (k < 1 || stride < 1) throw TensorError("maxpool2d: k and stride must be >= 1");
  int N = is[0], C = is[1], H = is[2], W = is[3];
  if (k > H || k > W) throw TensorError("maxpool2d: window exceeds input");
  int OH = (H - k) / stride + 1;
  int OW = (W - k) / stride + 1;

  std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* in = input.values().data();
  std::size_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = in + (static_cast<std::size_t>(n) * C + c) * H * W;
      std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              std::size_t idx = static_cast<std::size_t>(oh * stride + kh) * W +
                                (ow * stride + kw);
              if (plane[idx] > best) {
                best = plane[idx];
                best_i = idx;
              }
            }
          out[oi] = best;
          (*argmax)[oi] = base + best_i;
        }
    }
  return detail::make_node({N, C, OH, OW}, std::move(out), {input},
                           [input, argmax](Tensor::Impl& self) {
    auto& g = input.impl().grad;
    if (g.empty()) g.assign(input.values().size(), 0.0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      g[(*argmax)[i]] += self.grad[i];
  });
}

// Each input cell is replicated into a factor x factor block.
inline Tensor upsample_nearest(const Tensor& input, int factor) {
  const Shape& is = input.shape();
  if (is.size() != 4) throw TensorError("upsample_nearest expects a rank-4 input");
  if (factor < 1) throw TensorError("upsample_nearest: factor must be >= 1");
  int N = is[0], C = is[1], H = is[2], W = is[3];
  int OH = H * factor, OW = W * factor;
  std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
  const double* in = input.values().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const double* src = in + static_cast<std::size_t>(nc) * H * W;
    double* dst = out.data() + static_cast<std::size_t>(nc) * OH * OW;
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow)
        dst[static_cast<std::size_t>(oh) * OW + ow] =
            src[static_cast<std::size_t>(oh / factor) * W + ow / factor];
  }
  return detail::make_node({N, C, OH, OW}, std::move(out), {input},
                           [input, factor, N, C, H, W, OH, OW](Tensor::Impl& self) {
    auto& g = input.impl().grad;
    if (g.empty()) g.assign(input.values().size(), 0.0);
    for (int nc = 0; nc < N * C; ++nc) {
      const double* src = self.grad.data() + static_cast<std::size_t>(nc) * OH * OW;
      double* dst = g.data() + static_cast<std::size_t>(nc) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
          dst[static_cast<std::size_t>(oh / factor) * W + ow / factor] +=
              src[static_cast<std::size_t>(oh) * OW + ow];
    }
  });
}

// Concatenation along the channel axis; all parts share N, H, W.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 4) throw TensorError("concat_channels expects rank-4 inputs");
  int N = s0[0], H = s0[2], W = s0[3], C = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != N || s[2] != H || s[3] != W)
      throw TensorError("concat_channels: spatial/batch dims differ: " +
                        shape_str(s0) + " vs " + shape_str(s));
    C += s[1];
  }
  std::vector<double> out(static_cast<std::size_t>(N) * C * H * W);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::size_t coff = 0;
    for (const Tensor& p : parts) {
      int pc = p.shape()[1];
      std::memcpy(out.data() + (static_cast<std::size_t>(n) * C + coff) * plane,
                  p.values().data() + static_cast<std::size_t>(n) * pc * plane,
                  sizeof(double) * pc * plane);
      coff += pc;
    }
  }
  auto back = [parts, N, C, plane](Tensor::Impl& self) {
    for (int n = 0; n < N; ++n) {
      std::size_t coff = 0;
      for (const Tensor& p : parts) {
        int pc = p.shape()[1];
        if (p.needs_grad()) {
          auto& g = p.impl().grad;
          if (g.empty()) g.assign(p.values().size(), 0.0);
          const double* src = self.grad.data() + (static_cast<std::size_t>(n) * C + coff) * plane;
          double* dst = g.data() + static_cast<std::size_t>(n) * pc * plane;
          for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
        }
        coff += pc;
      }
    }
  };
  return detail::make_node({N, C, H, W}, std::move(out), parts, std::move(back));
}

}  // namespace tutornet
