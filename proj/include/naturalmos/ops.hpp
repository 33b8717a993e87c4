#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "naturalmos/rng.hpp"
#include "naturalmos/tensor.hpp"

namespace naturalmos {

namespace detail {

/// C[M,N] += A[M,K] * B[K,N]. The kernel walks rows of B with axpy updates,
/// blocked four rows of C at a time and four steps of k at a time so each
/// streamed row of B feeds sixteen fused updates. Per output element the
/// additions still happen in ascending k order, and every lane is an
/// independent accumulator, so the loop vectorizes without reassociation
/// and the result does not depend on the blocking.
template <typename T>
void gemm_acc(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N) {
  const std::size_t m4 = M - M % 4;
  const std::size_t k4 = K - K % 4;
  std::size_t i = 0;
  for (; i < m4; i += 4) {
    const T* a0 = A + i * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    T* c0 = C + i * N;
    T* c1 = c0 + N;
    T* c2 = c1 + N;
    T* c3 = c2 + N;
    std::size_t k = 0;
    for (; k < k4; k += 4) {
      const T* b0 = B + k * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
      const T w00 = a0[k], w01 = a0[k + 1], w02 = a0[k + 2], w03 = a0[k + 3];
      const T w10 = a1[k], w11 = a1[k + 1], w12 = a1[k + 2], w13 = a1[k + 3];
      const T w20 = a2[k], w21 = a2[k + 1], w22 = a2[k + 2], w23 = a2[k + 3];
      const T w30 = a3[k], w31 = a3[k + 1], w32 = a3[k + 2], w33 = a3[k + 3];
      for (std::size_t j = 0; j < N; ++j) {
        const T bv0 = b0[j], bv1 = b1[j], bv2 = b2[j], bv3 = b3[j];
        T v0 = c0[j], v1 = c1[j], v2 = c2[j], v3 = c3[j];
        v0 += w00 * bv0; v0 += w01 * bv1; v0 += w02 * bv2; v0 += w03 * bv3;
        v1 += w10 * bv0; v1 += w11 * bv1; v1 += w12 * bv2; v1 += w13 * bv3;
        v2 += w20 * bv0; v2 += w21 * bv1; v2 += w22 * bv2; v2 += w23 * bv3;
        v3 += w30 * bv0; v3 += w31 * bv1; v3 += w32 * bv2; v3 += w33 * bv3;
        c0[j] = v0; c1[j] = v1; c2[j] = v2; c3[j] = v3;
      }
    }
    for (; k < K; ++k) {
      const T* b = B + k * N;
      const T w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
      for (std::size_t j = 0; j < N; ++j) {
        const T bv = b[j];
        c0[j] += w0 * bv;
        c1[j] += w1 * bv;
        c2[j] += w2 * bv;
        c3[j] += w3 * bv;
      }
    }
  }
  for (; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    std::size_t k = 0;
    for (; k < k4; k += 4) {
      const T w0 = a[k], w1 = a[k + 1], w2 = a[k + 2], w3 = a[k + 3];
      const T* b0 = B + k * N;
      const T* b1 = b0 + N;
      const T* b2 = b1 + N;
      const T* b3 = b2 + N;
      for (std::size_t j = 0; j < N; ++j) {
        T v = c[j];
        v += w0 * b0[j];
        v += w1 * b1[j];
        v += w2 * b2[j];
        v += w3 * b3[j];
        c[j] = v;
      }
    }
    for (; k < K; ++k) {
      const T w = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += w * b[j];
    }
  }
}

/// C[M,R] += A[M,N] * B[R,N]^T, as row-against-row dot products. Lane-wise
/// partial sums with a fixed reduction order keep the result reproducible
/// while still exposing enough independent accumulators to vectorize.
template <typename T>
void gemm_abt(const T* A, const T* B, T* C, std::size_t M, std::size_t R, std::size_t N) {
  constexpr std::size_t kLanes = 32;
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * N;
    T* c = C + i * R;
    for (std::size_t r = 0; r < R; ++r) {
      const T* b = B + r * N;
      T lanes[kLanes] = {};
      std::size_t j = 0;
      for (; j + kLanes <= N; j += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[j + l] * b[j + l];
      T sum = T(0);
      for (; j < N; ++j) sum += a[j] * b[j];
      for (std::size_t l = 0; l < kLanes; ++l) sum += lanes[l];
      c[r] += sum;
    }
  }
}

template <typename T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

/// Unfold one [Cin, H, W] image into columns for a 3x3, stride-1, pad-1
/// convolution. The destination is one item's column block inside a matrix
/// of `row_stride` columns per row (so a whole batch shares one matrix and
/// the convolution becomes a single wide GEMM).
template <typename T>
void im2col_3x3(const T* in, std::size_t cin, std::size_t h, std::size_t w, T* col,
                std::size_t row_stride) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    const T* plane = in + c * hw;
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        T* row = col + ((c * 3 + kh) * 3 + kw) * row_stride;
        for (std::size_t y = 0; y < h; ++y) {
          const long iy = static_cast<long>(y) + kh - 1;
          T* dst = row + y * w;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          const long shift = kw - 1;  // ix = x + shift
          const std::size_t x0 = shift < 0 ? 1 : 0;
          const std::size_t x1 = shift > 0 ? w - 1 : w;
          if (x0 > 0) dst[0] = T(0);
          if (x1 < w) dst[w - 1] = T(0);
          std::copy(src + x0 + shift, src + x1 + shift, dst + x0);
        }
      }
    }
  }
}

/// Scatter-add of one item's column-gradient block back onto its
/// [Cin, H, W] image. Mirrors im2col_3x3's layout.
template <typename T>
void col2im_3x3(const T* col, std::size_t cin, std::size_t h, std::size_t w, T* din,
                std::size_t row_stride) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    T* plane = din + c * hw;
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const T* row = col + ((c * 3 + kh) * 3 + kw) * row_stride;
        for (std::size_t y = 0; y < h; ++y) {
          const long iy = static_cast<long>(y) + kh - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const long shift = kw - 1;
          const std::size_t x0 = shift < 0 ? 1 : 0;
          const std::size_t x1 = shift > 0 ? w - 1 : w;
          const T* src = row + y * w;
          for (std::size_t x = x0; x < x1; ++x) dst[x + shift] += src[x];
        }
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero padding 1 (same-size output).
/// input [B,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] -> [B,Cout,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.shape().size() != 4) throw std::invalid_argument("conv2d: input must be 4-D");
  if (weight.shape().size() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3)
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,3,3]");
  const std::size_t b = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin)
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(cin) +
                                ", weight expects " + std::to_string(weight.dim(1)));
  if (bias.numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");

  const std::size_t hw = h * w, k = cin * 9;
  const std::size_t colw = b * hw;  // one column block per batch item

  // One wide column matrix [k, b*hw] for the whole batch, one GEMM, then a
  // scatter from the [cout, b*hw] product into [b, cout, hw] layout.
  auto cols = std::make_shared<std::vector<T>>(k * colw);
  for (std::size_t i = 0; i < b; ++i)
    detail::im2col_3x3(input.data() + i * cin * hw, cin, h, w, cols->data() + i * hw, colw);

  std::vector<T> prod(cout * colw, T(0));
  detail::gemm_acc(weight.data(), cols->data(), prod.data(), cout, k, colw);

  std::vector<T> out(b * cout * hw);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t c = 0; c < cout; ++c) {
      const T bc = bias.data()[c];
      const T* src = prod.data() + c * colw + i * hw;
      T* dst = out.data() + (i * cout + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] = src[j] + bc;
    }

  auto backward = [b, cin, cout, h, w, hw, k, colw, cols](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    auto& w_node = *self.parents[1];
    auto& b_node = *self.parents[2];

    // Gather the output gradient into the [cout, b*hw] GEMM layout.
    std::vector<T> gout(cout * colw);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < cout; ++c)
        std::copy(self.grad.data() + (i * cout + c) * hw,
                  self.grad.data() + (i * cout + c + 1) * hw,
                  gout.data() + c * colw + i * hw);

    if (b_node.requires_grad)
      for (std::size_t c = 0; c < cout; ++c) {
        T acc = T(0);
        const T* gc = gout.data() + c * colw;
        for (std::size_t j = 0; j < colw; ++j) acc += gc[j];
        b_node.grad[c] += acc;
      }
    if (w_node.requires_grad)
      detail::gemm_abt(gout.data(), cols->data(), w_node.grad.data(), cout, k, colw);
    if (in_node.requires_grad) {
      const std::vector<T> wt = detail::transpose(w_node.values.data(), cout, k);  // [k, cout]
      std::vector<T> dcol(k * colw, T(0));
      detail::gemm_acc(wt.data(), gout.data(), dcol.data(), k, cout, colw);
      for (std::size_t i = 0; i < b; ++i)
        detail::col2im_3x3(dcol.data() + i * hw, cin, h, w,
                           in_node.grad.data() + i * cin * hw, colw);
    }
  };

  return Tensor<T>::make_op({b, cout, h, w}, std::move(out), {input, weight, bias},
                            std::move(backward));
}

/// Per-channel batch normalization over (B, H, W). Train mode uses batch
/// statistics and updates the running estimates in place (momentum 0.1,
/// unbiased variance); eval mode reads the running estimates and mutates
/// nothing.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                      double eps = 1e-5, double momentum = 0.1) {
  if (input.shape().size() != 4) throw std::invalid_argument("batchnorm2d: input must be 4-D");
  const std::size_t b = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.numel() != ch || beta.numel() != ch || running_mean.numel() != ch ||
      running_var.numel() != ch)
    throw std::invalid_argument("batchnorm2d: parameter size mismatch");
  const std::size_t hw = h * w;
  const std::size_t n = b * hw;
  if (train && n < 2)
    throw std::invalid_argument("batchnorm2d: train mode needs B*H*W >= 2");

  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto invstd = std::make_shared<std::vector<T>>(ch);
  std::vector<T> out(input.numel());

  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (train) {
      double acc = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const T* p = input.data() + (i * ch + c) * hw;
        for (std::size_t j = 0; j < hw; ++j) acc += static_cast<double>(p[j]);
      }
      mean = acc / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const T* p = input.data() + (i * ch + c) * hw;
        for (std::size_t j = 0; j < hw; ++j) {
          const double d = static_cast<double>(p[j]) - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(n);
      const double unbiased = n > 1 ? sq / static_cast<double>(n - 1) : var;
      running_mean.data()[c] =
          static_cast<T>((1.0 - momentum) * static_cast<double>(running_mean.data()[c]) +
                         momentum * mean);
      running_var.data()[c] =
          static_cast<T>((1.0 - momentum) * static_cast<double>(running_var.data()[c]) +
                         momentum * unbiased);
    } else {
      mean = static_cast<double>(running_mean.data()[c]);
      var = static_cast<double>(running_var.data()[c]);
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*invstd)[c] = istd;
    const T g = gamma.data()[c], bt = beta.data()[c], mu = static_cast<T>(mean);
    for (std::size_t i = 0; i < b; ++i) {
      const T* p = input.data() + (i * ch + c) * hw;
      T* xh = xhat->data() + (i * ch + c) * hw;
      T* o = out.data() + (i * ch + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        xh[j] = (p[j] - mu) * istd;
        o[j] = g * xh[j] + bt;
      }
    }
  }

  auto backward = [b, ch, hw, n, train, xhat, invstd](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    auto& g_node = *self.parents[1];
    auto& beta_node = *self.parents[2];
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const T* gy = self.grad.data() + (i * ch + c) * hw;
        const T* xh = xhat->data() + (i * ch + c) * hw;
        for (std::size_t j = 0; j < hw; ++j) {
          sum_dy += static_cast<double>(gy[j]);
          sum_dy_xh += static_cast<double>(gy[j]) * static_cast<double>(xh[j]);
        }
      }
      if (g_node.requires_grad) g_node.grad[c] += static_cast<T>(sum_dy_xh);
      if (beta_node.requires_grad) beta_node.grad[c] += static_cast<T>(sum_dy);
      if (!in_node.requires_grad) continue;
      const T g = g_node.values[c], istd = (*invstd)[c];
      if (train) {
        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(n));
        const T mean_dy_xh = static_cast<T>(sum_dy_xh / static_cast<double>(n));
        for (std::size_t i = 0; i < b; ++i) {
          const T* gy = self.grad.data() + (i * ch + c) * hw;
          const T* xh = xhat->data() + (i * ch + c) * hw;
          T* gi = in_node.grad.data() + (i * ch + c) * hw;
          for (std::size_t j = 0; j < hw; ++j)
            gi[j] += g * istd * (gy[j] - mean_dy - xh[j] * mean_dy_xh);
        }
      } else {
        for (std::size_t i = 0; i < b; ++i) {
          const T* gy = self.grad.data() + (i * ch + c) * hw;
          T* gi = in_node.grad.data() + (i * ch + c) * hw;
          for (std::size_t j = 0; j < hw; ++j) gi[j] += g * istd * gy[j];
        }
      }
    }
  };

  return Tensor<T>::make_op(input.shape(), std::move(out), {input, gamma, beta},
                            std::move(backward));
}

/// Elementwise max(0, x). The subgradient at exactly zero is zero.
template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < input.numel(); ++i)
    out[i] = input.data()[i] > T(0) ? input.data()[i] : T(0);

  auto backward = [](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (in_node.values[i] > T(0)) in_node.grad[i] += self.grad[i];
  };
  return Tensor<T>::make_op(input.shape(), std::move(out), {input}, std::move(backward));
}

/// 2x2 max pooling, stride 2, ceil mode (a trailing partial window is kept).
/// Gradient routes to the argmax; ties go to the first element in scan order.
template <typename T>
Tensor<T> maxpool2d_ceil(const Tensor<T>& input) {
  if (input.shape().size() != 4) throw std::invalid_argument("maxpool2d_ceil: input must be 4-D");
  const std::size_t b = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;

  std::vector<T> out(b * ch * ho * wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  std::size_t oi = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* plane = input.data() + (i * ch + c) * h * w;
      const std::size_t base = (i * ch + c) * h * w;
      for (std::size_t y = 0; y < ho; ++y) {
        for (std::size_t x = 0; x < wo; ++x, ++oi) {
          const std::size_t y0 = 2 * y, x0 = 2 * x;
          const std::size_t y1 = std::min(y0 + 2, h), x1 = std::min(x0 + 2, w);
          T best = plane[y0 * w + x0];
          std::size_t best_idx = y0 * w + x0;
          for (std::size_t yy = y0; yy < y1; ++yy)
            for (std::size_t xx = x0; xx < x1; ++xx)
              if (plane[yy * w + xx] > best) {
                best = plane[yy * w + xx];
                best_idx = yy * w + xx;
              }
          out[oi] = best;
          (*argmax)[oi] = static_cast<std::uint32_t>(base + best_idx);
        }
      }
    }
  }

  auto backward = [argmax](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      in_node.grad[(*argmax)[i]] += self.grad[i];
  };
  return Tensor<T>::make_op({b, ch, ho, wo}, std::move(out), {input}, std::move(backward));
}

/// Inverted dropout: in train mode each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p); eval mode (and p == 0) is identity.
/// The mask is a pure function of the stream, keyed per element.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double p, bool train, const RngStream& stream) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0) return input;

  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < input.numel(); ++i)
    out[i] = stream.uniform(i) < p ? T(0) : input.data()[i] * scale;

  auto backward = [p, scale, stream](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (stream.uniform(i) >= p) in_node.grad[i] += self.grad[i] * scale;
  };
  return Tensor<T>::make_op(input.shape(), std::move(out), {input}, std::move(backward));
}

/// Affine map over the last axis: input [..., Din] -> [..., Dout] with
/// weight [Dout, Din] and bias [Dout].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.shape().size() != 2) throw std::invalid_argument("linear: weight must be 2-D");
  const std::size_t dout = weight.dim(0), din = weight.dim(1);
  if (input.shape().empty() || input.shape().back() != din)
    throw std::invalid_argument("linear: input last dim " +
                                (input.shape().empty() ? std::string("<none>")
                                                       : std::to_string(input.shape().back())) +
                                " != weight Din " + std::to_string(din));
  if (bias.numel() != dout) throw std::invalid_argument("linear: bias size mismatch");
  const std::size_t m = input.numel() / din;

  std::vector<T> wt = detail::transpose(weight.data(), dout, din);  // [din, dout]
  std::vector<T> out(m * dout);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(bias.data(), bias.data() + dout, out.data() + i * dout);
  detail::gemm_acc(input.data(), wt.data(), out.data(), m, din, dout);

  auto out_shape = input.shape();
  out_shape.back() = dout;

  auto backward = [m, din, dout](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    auto& w_node = *self.parents[1];
    auto& b_node = *self.parents[2];
    const T* g = self.grad.data();
    if (b_node.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < dout; ++o) b_node.grad[o] += g[i * dout + o];
    if (w_node.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < dout; ++o) {
          const T a = g[i * dout + o];
          if (a == T(0)) continue;
          const T* x = in_node.values.data() + i * din;
          T* dw = w_node.grad.data() + o * din;
          for (std::size_t k = 0; k < din; ++k) dw[k] += a * x[k];
        }
    if (in_node.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < dout; ++o) {
          const T a = g[i * dout + o];
          if (a == T(0)) continue;
          const T* wrow = w_node.values.data() + o * din;
          T* dx = in_node.grad.data() + i * din;
          for (std::size_t k = 0; k < din; ++k) dx[k] += a * wrow[k];
        }
  };

  return Tensor<T>::make_op(std::move(out_shape), std::move(out), {input, weight, bias},
                            std::move(backward));
}

/// Copy-reshape; gradient flows back flat.
template <typename T>
Tensor<T> reshape(const Tensor<T>& input, std::vector<std::size_t> shape) {
  if (detail::shape_numel(shape) != input.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  auto backward = [](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) in_node.grad[i] += self.grad[i];
  };
  return Tensor<T>::make_op(std::move(shape), input.values(), {input}, std::move(backward));
}

/// Rows [start, start+count) of a matrix-like tensor (first axis indexes rows).
template <typename T>
Tensor<T> narrow_rows(const Tensor<T>& input, std::size_t start, std::size_t count) {
  if (input.shape().empty()) throw std::invalid_argument("narrow_rows: scalar input");
  const std::size_t rows = input.dim(0);
  if (start + count > rows) throw std::invalid_argument("narrow_rows: range out of bounds");
  const std::size_t stride = input.numel() / rows;

  std::vector<T> out(count * stride);
  std::copy(input.data() + start * stride, input.data() + (start + count) * stride, out.data());
  auto shape = input.shape();
  shape[0] = count;

  auto backward = [start, stride](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      in_node.grad[start * stride + i] += self.grad[i];
  };
  return Tensor<T>::make_op(std::move(shape), std::move(out), {input}, std::move(backward));
}

/// Stack scalar tensors into a vector [B].
template <typename T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("stack_scalars: empty batch");
  std::vector<T> out;
  out.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.numel() != 1) throw std::invalid_argument("stack_scalars: non-scalar element");
    out.push_back(s.data()[0]);
  }
  auto backward = [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->grad[0] += self.grad[i];
  };
  return Tensor<T>::make_op({scalars.size()}, std::move(out), scalars, std::move(backward));
}

/// Sum of all elements, as a scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  T acc = T(0);
  for (std::size_t i = 0; i < input.numel(); ++i) acc += input.data()[i];
  auto backward = [](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (auto& g : in_node.grad) g += self.grad[0];
  };
  return Tensor<T>::make_op({1}, {acc}, {input}, std::move(backward));
}

/// Mean squared error between two equal-length vectors.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.numel() == 0) throw std::invalid_argument("mse_loss: empty batch");
  if (pred.numel() != target.numel())
    throw std::invalid_argument("mse_loss: length mismatch " + std::to_string(pred.numel()) +
                                " vs " + std::to_string(target.numel()));
  const std::size_t n = pred.numel();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  acc /= static_cast<T>(n);

  auto backward = [n](typename Tensor<T>::Node& self) {
    auto& p_node = *self.parents[0];
    auto& t_node = *self.parents[1];
    const T g = self.grad[0];
    const T c = T(2) / static_cast<T>(n) * g;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = p_node.values[i] - t_node.values[i];
      if (p_node.requires_grad) p_node.grad[i] += c * d;
      if (t_node.requires_grad) t_node.grad[i] -= c * d;
    }
  };
  return Tensor<T>::make_op({1}, {acc}, {pred, target}, std::move(backward));
}

}  // namespace naturalmos
