#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <vector>

#include "naturalmos/ops.hpp"
#include "naturalmos/tensor.hpp"

namespace naturalmos {

namespace detail {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Per-direction activation cache kept alive for backpropagation through time.
template <typename T>
struct LstmCache {
  std::vector<T> gates;  // [len, 4H], post-activation i, f, g, o
  std::vector<T> cell;   // [len, H]
  std::vector<T> tanhc;  // [len, H]
};

}  // namespace detail

/// Single-layer bidirectional LSTM over a padded sequence.
///
/// input is [N, D]; only the first `length` rows are real data. Weights per
/// direction follow the i, f, g, o gate layout: w_ih [4H, D], w_hh [4H, H],
/// bias [4H]. The result is [N, 2H]: columns [0, H) hold the forward states,
/// [H, 2H) the backward states, and rows at or beyond `length` are zero.
template <typename T>
Tensor<T> bilstm(const Tensor<T>& input, const Tensor<T>& w_ih_f, const Tensor<T>& w_hh_f,
                 const Tensor<T>& b_f, const Tensor<T>& w_ih_b, const Tensor<T>& w_hh_b,
                 const Tensor<T>& b_b, std::size_t length) {
  if (input.shape().size() != 2) throw std::invalid_argument("bilstm: input must be [N, D]");
  const std::size_t n = input.dim(0), d = input.dim(1);
  if (length == 0) throw std::invalid_argument("bilstm: length must be positive");
  if (length > n)
    throw std::invalid_argument("bilstm: length " + std::to_string(length) + " exceeds " +
                                std::to_string(n) + " rows");
  if (w_hh_f.shape().size() != 2) throw std::invalid_argument("bilstm: w_hh must be [4H, H]");
  const std::size_t h = w_hh_f.dim(1);
  const std::size_t g4 = 4 * h;
  for (const Tensor<T>* w : {&w_ih_f, &w_ih_b})
    if (w->shape() != std::vector<std::size_t>{g4, d})
      throw std::invalid_argument("bilstm: w_ih must be [4H, D]");
  for (const Tensor<T>* w : {&w_hh_f, &w_hh_b})
    if (w->shape() != std::vector<std::size_t>{g4, h})
      throw std::invalid_argument("bilstm: w_hh must be [4H, H]");
  if (b_f.numel() != g4 || b_b.numel() != g4)
    throw std::invalid_argument("bilstm: bias must be [4H]");

  std::vector<T> out(n * 2 * h, T(0));
  auto cache_f = std::make_shared<detail::LstmCache<T>>();
  auto cache_b = std::make_shared<detail::LstmCache<T>>();

  auto run_dir = [&](const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& bias,
                     bool reverse, detail::LstmCache<T>& cache) {
    cache.gates.assign(length * g4, T(0));
    cache.cell.assign(length * h, T(0));
    cache.tanhc.assign(length * h, T(0));

    // Input projection for all real timesteps at once: [len, 4H].
    std::vector<T> wihT = detail::transpose(w_ih.data(), g4, d);
    std::vector<T> xw(length * g4);
    for (std::size_t t = 0; t < length; ++t)
      std::copy(bias.data(), bias.data() + g4, xw.data() + t * g4);
    detail::gemm_acc(input.data(), wihT.data(), xw.data(), length, d, g4);

    std::vector<T> whhT = detail::transpose(w_hh.data(), g4, h);  // [H, 4H]
    std::vector<T> pre(g4);
    std::vector<T> h_prev(h, T(0));
    const std::size_t col0 = reverse ? h : 0;

    for (std::size_t s = 0; s < length; ++s) {
      const std::size_t t = reverse ? length - 1 - s : s;
      std::copy(xw.data() + t * g4, xw.data() + (t + 1) * g4, pre.data());
      for (std::size_t j = 0; j < h; ++j) {
        const T a = h_prev[j];
        if (a == T(0)) continue;
        const T* row = whhT.data() + j * g4;
        for (std::size_t k = 0; k < g4; ++k) pre[k] += a * row[k];
      }
      T* gt = cache.gates.data() + t * g4;
      for (std::size_t j = 0; j < h; ++j) {
        gt[j] = detail::sigmoid(pre[j]);              // i
        gt[h + j] = detail::sigmoid(pre[h + j]);      // f
        gt[2 * h + j] = std::tanh(pre[2 * h + j]);    // g
        gt[3 * h + j] = detail::sigmoid(pre[3 * h + j]);  // o
      }
      const T* c_prev = s == 0 ? nullptr : cache.cell.data() + (reverse ? t + 1 : t - 1) * h;
      T* ct = cache.cell.data() + t * h;
      T* tct = cache.tanhc.data() + t * h;
      T* ht = out.data() + t * 2 * h + col0;
      for (std::size_t j = 0; j < h; ++j) {
        const T cp = c_prev ? c_prev[j] : T(0);
        ct[j] = gt[h + j] * cp + gt[j] * gt[2 * h + j];
        tct[j] = std::tanh(ct[j]);
        ht[j] = gt[3 * h + j] * tct[j];
        h_prev[j] = ht[j];
      }
    }
  };

  run_dir(w_ih_f, w_hh_f, b_f, false, *cache_f);
  run_dir(w_ih_b, w_hh_b, b_b, true, *cache_b);

  auto backward = [n, d, h, g4, length, cache_f, cache_b](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];

    auto back_dir = [&](std::size_t pw_ih, std::size_t pw_hh, std::size_t pb, bool reverse,
                        const detail::LstmCache<T>& cache) {
      auto& wih_node = *self.parents[pw_ih];
      auto& whh_node = *self.parents[pw_hh];
      auto& b_node = *self.parents[pb];
      std::vector<T> wihT = detail::transpose(wih_node.values.data(), g4, d);  // [D, 4H]
      std::vector<T> whhT = detail::transpose(whh_node.values.data(), g4, h);  // [H, 4H]

      const std::size_t col0 = reverse ? h : 0;
      std::vector<T> dh_carry(h, T(0)), dc_carry(h, T(0)), dpre(g4);

      for (std::size_t s = length; s-- > 0;) {
        const std::size_t t = reverse ? length - 1 - s : s;
        const T* gt = cache.gates.data() + t * g4;
        const T* tct = cache.tanhc.data() + t * h;
        const T* c_prev = s == 0 ? nullptr : cache.cell.data() + (reverse ? t + 1 : t - 1) * h;
        const T* h_prev =
            s == 0 ? nullptr : self.values.data() + (reverse ? t + 1 : t - 1) * 2 * h + col0;
        const T* gout = self.grad.data() + t * 2 * h + col0;

        for (std::size_t j = 0; j < h; ++j) {
          const T i = gt[j], f = gt[h + j], g = gt[2 * h + j], o = gt[3 * h + j];
          const T dh = gout[j] + dh_carry[j];
          const T dc = dc_carry[j] + dh * o * (T(1) - tct[j] * tct[j]);
          const T cp = c_prev ? c_prev[j] : T(0);
          dpre[j] = dc * g * i * (T(1) - i);
          dpre[h + j] = dc * cp * f * (T(1) - f);
          dpre[2 * h + j] = dc * i * (T(1) - g * g);
          dpre[3 * h + j] = dh * tct[j] * o * (T(1) - o);
          dc_carry[j] = dc * f;
        }

        if (b_node.requires_grad)
          for (std::size_t k = 0; k < g4; ++k) b_node.grad[k] += dpre[k];
        if (wih_node.requires_grad) {
          const T* x = in_node.values.data() + t * d;
          for (std::size_t k = 0; k < g4; ++k) {
            const T a = dpre[k];
            if (a == T(0)) continue;
            T* dw = wih_node.grad.data() + k * d;
            for (std::size_t j = 0; j < d; ++j) dw[j] += a * x[j];
          }
        }
        if (whh_node.requires_grad && h_prev)
          for (std::size_t k = 0; k < g4; ++k) {
            const T a = dpre[k];
            if (a == T(0)) continue;
            T* dw = whh_node.grad.data() + k * h;
            for (std::size_t j = 0; j < h; ++j) dw[j] += a * h_prev[j];
          }
        if (in_node.requires_grad) {
          T* dx = in_node.grad.data() + t * d;
          for (std::size_t j = 0; j < d; ++j) {
            const T* row = wihT.data() + j * g4;
            T acc = T(0);
            for (std::size_t k = 0; k < g4; ++k) acc += row[k] * dpre[k];
            dx[j] += acc;
          }
        }
        for (std::size_t j = 0; j < h; ++j) {
          const T* row = whhT.data() + j * g4;
          T acc = T(0);
          for (std::size_t k = 0; k < g4; ++k) acc += row[k] * dpre[k];
          dh_carry[j] = acc;
        }
      }
    };

    back_dir(1, 2, 3, false, *cache_f);
    back_dir(4, 5, 6, true, *cache_b);
  };

  return Tensor<T>::make_op({n, 2 * h}, std::move(out),
                            {input, w_ih_f, w_hh_f, b_f, w_ih_b, w_hh_b, b_b},
                            std::move(backward));
}

/// Final bidirectional state of a bilstm output: the forward half of the last
/// real row concatenated with the backward half of row 0, shape [2H].
template <typename T>
Tensor<T> bilstm_final(const Tensor<T>& outputs, std::size_t length) {
  if (outputs.shape().size() != 2 || outputs.dim(1) % 2 != 0)
    throw std::invalid_argument("bilstm_final: expected [N, 2H] input");
  const std::size_t n = outputs.dim(0), h2 = outputs.dim(1);
  const std::size_t h = h2 / 2;
  if (length == 0 || length > n)
    throw std::invalid_argument("bilstm_final: length out of range");

  std::vector<T> out(h2);
  std::copy(outputs.data() + (length - 1) * h2, outputs.data() + (length - 1) * h2 + h,
            out.data());
  std::copy(outputs.data() + h, outputs.data() + h2, out.data() + h);

  auto backward = [length, h, h2](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t j = 0; j < h; ++j) {
      in_node.grad[(length - 1) * h2 + j] += self.grad[j];
      in_node.grad[h + j] += self.grad[h + j];
    }
  };
  return Tensor<T>::make_op({h2}, std::move(out), {outputs}, std::move(backward));
}

}  // namespace naturalmos
