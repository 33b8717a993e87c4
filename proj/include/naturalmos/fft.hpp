#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace naturalmos {

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 complex FFT (forward for sign = -1).
inline void fft_pow2(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (sign > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

}  // namespace detail

/// Forward DFT plan for a fixed size. Power-of-two sizes run radix-2
/// directly; any other size goes through Bluestein's chirp-z transform,
/// whose chirp and convolution kernel are precomputed here.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("FftPlan: size must be positive");
    if (detail::is_pow2(n_)) return;

    m_ = 1;
    while (m_ < 2 * n_ - 1) m_ <<= 1;
    chirp_.resize(n_);
    // Quadratic phase indices mod 2n keep the angle argument small.
    const double ang = std::numbers::pi / static_cast<double>(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      std::size_t q = (k * k) % (2 * n_);
      chirp_[k] = std::complex<double>(std::cos(ang * static_cast<double>(q)),
                                       -std::sin(ang * static_cast<double>(q)));
    }
    kernel_fft_.assign(m_, {0.0, 0.0});
    kernel_fft_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      kernel_fft_[k] = std::conj(chirp_[k]);
      kernel_fft_[m_ - k] = std::conj(chirp_[k]);
    }
    detail::fft_pow2(kernel_fft_, -1);
  }

  std::size_t size() const { return n_; }

  /// Forward transform of `in` (length n) into `out` (length n).
  void forward(const std::vector<std::complex<double>>& in,
               std::vector<std::complex<double>>& out) const {
    if (in.size() != n_) throw std::invalid_argument("FftPlan::forward: wrong input length");
    if (detail::is_pow2(n_)) {
      out = in;
      detail::fft_pow2(out, -1);
      return;
    }
    std::vector<std::complex<double>> a(m_, {0.0, 0.0});
    for (std::size_t k = 0; k < n_; ++k) a[k] = in[k] * chirp_[k];
    detail::fft_pow2(a, -1);
    for (std::size_t k = 0; k < m_; ++k) a[k] *= kernel_fft_[k];
    detail::fft_pow2(a, +1);
    out.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) out[k] = a[k] * chirp_[k];
  }

 private:
  std::size_t n_;
  std::size_t m_ = 0;                                // Bluestein convolution size
  std::vector<std::complex<double>> chirp_;          // e^{-i pi k^2 / n}
  std::vector<std::complex<double>> kernel_fft_;     // FFT of conj chirp, wrapped
};

}  // namespace naturalmos
