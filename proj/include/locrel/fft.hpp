#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace locrel {

// Iterative radix-2 FFT. Power-of-two sizes only; callers zero-pad.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto&
         x : a)
      x *= inv;
  }
}

inline size_t next_pow2(size_t n) {
  return n <= 1 ? 1 : std::bit_ceil(n);
}

// One-sided spectrum of a real signal zero-padded to nfft (nfft/2 + 1 bins).
inline std::vector<std::complex<double>> rfft(const double* x, size_t n, size_t nfft) {
  std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
  for (size_t i = 0; i < n && i < nfft; ++i) buf[i] = {x[i], 0.0};
  fft_inplace(buf, false);
  buf.resize(nfft / 2 + 1);
  return buf;
}

inline std::vector<std::complex<double>> rfft(const std::vector<double>& x, size_t nfft) {
  return rfft(x.data(), x.size(), nfft);
}

// Inverse of rfft: reconstruct length-nfft real signal from one-sided bins.
inline std::vector<double> irfft(const std::vector<std::complex<double>>& half, size_t nfft) {
  if (half.size() != nfft / 2 + 1) throw std::invalid_argument("irfft: bin count mismatch");
  std::vector<std::complex<double>> buf(nfft);
  for (size_t k = 0; k <= nfft / 2; ++k) buf[k] = half[k];
  for (size_t k = nfft / 2 + 1; k < nfft; ++k) buf[k] = std::conj(half[nfft - k]);
  fft_inplace(buf, true);
  std::vector<double> out(nfft);
  for (size_t i = 0; i < nfft; ++i) out[i] = buf[i].real();
  return out;
}

// Linear convolution of two real signals via zero-padded FFT.
inline std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const size_t full = a.size() + b.size() - 1;
  const size_t nfft = next_pow2(full);
  auto fa = rfft(a, nfft);
  const auto fb = rfft(b, nfft);
  for (size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto out = irfft(fa, nfft);
  out.resize(full);
  return out;
}

}  // namespace locrel
