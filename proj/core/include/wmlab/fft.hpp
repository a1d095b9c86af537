#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace wmlab::dsp {

constexpr bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
// inverse=true computes the unnormalized inverse transform (no 1/n factor).
template <typename T>
void fft(std::complex<T>* a, size_t n, bool inverse = false) {
  if (!is_pow2(n)) throw std::invalid_argument("fft: size not a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const T pi = static_cast<T>(3.14159265358979323846264338327950288L);
  for (size_t len = 2; len <= n; len <<= 1) {
    T ang = 2 * pi / static_cast<T>(len) * (inverse ? 1 : -1);
    std::complex<T> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<T> w(1);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<T> u = a[i + k];
        std::complex<T> t = a[i + k + len / 2] * w;
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
        w *= wlen;
      }
    }
  }
}

template <typename T>
void fft(std::vector<std::complex<T>>& a, bool inverse = false) {
  fft(a.data(), a.size(), inverse);
}

}  // namespace wmlab::dsp
