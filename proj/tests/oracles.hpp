// Test-only reference implementations, independent of the library's kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "fcdiag/tensor.hpp"

namespace oracle {

// O(L^2) DFT straight from the definition.
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double angle = -2.0 * M_PI * static_cast<double>(k) *
                     static_cast<double>(i) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<double> to_vector(const fcdiag::Tensor& t) {
  return std::vector<double>(t.value().data(), t.value().data() + t.size());
}

// Direct nested-loop cross-correlation, the conv1d reference.
inline std::vector<double> naive_conv1d(const fcdiag::Tensor& x,
                                        const fcdiag::Tensor& kernel,
                                        long stride, long padding) {
  const long n = x.dim(0), cin = x.dim(1), l = x.dim(2);
  const long cout = kernel.dim(0), k = kernel.dim(2);
  const long lout = (l + 2 * padding - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * cout * lout), 0.0);
  for (long i = 0; i < n; ++i)
    for (long co = 0; co < cout; ++co)
      for (long t = 0; t < lout; ++t) {
        double acc = 0.0;
        for (long c = 0; c < cin; ++c)
          for (long kk = 0; kk < k; ++kk) {
            long p = t * stride - padding + kk;
            if (p >= 0 && p < l)
              acc += x.value()[(i * cin + c) * l + p] *
                     kernel.value()[(co * cin + c) * k + kk];
          }
        out[static_cast<std::size_t>((i * cout + co) * lout + t)] = acc;
      }
  return out;
}

// Envelope spectrum via the Hilbert transform, all on the naive DFT.
// Returns the magnitude spectrum of (envelope - mean(envelope)).
inline std::vector<double> envelope_spectrum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  auto spec = naive_dft(x);
  // analytic signal: zero negative frequencies, double positive ones
  std::vector<std::complex<double>> a(n, {0.0, 0.0});
  a[0] = spec[0];
  for (std::size_t k = 1; k < n / 2; ++k) a[k] = 2.0 * spec[k];
  if (n % 2 == 0) a[n / 2] = spec[n / 2];
  // inverse DFT
  std::vector<double> env(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double angle = 2.0 * M_PI * static_cast<double>(k) *
                     static_cast<double>(i) / static_cast<double>(n);
      acc += a[k] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    env[i] = std::abs(acc) / static_cast<double>(n);
  }
  double m = 0.0;
  for (double v : env) m += v;
  m /= static_cast<double>(n);
  for (double& v : env) v -= m;
  auto espec = naive_dft(env);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) mag[k] = std::abs(espec[k]);
  return mag;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
