#include "fcdiag/fft.hpp"

#include <cmath>
#include <complex>
#include <unordered_map>
#include <vector>

namespace fcdiag {

namespace {

using Complex = std::complex<double>;

// Twiddle table for length n: w[k] = e^{-i 2 pi k / n}, k < n/2.
const std::vector<Complex>& twiddles(Index n) {
  thread_local std::unordered_map<Index, std::vector<Complex>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<Complex> w(static_cast<std::size_t>(n / 2));
  for (Index k = 0; k < n / 2; ++k)
    w[static_cast<std::size_t>(k)] =
        std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) /
                            static_cast<double>(n));
  return cache.emplace(n, std::move(w)).first->second;
}

// In-place iterative radix-2 DIT transform. forward: X[k] = sum x[n] w^{kn}.
// inverse computes the unnormalized conjugate transform (no 1/n factor).
// The twiddle loop is outermost so each factor is loaded once per stage.
void fft_inplace(Complex* a, Index n, bool inverse) {
  if (n == 1) return;
  // bit reversal
  for (Index i = 1, j = 0; i < n; ++i) {
    Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& w = twiddles(n);
  double* d = reinterpret_cast<double*>(a);
  for (Index len = 2; len <= n; len <<= 1) {
    const Index half = len / 2;
    const Index step = n / len;
    for (Index k = 0; k < half; ++k) {
      const Complex tw = w[static_cast<std::size_t>(k * step)];
      const double wr = tw.real();
      const double wi = inverse ? -tw.imag() : tw.imag();
      for (Index i = k; i < n; i += len) {
        double* u = d + 2 * i;
        double* v = d + 2 * (i + half);
        const double vr = v[0] * wr - v[1] * wi;
        const double vi = v[0] * wi + v[1] * wr;
        v[0] = u[0] - vr;
        v[1] = u[1] - vi;
        u[0] += vr;
        u[1] += vi;
      }
    }
  }
}

void require_pow2(Index l, const char* op) {
  require(is_power_of_two(l), std::string(op) + ": length " +
                                  std::to_string(l) +
                                  " is not a power of two");
}

// Half-spectrum of one real row. out has 2*(l/2+1) doubles, (re,im) pairs.
// Imaginary parts of bin 0 and the Nyquist bin are exactly zero.
void rfft_row(const double* x, Index l, double* out,
              std::vector<Complex>& work) {
  work.resize(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) work[static_cast<std::size_t>(i)] = Complex(x[i], 0.0);
  fft_inplace(work.data(), l, false);
  Index b = l / 2 + 1;
  for (Index k = 0; k < b; ++k) {
    out[2 * k] = work[static_cast<std::size_t>(k)].real();
    out[2 * k + 1] = work[static_cast<std::size_t>(k)].imag();
  }
  out[1] = 0.0;
  out[2 * (b - 1) + 1] = 0.0;
}

// Adjoint of rfft_row: given d(loss)/d(bins) find d(loss)/d(x).
// grad_x[n] = Re( sum_{k<=L/2} (gre_k + i gim_k) e^{+i 2 pi k n / L} ),
// with the forced-zero imaginary entries dropped.
void rfft_row_adjoint(const double* gbins, Index l, double* gx,
                      std::vector<Complex>& work) {
  Index b = l / 2 + 1;
  work.assign(static_cast<std::size_t>(l), Complex{});
  for (Index k = 0; k < b; ++k) {
    double re = gbins[2 * k];
    double im = gbins[2 * k + 1];
    if (k == 0 || k == b - 1) im = 0.0;
    work[static_cast<std::size_t>(k)] = Complex(re, im);
  }
  fft_inplace(work.data(), l, true);
  for (Index n = 0; n < l; ++n) gx[n] += work[static_cast<std::size_t>(n)].real();
}

// Inverse transform of one half-spectrum row (Hermitian extension assumed).
void irfft_row(const double* bins, Index l, double* x,
               std::vector<Complex>& work) {
  Index b = l / 2 + 1;
  work.assign(static_cast<std::size_t>(l), Complex{});
  for (Index k = 0; k < b; ++k)
    work[static_cast<std::size_t>(k)] = Complex(bins[2 * k], bins[2 * k + 1]);
  for (Index k = 1; k < l / 2; ++k)
    work[static_cast<std::size_t>(l - k)] =
        std::conj(work[static_cast<std::size_t>(k)]);
  fft_inplace(work.data(), l, true);
  double inv = 1.0 / static_cast<double>(l);
  for (Index n = 0; n < l; ++n)
    x[n] = work[static_cast<std::size_t>(n)].real() * inv;
}

// Adjoint of irfft_row: grad_bins[k] = (c_k / L) * FFT(gx)[k], where
// c_k = 1 for bin 0 and the Nyquist bin (whose imaginary parts get zero
// gradient), 2 otherwise.
void irfft_row_adjoint(const double* gx, Index l, double* gbins,
                       std::vector<Complex>& work) {
  work.assign(static_cast<std::size_t>(l), Complex{});
  for (Index n = 0; n < l; ++n) work[static_cast<std::size_t>(n)] = Complex(gx[n], 0.0);
  fft_inplace(work.data(), l, false);
  Index b = l / 2 + 1;
  double inv = 1.0 / static_cast<double>(l);
  for (Index k = 0; k < b; ++k) {
    double c = (k == 0 || k == b - 1) ? 1.0 : 2.0;
    gbins[2 * k] += c * inv * work[static_cast<std::size_t>(k)].real();
    if (k != 0 && k != b - 1)
      gbins[2 * k + 1] += c * inv * work[static_cast<std::size_t>(k)].imag();
  }
}

}  // namespace

ComplexSpectrum::ComplexSpectrum(Tensor bins, Index original_length)
    : bins_(std::move(bins)), original_length_(original_length) {
  require(original_length_ > 0, "spectrum: original_length must be positive");
  require(bins_.rank() == 2 && bins_.dim(1) == 2,
          "spectrum: bins must be [B,2]");
  require(bins_.dim(0) == original_length_ / 2 + 1,
          "spectrum: expected " + std::to_string(original_length_ / 2 + 1) +
              " bins for length " + std::to_string(original_length_) +
              ", got " + std::to_string(bins_.dim(0)));
}

ComplexSpectrum rfft(const Tensor& x) {
  require(x.rank() == 1, "rfft: expects a rank-1 tensor");
  Index l = x.dim(0);
  require_pow2(l, "rfft");
  Index b = l / 2 + 1;
  Eigen::ArrayXd out(2 * b);
  std::vector<Complex> work;
  rfft_row(x.value().data(), l, out.data(), work);
  bool rec = Tape::active() && x.requires_grad();
  Tensor bins({b, 2}, std::move(out), rec);
  if (rec) {
    auto xn = x.node();
    auto bn = bins.node();
    Tape::active()->record([xn, bn, l] {
      if (!bn->has_grad()) return;
      xn->ensure_grad();
      std::vector<Complex> work;
      rfft_row_adjoint(bn->grad.data(), l, xn->grad.data(), work);
    });
  }
  return ComplexSpectrum(std::move(bins), l);
}

Tensor irfft(const ComplexSpectrum& s) {
  Index l = s.original_length();
  require_pow2(l, "irfft");
  const Tensor& bins = s.bins();
  Eigen::ArrayXd out(l);
  std::vector<Complex> work;
  irfft_row(bins.value().data(), l, out.data(), work);
  bool rec = Tape::active() && bins.requires_grad();
  Tensor x({l}, std::move(out), rec);
  if (rec) {
    auto bn = bins.node();
    auto xn = x.node();
    Tape::active()->record([bn, xn, l] {
      if (!xn->has_grad()) return;
      bn->ensure_grad();
      std::vector<Complex> work;
      irfft_row_adjoint(xn->grad.data(), l, bn->grad.data(), work);
    });
  }
  return x;
}

Tensor rfft_channels(const Tensor& x) {
  require(x.rank() == 3, "rfft_channels: expects [N,C,L]");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  require_pow2(l, "rfft_channels");
  Index b = l / 2 + 1;
  Eigen::ArrayXd out(n * 2 * c * b);
  std::vector<Complex> work;
  std::vector<double> rowbins(static_cast<std::size_t>(2 * b));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < c; ++j) {
      rfft_row(x.value().data() + (i * c + j) * l, l, rowbins.data(), work);
      double* re = out.data() + (i * 2 * c + j) * b;
      double* im = out.data() + (i * 2 * c + c + j) * b;
      for (Index k = 0; k < b; ++k) {
        re[k] = rowbins[static_cast<std::size_t>(2 * k)];
        im[k] = rowbins[static_cast<std::size_t>(2 * k + 1)];
      }
    }
  }
  bool rec = Tape::active() && x.requires_grad();
  Tensor y({n, 2 * c, b}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, n, c, l, b] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      std::vector<Complex> work;
      std::vector<double> gbins(static_cast<std::size_t>(2 * b));
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < c; ++j) {
          const double* gre = yn->grad.data() + (i * 2 * c + j) * b;
          const double* gim = yn->grad.data() + (i * 2 * c + c + j) * b;
          for (Index k = 0; k < b; ++k) {
            gbins[static_cast<std::size_t>(2 * k)] = gre[k];
            gbins[static_cast<std::size_t>(2 * k + 1)] = gim[k];
          }
          rfft_row_adjoint(gbins.data(), l,
                           xn->grad.data() + (i * c + j) * l, work);
        }
      }
    });
  }
  return y;
}

Tensor irfft_channels(const Tensor& spec, Index original_length) {
  require(spec.rank() == 3, "irfft_channels: expects [N,2C,B]");
  Index l = original_length;
  require_pow2(l, "irfft_channels");
  Index n = spec.dim(0), c2 = spec.dim(1), b = spec.dim(2);
  require(c2 % 2 == 0, "irfft_channels: channel count must be even");
  require(b == l / 2 + 1, "irfft_channels: bin count " + std::to_string(b) +
                              " does not match length " + std::to_string(l));
  Index c = c2 / 2;
  Eigen::ArrayXd out(n * c * l);
  std::vector<Complex> work;
  std::vector<double> rowbins(static_cast<std::size_t>(2 * b));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < c; ++j) {
      const double* re = spec.value().data() + (i * 2 * c + j) * b;
      const double* im = spec.value().data() + (i * 2 * c + c + j) * b;
      for (Index k = 0; k < b; ++k) {
        rowbins[static_cast<std::size_t>(2 * k)] = re[k];
        rowbins[static_cast<std::size_t>(2 * k + 1)] = im[k];
      }
      irfft_row(rowbins.data(), l, out.data() + (i * c + j) * l, work);
    }
  }
  bool rec = Tape::active() && spec.requires_grad();
  Tensor y({n, c, l}, std::move(out), rec);
  if (rec) {
    auto sn = spec.node(), yn = y.node();
    Tape::active()->record([sn, yn, n, c, l, b] {
      if (!yn->has_grad()) return;
      sn->ensure_grad();
      std::vector<Complex> work;
      std::vector<double> gbins(static_cast<std::size_t>(2 * b));
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < c; ++j) {
          std::fill(gbins.begin(), gbins.end(), 0.0);
          irfft_row_adjoint(yn->grad.data() + (i * c + j) * l, l,
                            gbins.data(), work);
          double* gre = sn->grad.data() + (i * 2 * c + j) * b;
          double* gim = sn->grad.data() + (i * 2 * c + c + j) * b;
          for (Index k = 0; k < b; ++k) {
            gre[k] += gbins[static_cast<std::size_t>(2 * k)];
            gim[k] += gbins[static_cast<std::size_t>(2 * k + 1)];
          }
        }
      }
    });
  }
  return y;
}

}  // namespace fcdiag
