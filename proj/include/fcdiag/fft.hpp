#pragma once

#include "fcdiag/tensor.hpp"

namespace fcdiag {

// Half-spectrum of a real signal: floor(L/2)+1 bins stored as a [B,2] tensor
// of (real, imag) pairs. For real inputs, bin 0 and (L even) the Nyquist bin
// have zero imaginary part by construction.
class ComplexSpectrum {
 public:
  ComplexSpectrum(Tensor bins, Index original_length);

  const Tensor& bins() const { return bins_; }
  Index original_length() const { return original_length_; }
  Index bin_count() const { return bins_.dim(0); }
  double real(Index k) const { return bins_[2 * k]; }
  double imag(Index k) const { return bins_[2 * k + 1]; }

 private:
  Tensor bins_;  // [B,2]
  Index original_length_;
};

// Forward real FFT, radix-2, power-of-two lengths only.
// bins[k] = sum_n x[n] * e^{-i 2 pi k n / L}, k = 0..L/2. Differentiable.
ComplexSpectrum rfft(const Tensor& x);

// Inverse of rfft; irfft(rfft(x)) == x to within round-off. Differentiable.
Tensor irfft(const ComplexSpectrum& s);

// Batched variants used by the spectral layers: [N,C,L] -> [N,2C,B] with the
// first C output channels holding real parts and the next C imaginary parts.
Tensor rfft_channels(const Tensor& x);
Tensor irfft_channels(const Tensor& spec, Index original_length);

}  // namespace fcdiag
