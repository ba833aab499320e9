#pragma once

#include <utility>
#include <vector>

#include "fcdiag/tensor.hpp"

namespace fcdiag {

struct Conv {
  Tensor w;  // [C_out, C_in, K]
  Tensor b;  // [C_out]
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
};

Conv make_conv(Index c_out, Index c_in, Index k, Rng& rng);
Linear make_linear(Index in, Index out, Rng& rng);
Tensor apply_conv(const Tensor& x, const Conv& conv, Index stride,
                  Index padding);
Tensor apply_linear(const Tensor& x, const Linear& lin);

struct SpectralBlockConfig {
  Index channels = 32;      // C, divisible by 4
  Index stride = 1;
  Index local_kernel = 5;   // odd
  Index lfu_segments = 4;   // S
  int layer_index = 0;

  void validate(Index input_length) const;
};

// Frequency-domain channel mixer: one pointwise convolution over the
// stacked (real, imag) channels.
struct FourierUnitParams {
  Conv mix;  // [2C, 2C, 1]
};

struct GlobalPathParams {
  Conv reduce;  // 1x1, C -> C/2
  FourierUnitParams fu;
  FourierUnitParams lfu;
  Conv expand;  // 1x1, C/2 -> C
};

struct SpectralBlockParams {
  SpectralBlockConfig cfg;
  Conv local;        // l -> l
  Conv local_to_global;
  Conv global_to_local;
  GlobalPathParams global;
};

// First C/2 channels form the local half, the rest the global half.
std::pair<Tensor, Tensor> channel_split(const Tensor& x);

// rfft along L, pointwise channel mix plus swish in the frequency domain,
// irfft back. Shape preserving. The activation toggle exists for the
// identity-roundtrip configuration used by tests and probes.
Tensor fourier_unit(const Tensor& x, const FourierUnitParams& params,
                    bool activation = true);

// The same transform applied independently to S equal segments with shared
// parameters; receptive field confined to the containing segment.
Tensor local_fourier_unit(const Tensor& x, const FourierUnitParams& params,
                          Index segments, bool activation = true);

// 1x1 channel halving, Fourier Unit + Local Fourier Unit summed with their
// input, 1x1 channel doubling, then strided subsampling. Spectra are always
// computed at full resolution; the stride only subsamples afterwards.
Tensor global_path(const Tensor& x_g, const GlobalPathParams& params,
                   Index stride, Index segments);

// Dual-path block: F_g = global_path(X_g) + conv(X_l), F_l = conv(X_l) +
// conv(X_g); one activation after the halves are concatenated.
Tensor spectral_block(const Tensor& x, const SpectralBlockParams& params);

struct BackboneConfig {
  Index channels = 32;
  Index local_kernel = 5;
  Index lfu_segments = 4;
  std::vector<Index> strides = {4, 2, 1, 1};
  Index feature_dim = 128;
  int classes = 10;
  Index input_length = 1024;
  bool spectral = true;  // false: plain-conv control of matched size

  void validate() const;
};

// Feature extractor plus linear classifier head. forward() maps a batch of
// windows [N,1,L] to (features [N,feature_dim], logits [N,classes]).
class Backbone {
 public:
  Backbone(const BackboneConfig& config, Rng& rng);

  std::pair<Tensor, Tensor> forward(const Tensor& x) const;
  std::vector<Tensor> params();
  std::size_t param_count() const;
  const BackboneConfig& config() const { return config_; }

  // Signal length after each block for the configured stride schedule.
  std::vector<Index> block_lengths() const;

 private:
  BackboneConfig config_;
  Conv stem_;
  std::vector<SpectralBlockParams> blocks_;
  std::vector<Conv> plain_blocks_;
  Linear feature_;
  Linear head_;
};

}  // namespace fcdiag
