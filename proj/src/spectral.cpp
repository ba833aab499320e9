#include "fcdiag/spectral.hpp"

#include <cmath>

#include "fcdiag/fft.hpp"

namespace fcdiag {

namespace {

// He-uniform: swish attenuates small activations by about one half per
// layer, so fan-in/fan-out Glorot starves deep stacks of signal.
double init_bound(double fan_in) { return std::sqrt(6.0 / fan_in); }

Index conv_output_length(Index l, Index kernel, Index stride, Index padding) {
  return (l + 2 * padding - kernel) / stride + 1;
}

}  // namespace

Conv make_conv(Index c_out, Index c_in, Index k, Rng& rng) {
  double a = init_bound(static_cast<double>(c_in * k));
  Conv conv;
  conv.w = Tensor::uniform({c_out, c_in, k}, rng, -a, a, true);
  conv.b = Tensor::zeros({c_out}, true);
  return conv;
}

Linear make_linear(Index in, Index out, Rng& rng) {
  double a = init_bound(static_cast<double>(in));
  Linear lin;
  lin.w = Tensor::uniform({in, out}, rng, -a, a, true);
  lin.b = Tensor::zeros({out}, true);
  return lin;
}

Tensor apply_conv(const Tensor& x, const Conv& conv, Index stride,
                  Index padding) {
  return add_channel_bias(conv1d(x, conv.w, stride, padding), conv.b);
}

Tensor apply_linear(const Tensor& x, const Linear& lin) {
  return add_row_bias(matmul(x, lin.w), lin.b);
}

void SpectralBlockConfig::validate(Index input_length) const {
  require(channels > 0 && channels % 4 == 0,
          "spectral block: channels must be a positive multiple of 4");
  require(stride >= 1, "spectral block: stride must be >= 1");
  require(local_kernel >= 1 && local_kernel % 2 == 1,
          "spectral block: local_kernel must be odd");
  require(lfu_segments >= 1, "spectral block: lfu_segments must be >= 1");
  require(input_length % lfu_segments == 0,
          "spectral block: length " + std::to_string(input_length) +
              " not divisible by " + std::to_string(lfu_segments) +
              " segments");
  require(is_power_of_two(input_length / lfu_segments),
          "spectral block: segment length must be a power of two");
}

std::pair<Tensor, Tensor> channel_split(const Tensor& x) {
  require(x.rank() == 3, "channel_split: expects [N,C,L]");
  Index c = x.dim(1);
  require(c % 2 == 0, "channel_split: channel count " + std::to_string(c) +
                          " is odd");
  return {slice(x, 1, 0, c / 2), slice(x, 1, c / 2, c / 2)};
}

Tensor fourier_unit(const Tensor& x, const FourierUnitParams& params,
                    bool activation) {
  require(x.rank() == 3, "fourier_unit: expects [N,C,L]");
  Index c = x.dim(1), l = x.dim(2);
  require(params.mix.w.dim(0) == 2 * c && params.mix.w.dim(1) == 2 * c &&
              params.mix.w.dim(2) == 1,
          "fourier_unit: mixer must be a pointwise [2C,2C,1] kernel");
  // 1/sqrt(L) keeps spectral activations at signal scale through the mix;
  // the inverse factor restores the exact transform pair
  const double norm = 1.0 / std::sqrt(static_cast<double>(l));
  Tensor spec = mul_scalar(rfft_channels(x), norm);
  Tensor mixed = apply_conv(spec, params.mix, 1, 0);
  if (activation) mixed = swish(mixed);
  return irfft_channels(mul_scalar(mixed, 1.0 / norm), l);
}

Tensor local_fourier_unit(const Tensor& x, const FourierUnitParams& params,
                          Index segments, bool activation) {
  require(x.rank() == 3, "local_fourier_unit: expects [N,C,L]");
  require(segments >= 1, "local_fourier_unit: segments must be >= 1");
  Index l = x.dim(2);
  require(l % segments == 0,
          "local_fourier_unit: length " + std::to_string(l) +
              " not divisible by " + std::to_string(segments));
  if (segments == 1) return fourier_unit(x, params, activation);
  Index seg_len = l / segments;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(segments));
  for (Index s = 0; s < segments; ++s)
    parts.push_back(fourier_unit(slice(x, 2, s * seg_len, seg_len), params,
                                 activation));
  return concat(2, parts);
}

Tensor global_path(const Tensor& x_g, const GlobalPathParams& params,
                   Index stride, Index segments) {
  Tensor reduced = apply_conv(x_g, params.reduce, 1, 0);
  Tensor fu = fourier_unit(reduced, params.fu);
  Tensor lfu = local_fourier_unit(reduced, params.lfu, segments);
  Tensor fused = add(add(reduced, fu), lfu);
  Tensor expanded = apply_conv(fused, params.expand, 1, 0);
  return stride == 1 ? expanded : subsample_length(expanded, stride);
}

Tensor spectral_block(const Tensor& x, const SpectralBlockParams& params) {
  const SpectralBlockConfig& cfg = params.cfg;
  cfg.validate(x.dim(2));
  require(x.dim(1) == cfg.channels,
          "spectral_block: expected " + std::to_string(cfg.channels) +
              " channels, got " + std::to_string(x.dim(1)));
  auto [x_l, x_g] = channel_split(x);
  Index pad = cfg.local_kernel / 2;
  Tensor f_g = add(global_path(x_g, params.global, cfg.stride, cfg.lfu_segments),
                   apply_conv(x_l, params.local_to_global, cfg.stride, pad));
  Tensor f_l = add(apply_conv(x_l, params.local, cfg.stride, pad),
                   apply_conv(x_g, params.global_to_local, cfg.stride, pad));
  require(f_g.shape() == f_l.shape(),
          "spectral_block: path shapes diverged (internal bug)");
  return swish(concat(1, {f_l, f_g}));
}

void BackboneConfig::validate() const {
  require(channels > 0 && channels % 4 == 0,
          "backbone: channels must be a positive multiple of 4");
  require(local_kernel >= 1 && local_kernel % 2 == 1,
          "backbone: local_kernel must be odd");
  require(!strides.empty(), "backbone: at least one block required");
  require(feature_dim > 0, "backbone: feature_dim must be positive");
  require(classes >= 2, "backbone: need at least two classes");
  require(is_power_of_two(input_length),
          "backbone: input length must be a power of two");
  if (spectral) {
    Index l = input_length;
    for (std::size_t i = 0; i < strides.size(); ++i) {
      SpectralBlockConfig cfg{channels, strides[i], local_kernel,
                              lfu_segments, static_cast<int>(i)};
      cfg.validate(l);
      l = conv_output_length(l, local_kernel, strides[i], local_kernel / 2);
    }
  }
}

namespace {

SpectralBlockParams make_block(const BackboneConfig& config, int index,
                               Rng& rng) {
  SpectralBlockParams p;
  p.cfg = SpectralBlockConfig{config.channels, config.strides[static_cast<std::size_t>(index)],
                              config.local_kernel, config.lfu_segments, index};
  Index half = config.channels / 2;
  Index quarter = config.channels / 4;
  p.local = make_conv(half, half, config.local_kernel, rng);
  p.local_to_global = make_conv(half, half, config.local_kernel, rng);
  p.global_to_local = make_conv(half, half, config.local_kernel, rng);
  p.global.reduce = make_conv(quarter, half, 1, rng);
  p.global.fu.mix = make_conv(2 * quarter, 2 * quarter, 1, rng);
  p.global.lfu.mix = make_conv(2 * quarter, 2 * quarter, 1, rng);
  p.global.expand = make_conv(half, quarter, 1, rng);
  return p;
}

void collect(std::vector<Tensor>& out, Conv& c) {
  out.push_back(c.w);
  out.push_back(c.b);
}

}  // namespace

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  stem_ = make_conv(config.channels, 1, 1, rng);
  if (config.spectral) {
    for (std::size_t i = 0; i < config.strides.size(); ++i)
      blocks_.push_back(make_block(config, static_cast<int>(i), rng));
  } else {
    for (std::size_t i = 0; i < config.strides.size(); ++i)
      plain_blocks_.push_back(
          make_conv(config.channels, config.channels, config.local_kernel, rng));
  }
  feature_ = make_linear(config.channels, config.feature_dim, rng);
  head_ = make_linear(config.feature_dim, config.classes, rng);
}

std::pair<Tensor, Tensor> Backbone::forward(const Tensor& x) const {
  require(x.rank() == 3 && x.dim(1) == 1,
          "backbone: expects windows shaped [N,1,L]");
  require(x.dim(2) == config_.input_length,
          "backbone: expected length " + std::to_string(config_.input_length) +
              ", got " + std::to_string(x.dim(2)));
  Tensor h = apply_conv(x, stem_, 1, 0);
  if (config_.spectral) {
    for (const SpectralBlockParams& block : blocks_)
      h = spectral_block(h, block);
  } else {
    Index pad = config_.local_kernel / 2;
    for (std::size_t i = 0; i < plain_blocks_.size(); ++i)
      h = swish(apply_conv(h, plain_blocks_[i], config_.strides[i], pad));
  }
  Tensor pooled = global_avg_pool(h);
  Tensor features = swish(apply_linear(pooled, feature_));
  Tensor logits = apply_linear(features, head_);
  return {features, logits};
}

std::vector<Tensor> Backbone::params() {
  std::vector<Tensor> out;
  collect(out, stem_);
  for (SpectralBlockParams& b : blocks_) {
    collect(out, b.local);
    collect(out, b.local_to_global);
    collect(out, b.global_to_local);
    collect(out, b.global.reduce);
    collect(out, b.global.fu.mix);
    collect(out, b.global.lfu.mix);
    collect(out, b.global.expand);
  }
  for (Conv& c : plain_blocks_) collect(out, c);
  out.push_back(feature_.w);
  out.push_back(feature_.b);
  out.push_back(head_.w);
  out.push_back(head_.b);
  return out;
}

std::size_t Backbone::param_count() const {
  std::size_t n = 0;
  auto self = const_cast<Backbone*>(this);
  for (const Tensor& t : self->params()) n += static_cast<std::size_t>(t.size());
  return n;
}

std::vector<Index> Backbone::block_lengths() const {
  std::vector<Index> lengths;
  Index l = config_.input_length;
  for (Index s : config_.strides) {
    l = conv_output_length(l, config_.local_kernel, s, config_.local_kernel / 2);
    lengths.push_back(l);
  }
  return lengths;
}

}  // namespace fcdiag
