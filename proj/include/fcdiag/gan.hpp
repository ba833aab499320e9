#pragma once

#include <cstdint>
#include <vector>

#include "fcdiag/signal.hpp"
#include "fcdiag/spectral.hpp"
#include "fcdiag/tensor.hpp"

namespace fcdiag {

// Learned fault embeddings: rows_per_class rows of dimension d_v per class,
// stored as one [classes * rows_per_class, d_v] table.
struct LabelEmbedding {
  Tensor table;
  Index d_v = 0;
  int classes = 0;
  int rows_per_class = 1;

  // The class's rows, [rows_per_class, d_v]; participates in the tape.
  Tensor rows_for(int label) const;
};

struct GanConfig {
  int classes = 10;
  Index noise_dim = 100;
  Index d_v = 64;
  int rows_per_class = 4;

  // generator: dense stem to [N, gen_base_channels, gen_base_len], then one
  // (upsample, conv, swish, cross-attention) cascade per stage, channels
  // halving down to gen_base_channels/4, then a final conv to one channel
  // with tanh output. 16 -> 64 -> 256 -> 1024 with the defaults.
  Index gen_base_channels = 32;
  Index gen_base_len = 16;
  Index up_factor = 4;
  int gen_stages = 3;
  Index gen_kernel = 5;

  // discriminator/encoder: strided conv trunk, then a real/fake score head
  // and a latent head of dimension noise_dim.
  std::vector<Index> disc_channels = {8, 16, 32, 48};
  std::vector<Index> disc_strides = {4, 4, 4, 2};
  Index disc_kernel = 9;
  Index cond_channels = 4;  // broadcast label-conditioning channels

  double lambda1 = 1.0;  // weight of the latent-consistency term in L_D'
  double lambda2 = 1.0;  // weight of the reconstruction term in L_G'
  bool non_saturating = true;  // -ln D(G(z)) generator loss; false: minimax

  double lr = 1e-4;
  int batch = 32;
  int steps = 2000;
  std::uint64_t seed = 1;

  void validate() const;
  Index window_length() const;  // gen_base_len * up_factor^gen_stages
};

// softmax(F v^T / sqrt(d_v)) v: every output row is a convex combination of
// the rows of v.
Tensor cross_attention(const Tensor& f, const Tensor& v);

struct GanLossParts {
  Tensor d_total;  // L_D + lambda1 * L_CLR
  Tensor g_total;  // L_G + lambda2 * L_rec
  Tensor l_d;
  Tensor l_g;
  Tensor l_clr;
  Tensor l_rec;
};

struct LossTraceRow {
  int step;
  double l_g, l_d, l_clr, l_rec;
};
using LossTrace = std::vector<LossTraceRow>;

class GanBundle {
 public:
  GanBundle(const GanConfig& config, Rng& rng);

  // z [N, noise_dim] and one class label per sample -> windows [N,1,1024]
  // with tanh range [-1, 1]. Deterministic in (z, labels).
  Tensor generate(const Tensor& z, const std::vector<int>& labels) const;

  struct DiscOutput {
    Tensor logit;  // [N]
    Tensor score;  // [N], sigmoid of the logit
    Tensor z_hat;  // [N, noise_dim]
  };
  DiscOutput discriminate(const Tensor& x,
                          const std::vector<int>& labels) const;

  std::vector<Tensor> gen_params();   // includes the label embedding table
  std::vector<Tensor> disc_params();

  const GanConfig& config() const { return config_; }
  const LabelEmbedding& embedding() const { return embedding_; }
  LabelEmbedding& embedding() { return embedding_; }

  // Zeroes the score head so that D(x) == 0.5 for every input; used by the
  // equilibrium checks.
  void force_neutral_score_head();

  // Zeroes the per-stage attention projections: the label injection vanishes
  // and generate() ignores its labels (conditioning ablation).
  void zero_attention_projections();

 private:
  GanConfig config_;
  // generator
  Linear stem_;
  std::vector<Conv> stage_convs_;
  std::vector<Linear> attn_query_;
  std::vector<Linear> attn_out_;
  Conv out_conv_;
  LabelEmbedding embedding_;
  // discriminator
  Tensor cond_table_;  // [classes, cond_channels]
  std::vector<Conv> disc_convs_;
  Linear score_head_;
  Linear latent_head_;
  Index disc_flat_dim_ = 0;
};

// Both adversarial losses plus the latent-consistency and reconstruction
// terms on one batch. With compute_consistency off (the DCGAN baseline) the
// extra terms are skipped and the totals equal the plain GAN losses bitwise.
GanLossParts gan_losses(const GanBundle& bundle, const Tensor& real,
                        const std::vector<int>& labels, const Tensor& z,
                        bool compute_consistency = true);

// Alternating one discriminator and one generator Adam step per batch.
// Deterministic per config.seed; throws on non-finite losses.
LossTrace train_gan(GanBundle& bundle, const Dataset& train,
                    const GanConfig& config);

// Identical loop with lambda1 = lambda2 = 0 and no latent-head supervision.
LossTrace train_dcgan_baseline(GanBundle& bundle, const Dataset& train,
                               const GanConfig& config);

// per_class generated windows for every class, labeled by the conditioning
// label and tagged Origin::generated.
Dataset augment(const GanBundle& bundle, int per_class, std::uint64_t seed);

}  // namespace fcdiag
