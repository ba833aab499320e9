#include "fcdiag/gan.hpp"

#include <algorithm>
#include <cmath>

#include "fcdiag/optim.hpp"

namespace fcdiag {

Tensor LabelEmbedding::rows_for(int label) const {
  require(label >= 0 && label < classes,
          "label embedding: label " + std::to_string(label) +
              " outside [0," + std::to_string(classes) + ")");
  return slice(table, 0, static_cast<Index>(label) * rows_per_class,
               rows_per_class);
}

void GanConfig::validate() const {
  require(classes >= 2, "gan: need at least two classes");
  require(noise_dim > 0, "gan: noise_dim must be positive");
  require(d_v > 0, "gan: d_v must be positive");
  require(rows_per_class >= 1, "gan: rows_per_class must be >= 1");
  require(gen_base_channels >= 4 && gen_base_channels % 4 == 0,
          "gan: gen_base_channels must be a positive multiple of 4");
  require(gen_stages >= 1, "gan: need at least one generator stage");
  require(gen_kernel % 2 == 1, "gan: gen_kernel must be odd");
  require(disc_kernel % 2 == 1, "gan: disc_kernel must be odd");
  require(disc_channels.size() == disc_strides.size(),
          "gan: disc_channels and disc_strides must align");
  require(!disc_channels.empty(), "gan: empty discriminator");
  require(window_length() == kWindowLength,
          "gan: generator cascade must end at 1024 samples, got " +
              std::to_string(window_length()));
  require(lambda1 >= 0 && lambda2 >= 0, "gan: lambdas must be nonnegative");
  require(lr > 0 && batch > 0 && steps >= 0, "gan: bad training parameters");
  require(cond_channels >= 1, "gan: cond_channels must be >= 1");
}

Index GanConfig::window_length() const {
  Index l = gen_base_len;
  for (int i = 0; i < gen_stages; ++i) l *= up_factor;
  return l;
}

Tensor cross_attention(const Tensor& f, const Tensor& v) {
  require(f.rank() == 2 && v.rank() == 2, "cross_attention: expects matrices");
  require(f.dim(1) == v.dim(1),
          "cross_attention: feature dim " + std::to_string(f.dim(1)) +
              " does not match value dim " + std::to_string(v.dim(1)));
  double scale = 1.0 / std::sqrt(static_cast<double>(v.dim(1)));
  Tensor scores = mul_scalar(matmul(f, transpose(v)), scale);
  return matmul(softmax_rows(scores), v);
}

namespace {

std::vector<Index> generator_stage_channels(const GanConfig& cfg) {
  std::vector<Index> ch{cfg.gen_base_channels};
  for (int i = 0; i < cfg.gen_stages; ++i)
    ch.push_back(std::max<Index>(cfg.gen_base_channels / 4, ch.back() / 2));
  return ch;
}

}  // namespace

GanBundle::GanBundle(const GanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto ch = generator_stage_channels(config_);
  stem_ = make_linear(config_.noise_dim, ch[0] * config_.gen_base_len, rng);
  for (int i = 0; i < config_.gen_stages; ++i) {
    stage_convs_.push_back(make_conv(ch[static_cast<std::size_t>(i) + 1],
                                     ch[static_cast<std::size_t>(i)],
                                     config_.gen_kernel, rng));
    attn_query_.push_back(
        make_linear(ch[static_cast<std::size_t>(i) + 1], config_.d_v, rng));
    attn_out_.push_back(
        make_linear(config_.d_v, ch[static_cast<std::size_t>(i) + 1], rng));
  }
  out_conv_ = make_conv(1, ch.back(), config_.gen_kernel, rng);

  embedding_.d_v = config_.d_v;
  embedding_.classes = config_.classes;
  embedding_.rows_per_class = config_.rows_per_class;
  double a = std::sqrt(3.0 / static_cast<double>(config_.d_v));
  embedding_.table = Tensor::uniform(
      {static_cast<Index>(config_.classes) * config_.rows_per_class,
       config_.d_v},
      rng, -a, a, true);

  cond_table_ = Tensor::uniform(
      {static_cast<Index>(config_.classes), config_.cond_channels}, rng, -0.5,
      0.5, true);
  Index c_in = 1 + config_.cond_channels;
  Index l = kWindowLength;
  for (std::size_t i = 0; i < config_.disc_channels.size(); ++i) {
    disc_convs_.push_back(
        make_conv(config_.disc_channels[i], c_in, config_.disc_kernel, rng));
    c_in = config_.disc_channels[i];
    l = (l + 2 * (config_.disc_kernel / 2) - config_.disc_kernel) /
            config_.disc_strides[i] +
        1;
  }
  disc_flat_dim_ = c_in * l;
  score_head_ = make_linear(disc_flat_dim_, 1, rng);
  latent_head_ = make_linear(disc_flat_dim_, config_.noise_dim, rng);
}

Tensor GanBundle::generate(const Tensor& z,
                           const std::vector<int>& labels) const {
  require(z.rank() == 2 && z.dim(1) == config_.noise_dim,
          "generate: z must be [N," + std::to_string(config_.noise_dim) + "]");
  const Index n = z.dim(0);
  require(static_cast<Index>(labels.size()) == n,
          "generate: one label per latent vector");
  for (int lab : labels)
    require(lab >= 0 && lab < config_.classes,
            "generate: label " + std::to_string(lab) + " out of range");

  // sort the batch by label once so every attention stage sees contiguous
  // per-class groups; the output is permuted back at the end
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
  });
  bool identity = true;
  for (Index i = 0; i < n; ++i)
    identity = identity && perm[static_cast<std::size_t>(i)] == i;
  std::vector<int> sorted_labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    sorted_labels[static_cast<std::size_t>(i)] =
        labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  // group boundaries in the sorted order
  struct Group {
    int label;
    Index start, count;
  };
  std::vector<Group> groups;
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j < n && sorted_labels[static_cast<std::size_t>(j)] ==
                        sorted_labels[static_cast<std::size_t>(i)])
      ++j;
    groups.push_back({sorted_labels[static_cast<std::size_t>(i)], i, j - i});
    i = j;
  }

  Tensor zs = identity ? z : gather_rows(z, perm);
  Tensor h = swish(apply_linear(zs, stem_));
  h = reshape(h, {n, config_.gen_base_channels, config_.gen_base_len});
  Index pad = config_.gen_kernel / 2;
  for (int stage = 0; stage < config_.gen_stages; ++stage) {
    h = upsample_nearest(h, config_.up_factor);
    h = swish(apply_conv(h, stage_convs_[static_cast<std::size_t>(stage)], 1, pad));
    const Index len = h.dim(2);
    Tensor q = matmul(flatten_positions(h),
                      attn_query_[static_cast<std::size_t>(stage)].w);
    q = add_row_bias(q, attn_query_[static_cast<std::size_t>(stage)].b);
    Tensor mixed;
    if (groups.size() == 1) {
      mixed = cross_attention(q, embedding_.rows_for(groups[0].label));
    } else {
      std::vector<Tensor> parts;
      parts.reserve(groups.size());
      for (const Group& g : groups)
        parts.push_back(cross_attention(
            slice(q, 0, g.start * len, g.count * len),
            embedding_.rows_for(g.label)));
      mixed = concat(0, parts);
    }
    Tensor o = matmul(mixed, attn_out_[static_cast<std::size_t>(stage)].w);
    o = add_row_bias(o, attn_out_[static_cast<std::size_t>(stage)].b);
    h = add(h, unflatten_positions(o, n, len));
  }
  Tensor out = tanh(apply_conv(h, out_conv_, 1, pad));
  if (identity) return out;
  std::vector<int> inverse(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
        static_cast<int>(i);
  Tensor flat = gather_rows(reshape(out, {n, kWindowLength}), inverse);
  return reshape(flat, {n, 1, kWindowLength});
}

GanBundle::DiscOutput GanBundle::discriminate(
    const Tensor& x, const std::vector<int>& labels) const {
  require(x.rank() == 3 && x.dim(1) == 1 && x.dim(2) == kWindowLength,
          "discriminate: expects windows shaped [N,1,1024]");
  const Index n = x.dim(0);
  require(static_cast<Index>(labels.size()) == n,
          "discriminate: one label per window");
  Tensor cond = gather_rows(cond_table_, labels);          // [N, d_c]
  cond = reshape(cond, {n, config_.cond_channels, 1});
  cond = upsample_nearest(cond, kWindowLength);            // broadcast over L
  Tensor h = concat(1, {x, cond});
  Index pad = config_.disc_kernel / 2;
  for (std::size_t i = 0; i < disc_convs_.size(); ++i)
    h = swish(apply_conv(h, disc_convs_[i], config_.disc_strides[i], pad));
  Tensor flat = reshape(h, {n, disc_flat_dim_});
  DiscOutput out;
  out.logit = reshape(apply_linear(flat, score_head_), {n});
  out.score = sigmoid(out.logit);
  out.z_hat = apply_linear(flat, latent_head_);
  return out;
}

std::vector<Tensor> GanBundle::gen_params() {
  std::vector<Tensor> out{stem_.w, stem_.b};
  for (std::size_t i = 0; i < stage_convs_.size(); ++i) {
    out.push_back(stage_convs_[i].w);
    out.push_back(stage_convs_[i].b);
    out.push_back(attn_query_[i].w);
    out.push_back(attn_query_[i].b);
    out.push_back(attn_out_[i].w);
    out.push_back(attn_out_[i].b);
  }
  out.push_back(out_conv_.w);
  out.push_back(out_conv_.b);
  out.push_back(embedding_.table);
  return out;
}

std::vector<Tensor> GanBundle::disc_params() {
  std::vector<Tensor> out{cond_table_};
  for (Conv& c : disc_convs_) {
    out.push_back(c.w);
    out.push_back(c.b);
  }
  out.push_back(score_head_.w);
  out.push_back(score_head_.b);
  out.push_back(latent_head_.w);
  out.push_back(latent_head_.b);
  return out;
}

void GanBundle::force_neutral_score_head() {
  score_head_.w.raw_value().setZero();
  score_head_.b.raw_value().setZero();
}

void GanBundle::zero_attention_projections() {
  for (std::size_t i = 0; i < attn_query_.size(); ++i) {
    attn_query_[i].w.raw_value().setZero();
    attn_query_[i].b.raw_value().setZero();
    attn_out_[i].w.raw_value().setZero();
    attn_out_[i].b.raw_value().setZero();
  }
}

namespace {

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

// -mean ln sigmoid(logit), stable
Tensor nll_real(const Tensor& logit) {
  return mean(softplus(mul_scalar(logit, -1.0)));
}
// -mean ln(1 - sigmoid(logit)), stable
Tensor nll_fake(const Tensor& logit) { return mean(softplus(logit)); }

}  // namespace

GanLossParts gan_losses(const GanBundle& bundle, const Tensor& real,
                        const std::vector<int>& labels, const Tensor& z,
                        bool compute_consistency) {
  const GanConfig& cfg = bundle.config();
  Tensor fake = bundle.generate(z, labels);
  auto d_real = bundle.discriminate(real, labels);
  auto d_fake = bundle.discriminate(fake, labels);

  GanLossParts parts;
  parts.l_d = add(nll_real(d_real.logit), nll_fake(d_fake.logit));
  parts.l_g = cfg.non_saturating
                  ? nll_real(d_fake.logit)
                  : mul_scalar(nll_fake(d_fake.logit), -1.0);
  if (compute_consistency) {
    parts.l_clr = mse(d_fake.z_hat, z);
    Tensor rec = bundle.generate(d_real.z_hat, labels);
    parts.l_rec = mse(rec, real);
    parts.d_total = add(parts.l_d, mul_scalar(parts.l_clr, cfg.lambda1));
    parts.g_total = add(parts.l_g, mul_scalar(parts.l_rec, cfg.lambda2));
  } else {
    parts.l_clr = Tensor::zeros({1});
    parts.l_rec = Tensor::zeros({1});
    parts.d_total = parts.l_d;
    parts.g_total = parts.l_g;
  }
  return parts;
}

namespace {

Tensor batch_tensor(const Dataset& ds, const std::vector<Index>& idx) {
  const Index n = static_cast<Index>(idx.size());
  Eigen::ArrayXd data(n * kWindowLength);
  for (Index i = 0; i < n; ++i)
    data.segment(i * kWindowLength, kWindowLength) =
        ds.windows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]
            .samples.value();
  return Tensor({n, 1, kWindowLength}, std::move(data));
}

Tensor gaussian_tensor(Shape shape, Rng& rng) {
  Index n = shape_size(shape);
  Eigen::ArrayXd data(n);
  for (Index i = 0; i < n; ++i) data[i] = rng.gaussian();
  return Tensor(std::move(shape), std::move(data));
}

LossTrace train_gan_impl(GanBundle& bundle, const Dataset& train,
                         const GanConfig& config, bool consistency) {
  require(!train.empty(), "train_gan: empty training set");
  for (const SignalWindow& w : train.windows)
    require(w.meta.origin != Origin::test,
            "train_gan: refusing to train on test-tagged windows");
  const Index n_train = train.size();
  const Index batch = std::min<Index>(config.batch, n_train);

  Rng batch_rng = Rng(config.seed).fork(1);
  Rng z_rng = Rng(config.seed).fork(2);
  auto gen_params = bundle.gen_params();
  auto disc_params = bundle.disc_params();
  AdamState gen_state, disc_state;
  LossTrace trace;
  trace.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<Index> idx(static_cast<std::size_t>(batch));
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (Index i = 0; i < batch; ++i) {
      idx[static_cast<std::size_t>(i)] =
          static_cast<Index>(batch_rng.uniform_int(n_train));
      labels[static_cast<std::size_t>(i)] =
          train.windows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].label;
    }
    Tensor real = batch_tensor(train, idx);

    // discriminator step; the fake batch is a constant here
    Tensor z1 = gaussian_tensor({batch, config.noise_dim}, z_rng);
    Tensor fake = bundle.generate(z1, labels);
    double l_d_val = 0, l_clr_val = 0;
    {
      Tape tape;
      TapeScope scope(tape);
      auto d_real = bundle.discriminate(real, labels);
      auto d_fake = bundle.discriminate(fake, labels);
      Tensor l_d = add(nll_real(d_real.logit), nll_fake(d_fake.logit));
      Tensor d_total = l_d;
      if (consistency) {
        Tensor l_clr = mse(d_fake.z_hat, z1);
        d_total = add(l_d, mul_scalar(l_clr, config.lambda1));
        l_clr_val = l_clr.scalar();
      }
      l_d_val = l_d.scalar();
      tape.backward(d_total);
      adam_step(disc_params, disc_state, config.lr);
      zero_grads(disc_params);
    }

    // generator step; gradients flow through D but only G gets updated
    Tensor z2 = gaussian_tensor({batch, config.noise_dim}, z_rng);
    Tensor z_hat_real;
    if (consistency) z_hat_real = bundle.discriminate(real, labels).z_hat;
    double l_g_val = 0, l_rec_val = 0;
    {
      Tape tape;
      TapeScope scope(tape);
      Tensor fake2 = bundle.generate(z2, labels);
      Tensor fake_logit = bundle.discriminate(fake2, labels).logit;
      Tensor l_g = config.non_saturating
                       ? nll_real(fake_logit)
                       : mul_scalar(nll_fake(fake_logit), -1.0);
      Tensor g_total = l_g;
      if (consistency) {
        Tensor rec = bundle.generate(z_hat_real, labels);
        Tensor l_rec = mse(rec, real);
        g_total = add(l_g, mul_scalar(l_rec, config.lambda2));
        l_rec_val = l_rec.scalar();
      }
      l_g_val = l_g.scalar();
      tape.backward(g_total);
      adam_step(gen_params, gen_state, config.lr);
      zero_grads(gen_params);
      zero_grads(disc_params);  // collected pass-through gradients
    }

    if (!std::isfinite(l_d_val) || !std::isfinite(l_g_val) ||
        !std::isfinite(l_clr_val) || !std::isfinite(l_rec_val))
      throw std::runtime_error("train_gan: losses diverged at step " +
                               std::to_string(step));
    trace.push_back({step, l_g_val, l_d_val, l_clr_val, l_rec_val});
  }
  return trace;
}

}  // namespace

LossTrace train_gan(GanBundle& bundle, const Dataset& train,
                    const GanConfig& config) {
  return train_gan_impl(bundle, train, config, /*consistency=*/true);
}

LossTrace train_dcgan_baseline(GanBundle& bundle, const Dataset& train,
                               const GanConfig& config) {
  return train_gan_impl(bundle, train, config, /*consistency=*/false);
}

Dataset augment(const GanBundle& bundle, int per_class, std::uint64_t seed) {
  require(per_class >= 0, "augment: per_class must be nonnegative");
  const GanConfig& cfg = bundle.config();
  Dataset out;
  out.class_count = cfg.classes;
  Rng root(seed);
  for (int cls = 0; cls < cfg.classes; ++cls) {
    Rng rng = root.fork(static_cast<std::uint64_t>(cls));
    int remaining = per_class;
    int offset = 0;
    while (remaining > 0) {
      const Index n = std::min<Index>(remaining, 64);
      Tensor z = gaussian_tensor({n, cfg.noise_dim}, rng);
      std::vector<int> labels(static_cast<std::size_t>(n), cls);
      Tensor batch = bundle.generate(z, labels);
      for (Index i = 0; i < n; ++i) {
        SignalWindow w;
        w.samples = Tensor({kWindowLength},
                           batch.value().segment(i * kWindowLength,
                                                 kWindowLength));
        w.label = cls;
        w.meta.source_id = -1;
        w.meta.offset = offset++;
        w.meta.origin = Origin::generated;
        out.windows.push_back(std::move(w));
      }
      remaining -= static_cast<int>(n);
    }
  }
  return out;
}

}  // namespace fcdiag
