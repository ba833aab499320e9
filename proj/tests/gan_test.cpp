#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fcdiag/gan.hpp"
#include "fcdiag/grad_check.hpp"
#include "oracles.hpp"

using namespace fcdiag;

namespace {

GanConfig small_config() {
  GanConfig cfg;
  cfg.classes = 3;
  cfg.noise_dim = 8;
  cfg.d_v = 8;
  cfg.rows_per_class = 2;
  cfg.gen_base_channels = 8;
  cfg.disc_channels = {4, 8};
  cfg.disc_strides = {8, 8};
  cfg.disc_kernel = 9;
  cfg.cond_channels = 2;
  cfg.batch = 6;
  cfg.steps = 3;
  return cfg;
}

Dataset small_real_dataset(int classes, int per_class, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.class_count = classes;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      SignalWindow w;
      w.samples = Tensor::uniform({kWindowLength}, rng, -0.8, 0.8);
      w.label = c;
      w.meta.origin = Origin::train;
      ds.windows.push_back(std::move(w));
    }
  return ds;
}

Eigen::ArrayXd snapshot(std::vector<Tensor> params) {
  Index total = 0;
  for (const Tensor& p : params) total += p.size();
  Eigen::ArrayXd out(total);
  Index at = 0;
  for (const Tensor& p : params) {
    out.segment(at, p.size()) = p.value();
    at += p.size();
  }
  return out;
}

}  // namespace

TEST_CASE("cross_attention with a single key row returns that row") {
  Rng rng(1);
  Tensor f = Tensor::uniform({5, 4}, rng, -2, 2);
  Tensor v = Tensor::uniform({1, 4}, rng, -2, 2);
  Tensor out = cross_attention(f, v);
  REQUIRE(out.shape() == Shape{5, 4});
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(out[i * 4 + j] == v[j]);
}

TEST_CASE("cross_attention with zero queries averages the value rows") {
  Rng rng(2);
  Tensor f = Tensor::zeros({3, 4});
  Tensor v = Tensor::uniform({3, 4}, rng, -1, 1);
  Tensor out = cross_attention(f, v);
  for (Index j = 0; j < 4; ++j) {
    double m = (v[j] + v[4 + j] + v[8 + j]) / 3.0;
    for (Index i = 0; i < 3; ++i)
      CHECK(out[i * 4 + j] == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("cross_attention hand-derived two-key case") {
  Tensor f = Tensor::from({1, 2}, {1, 0});
  Tensor v = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor out = cross_attention(f, v);
  double s = 1.0 / std::sqrt(2.0);
  double w0 = std::exp(s) / (std::exp(s) + 1.0);
  CHECK(out[0] == doctest::Approx(w0).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(1.0 - w0).epsilon(1e-9));
  CHECK(out[0] == doctest::Approx(0.6698).epsilon(1e-3));
  CHECK(out[1] == doctest::Approx(0.3302).epsilon(1e-3));
}

TEST_CASE("cross_attention outputs stay in the convex hull of the rows") {
  Rng rng(3);
  Tensor f = Tensor::uniform({40, 6}, rng, -3, 3);
  Tensor v = Tensor::uniform({5, 6}, rng, -2, 2);
  Tensor out = cross_attention(f, v);
  for (Index j = 0; j < 6; ++j) {
    double lo = 1e300, hi = -1e300;
    for (Index r = 0; r < 5; ++r) {
      lo = std::min(lo, v[r * 6 + j]);
      hi = std::max(hi, v[r * 6 + j]);
    }
    for (Index i = 0; i < 40; ++i) {
      CHECK(out[i * 6 + j] >= lo - 1e-12);
      CHECK(out[i * 6 + j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("cross_attention gradients match finite differences") {
  Rng rng(4);
  Tensor f = Tensor::uniform({6, 5}, rng, -1, 1, true);
  Tensor v = Tensor::uniform({3, 5}, rng, -1, 1, true);
  auto fn = [&] { return mean(square(cross_attention(f, v))); };
  CHECK(grad_check(fn, {f, v}) < 1e-4);
}

TEST_CASE("generate respects the output contract") {
  Rng rng(5);
  GanBundle bundle(small_config(), rng);
  Rng zr(6);
  Tensor z = Tensor::uniform({8, 8}, zr, -1, 1);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  Tensor out = bundle.generate(z, labels);
  CHECK(out.shape() == Shape{8, 1, 1024});
  CHECK(out.value().maxCoeff() <= 1.0);
  CHECK(out.value().minCoeff() >= -1.0);
  CHECK_THROWS(bundle.generate(z, {0, 1, 2, 0, 1, 2, 0, 9}));
  CHECK_THROWS(bundle.generate(Tensor::uniform({8, 5}, zr, -1, 1), labels));
}

TEST_CASE("labels steer generation unless the attention projections are zero") {
  Rng rng(7);
  GanBundle bundle(small_config(), rng);
  Rng zr(8);
  Tensor z = Tensor::uniform({4, 8}, zr, -1, 1);
  Tensor a = bundle.generate(z, {0, 0, 0, 0});
  Tensor b = bundle.generate(z, {2, 2, 2, 2});
  CHECK((a.value() - b.value()).abs().maxCoeff() > 0.0);

  bundle.zero_attention_projections();
  Tensor c = bundle.generate(z, {0, 0, 0, 0});
  Tensor d = bundle.generate(z, {2, 2, 2, 2});
  CHECK((c.value() == d.value()).all());
}

TEST_CASE("generate is deterministic in (z, labels)") {
  Rng rng(9);
  GanBundle bundle(small_config(), rng);
  Rng zr(10);
  Tensor z = Tensor::uniform({3, 8}, zr, -1, 1);
  std::vector<int> labels{1, 2, 0};
  Tensor a = bundle.generate(z, labels);
  Tensor b = bundle.generate(z, labels);
  CHECK((a.value() == b.value()).all());
}

TEST_CASE("discriminate output contract") {
  Rng rng(11);
  GanBundle bundle(small_config(), rng);
  Tensor x = Tensor::uniform({5, 1, 1024}, rng, -1, 1);
  std::vector<int> labels{0, 1, 2, 1, 0};
  auto out = bundle.discriminate(x, labels);
  CHECK(out.score.shape() == Shape{5});
  CHECK(out.z_hat.shape() == Shape{5, 8});
  CHECK((out.score.value() > 0.0).all());
  CHECK((out.score.value() < 1.0).all());
}

TEST_CASE("discriminator heads pass a gradient check") {
  Rng rng(12);
  GanBundle bundle(small_config(), rng);
  Tensor x = Tensor::uniform({2, 1, 1024}, rng, -1, 1, true);
  std::vector<int> labels{2, 0};
  Rng mixer(13);
  Tensor wmix = Tensor::uniform({8}, mixer, -1, 1, true);
  auto f = [&] {
    auto out = bundle.discriminate(x, labels);
    Tensor mixer = reshape(concat(0, {wmix, wmix}), {2, 8});
    Tensor zmix = mean(mul(out.z_hat, mixer));
    return add(mean(square(out.score)), zmix);
  };
  // a representative parameter subset keeps the finite differencing cheap
  auto disc = bundle.disc_params();
  std::vector<Tensor> subset{disc[0], disc[2], disc[5], disc[6], disc[7],
                             disc[8], wmix};
  CHECK(grad_check(f, subset) < 1e-4);
}

TEST_CASE("equilibrium values at a neutral discriminator") {
  Rng rng(14);
  GanBundle bundle(small_config(), rng);
  bundle.force_neutral_score_head();
  Tensor real = Tensor::uniform({4, 1, 1024}, rng, -0.5, 0.5);
  Rng zr(15);
  Tensor z = Tensor::uniform({4, 8}, zr, -1, 1);
  std::vector<int> labels{0, 1, 2, 0};
  auto parts = gan_losses(bundle, real, labels, z);
  CHECK(std::abs(parts.l_d.scalar() - 2.0 * std::log(2.0)) < 1e-12);
  CHECK(std::abs(parts.l_g.scalar() - std::log(2.0)) < 1e-12);
}

TEST_CASE("consistency terms recompute from the heads") {
  Rng rng(16);
  GanBundle bundle(small_config(), rng);
  Tensor real = Tensor::uniform({3, 1, 1024}, rng, -0.5, 0.5);
  Rng zr(17);
  Tensor z = Tensor::uniform({3, 8}, zr, -1, 1);
  std::vector<int> labels{0, 1, 2};
  auto parts = gan_losses(bundle, real, labels, z);

  Tensor fake = bundle.generate(z, labels);
  Tensor z_hat = bundle.discriminate(fake, labels).z_hat;
  double clr = (z_hat.value() - z.value()).square().mean();
  CHECK(parts.l_clr.scalar() == doctest::Approx(clr).epsilon(1e-12));

  Tensor z_hat_real = bundle.discriminate(real, labels).z_hat;
  Tensor rec = bundle.generate(z_hat_real, labels);
  double rec_mse = (rec.value() - real.value()).square().mean();
  CHECK(parts.l_rec.scalar() == doctest::Approx(rec_mse).epsilon(1e-12));

  // exact agreement implies zero loss
  CHECK(mean(square(sub(z, z))).scalar() == 0.0);
  CHECK(parts.l_clr.scalar() >= 0.0);
  CHECK(parts.l_rec.scalar() >= 0.0);
}

TEST_CASE("lambda zero reduces to the baseline GAN losses bitwise") {
  Rng rng(18);
  GanConfig cfg = small_config();
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  GanBundle bundle(cfg, rng);
  Tensor real = Tensor::uniform({4, 1, 1024}, rng, -0.5, 0.5);
  Rng zr(19);
  Tensor z = Tensor::uniform({4, 8}, zr, -1, 1);
  std::vector<int> labels{0, 1, 2, 1};
  auto with = gan_losses(bundle, real, labels, z, true);
  auto without = gan_losses(bundle, real, labels, z, false);
  CHECK(with.l_d.scalar() == without.l_d.scalar());
  CHECK(with.l_g.scalar() == without.l_g.scalar());
  CHECK(with.d_total.scalar() == without.d_total.scalar());
  CHECK(with.g_total.scalar() == without.g_total.scalar());
}

TEST_CASE("gan_losses totals pass a gradient check on both players") {
  Rng rng(20);
  GanBundle bundle(small_config(), rng);
  Tensor real = Tensor::uniform({2, 1, 1024}, rng, -0.5, 0.5);
  Rng zr(21);
  Tensor z = Tensor::uniform({2, 8}, zr, -1, 1);
  std::vector<int> labels{0, 2};
  auto gen = bundle.gen_params();
  auto disc = bundle.disc_params();
  auto f_d = [&] { return gan_losses(bundle, real, labels, z).d_total; };
  std::vector<Tensor> d_subset{disc[0], disc[2], disc[5], disc[6], disc[7]};
  CHECK(grad_check(f_d, d_subset) < 1e-4);
  auto f_g = [&] { return gan_losses(bundle, real, labels, z).g_total; };
  // stem bias, first stage conv bias, attention projections, embedding
  std::vector<Tensor> g_subset{gen[1], gen[3], gen[4], gen[6],
                               gen.back()};
  CHECK(grad_check(f_g, g_subset) < 1e-4);
}

TEST_CASE("zero training steps leave the bundle unchanged") {
  Rng rng(22);
  GanConfig cfg = small_config();
  cfg.steps = 0;
  GanBundle bundle(cfg, rng);
  Eigen::ArrayXd before =
      snapshot(bundle.gen_params()) ;
  Dataset train = small_real_dataset(3, 4, 23);
  auto trace = train_gan(bundle, train, cfg);
  CHECK(trace.empty());
  CHECK((snapshot(bundle.gen_params()) == before).all());
}

TEST_CASE("short training runs: trace length, determinism, movement") {
  GanConfig cfg = small_config();
  cfg.steps = 3;
  cfg.seed = 77;
  Dataset train = small_real_dataset(3, 4, 24);

  Rng rng_a(25);
  GanBundle a(cfg, rng_a);
  auto trace_a = train_gan(a, train, cfg);
  REQUIRE(trace_a.size() == 3);
  for (std::size_t i = 0; i < trace_a.size(); ++i) {
    CHECK(trace_a[i].step == static_cast<int>(i) + 1);
    CHECK(std::isfinite(trace_a[i].l_d));
    CHECK(trace_a[i].l_clr >= 0.0);
  }

  Rng rng_b(25);
  GanBundle b(cfg, rng_b);
  auto trace_b = train_gan(b, train, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(trace_a[i].l_d == trace_b[i].l_d);
    CHECK(trace_a[i].l_g == trace_b[i].l_g);
  }
  CHECK((snapshot(a.gen_params()) == snapshot(b.gen_params())).all());

  // the baseline trainer reports no consistency terms
  Rng rng_c(25);
  GanBundle c(cfg, rng_c);
  auto trace_c = train_dcgan_baseline(c, train, cfg);
  for (const auto& row : trace_c) {
    CHECK(row.l_clr == 0.0);
    CHECK(row.l_rec == 0.0);
  }
}

TEST_CASE("training refuses test-tagged windows") {
  GanConfig cfg = small_config();
  cfg.steps = 1;
  Rng rng(26);
  GanBundle bundle(cfg, rng);
  Dataset train = small_real_dataset(3, 2, 27);
  train.windows[0].meta.origin = Origin::test;
  CHECK_THROWS(train_gan(bundle, train, cfg));
}

TEST_CASE("augment produces labeled in-range windows") {
  Rng rng(28);
  GanConfig cfg = small_config();
  cfg.classes = 10;
  GanBundle bundle(cfg, rng);

  Dataset empty = augment(bundle, 0, 1);
  CHECK(empty.size() == 0);

  Dataset ds = augment(bundle, 500, 1);
  CHECK(ds.size() == 5000);  // 10 classes x 500
  std::vector<int> counts = ds.per_class_counts();
  for (int c : counts) CHECK(c == 500);
  for (const auto& w : ds.windows) {
    CHECK(w.samples.size() == 1024);
    CHECK(w.meta.origin == Origin::generated);
  }
  double lo = 1e300, hi = -1e300;
  for (const auto& w : ds.windows) {
    lo = std::min(lo, w.samples.value().minCoeff());
    hi = std::max(hi, w.samples.value().maxCoeff());
  }
  CHECK(lo >= -1.0);
  CHECK(hi <= 1.0);

  Dataset again = augment(bundle, 500, 1);
  CHECK((again.windows[17].samples.value() ==
         ds.windows[17].samples.value()).all());
}
