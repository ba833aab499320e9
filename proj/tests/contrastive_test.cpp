#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fcdiag/contrastive.hpp"
#include "fcdiag/grad_check.hpp"
#include "oracles.hpp"

using namespace fcdiag;

namespace {

Dataset tiny_dataset(const std::vector<int>& labels, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.class_count = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SignalWindow w;
    w.samples = Tensor::uniform({kWindowLength}, rng, -1, 1);
    w.label = labels[i];
    w.meta.source_id = static_cast<int>(i);
    ds.class_count = std::max(ds.class_count, labels[i] + 1);
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
  CHECK(cosine_similarity(Tensor::from({1, 0}), Tensor::from({1, 0})).scalar() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(Tensor::from({1, 0}), Tensor::from({0, 1})).scalar() ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_similarity(Tensor::from({1, 2}), Tensor::from({2, 4})).scalar() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(cosine_similarity(Tensor::from({0, 0}), Tensor::from({1, 0})));
}

TEST_CASE("cosine similarity is scale invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor u = Tensor::uniform({8}, rng, -1, 1);
    Tensor v = Tensor::uniform({8}, rng, -1, 1);
    double alpha = rng.uniform(0.01, 50.0);
    double beta = rng.uniform(0.01, 50.0);
    double s = cosine_similarity(u, v).scalar();
    double ss = cosine_similarity(mul_scalar(u, alpha), mul_scalar(v, beta))
                    .scalar();
    CHECK(std::abs(s - ss) < 1e-12);
    CHECK(s >= -1.0 - 1e-12);
    CHECK(s <= 1.0 + 1e-12);
  }
}

TEST_CASE("contrastive loss pinned values") {
  const double eps = 1e-6;
  CHECK(contrastive_loss(Tensor::from({0.0}), 1, eps).scalar() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // perfect positive: -ln(1-eps) ~ eps
  CHECK(contrastive_loss(Tensor::from({1.0}), 1, eps).scalar() ==
        doctest::Approx(-std::log1p(-eps)).epsilon(1e-12));
  // worst-case negative: large but finite
  double worst = contrastive_loss(Tensor::from({1.0}), 0, eps).scalar();
  CHECK(worst == doctest::Approx(-std::log(eps)).epsilon(1e-9));
  CHECK(std::isfinite(worst));
}

TEST_CASE("contrastive loss is monotone and symmetric") {
  const double eps = 1e-4;
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    double s1 = rng.uniform(-0.999, 0.999);
    double s2 = rng.uniform(-0.999, 0.999);
    if (s1 > s2) std::swap(s1, s2);
    if (s2 - s1 < 1e-9) continue;
    double pos1 = contrastive_loss(Tensor::from({s1}), 1, eps).scalar();
    double pos2 = contrastive_loss(Tensor::from({s2}), 1, eps).scalar();
    CHECK(pos1 > pos2);  // decreasing in S for Y=1
    double neg1 = contrastive_loss(Tensor::from({s1}), 0, eps).scalar();
    double neg2 = contrastive_loss(Tensor::from({s2}), 0, eps).scalar();
    CHECK(neg1 < neg2);  // increasing in S for Y=0
    CHECK(contrastive_loss(Tensor::from({s1}), 1, eps).scalar() ==
          doctest::Approx(
              contrastive_loss(Tensor::from({-s1}), 0, eps).scalar())
              .epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss gradients w.r.t. both embeddings") {
  Rng rng(3);
  Tensor u = Tensor::uniform({16}, rng, -1, 1, true);
  Tensor v = Tensor::uniform({16}, rng, -1, 1, true);
  auto f_pos = [&] { return contrastive_loss(cosine_similarity(u, v), 1, 1e-6); };
  CHECK(grad_check(f_pos, {u, v}) < 1e-5);
  auto f_neg = [&] { return contrastive_loss(cosine_similarity(u, v), 0, 1e-6); };
  CHECK(grad_check(f_neg, {u, v}) < 1e-5);
}

TEST_CASE("make_pairs balance and labels") {
  Dataset ds = tiny_dataset({0, 0, 1, 1, 2, 2, 3, 5, 5, 3}, 11);
  auto pairs = make_pairs(ds, 100, 7);
  REQUIRE(pairs.size() == 100);
  int positives = 0;
  for (const auto& p : pairs) {
    CHECK(p.y == (p.a.label == p.b.label ? 1 : 0));
    CHECK_FALSE((p.a.meta.source_id == p.b.meta.source_id));
    positives += p.y;
  }
  CHECK(positives == 50);

  auto again = make_pairs(ds, 100, 7);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].a.meta.source_id == again[i].a.meta.source_id);
    CHECK(pairs[i].b.meta.source_id == again[i].b.meta.source_id);
  }
}

TEST_CASE("make_pairs rejects single-class datasets") {
  Dataset ds = tiny_dataset({4, 4}, 5);
  CHECK_THROWS(make_pairs(ds, 10, 1));
}

TEST_CASE("joint loss ablation switch lambda=0") {
  Rng rng(4);
  Tensor features = Tensor::uniform({6, 8}, rng, -1, 1);
  Tensor logits = Tensor::uniform({6, 3}, rng, -1, 1);
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  ContrastiveConfig cfg;
  cfg.lambda_con = 0.0;
  Rng pair_rng(9);
  auto parts = joint_loss(features, logits, labels, cfg, pair_rng);
  CHECK(parts.total.scalar() == cross_entropy(logits, labels).scalar());
  CHECK(parts.con.scalar() == 0.0);
}

TEST_CASE("joint loss on identical windows of one class") {
  Rng rng(5);
  Eigen::ArrayXd row = Tensor::uniform({8}, rng, -1, 1).value();
  Eigen::ArrayXd all(4 * 8);
  for (int i = 0; i < 4; ++i) all.segment(i * 8, 8) = row;
  Tensor features({4, 8}, all);
  Tensor logits = Tensor::uniform({4, 3}, rng, -1, 1);
  std::vector<int> labels{1, 1, 1, 1};
  ContrastiveConfig cfg;
  cfg.lambda_con = 0.5;
  cfg.sim_epsilon = 1e-6;
  Rng pair_rng(10);
  auto parts = joint_loss(features, logits, labels, cfg, pair_rng);
  CHECK(parts.positives_only);
  CHECK(parts.pair_count > 0);
  // identical features: similarity 1, loss -ln(1-eps) ~ 1e-6
  CHECK(parts.con.scalar() == doctest::Approx(-std::log1p(-1e-6)).epsilon(1e-6));
  CHECK(parts.con.scalar() < 1e-5);
}

TEST_CASE("joint loss gradient through the feature extractor side") {
  Rng rng(6);
  Tensor x = Tensor::uniform({6, 4}, rng, -1, 1, true);
  Tensor wf = Tensor::uniform({4, 5}, rng, -1, 1, true);
  Tensor wl = Tensor::uniform({5, 3}, rng, -1, 1, true);
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  ContrastiveConfig cfg;
  cfg.lambda_con = 0.7;
  cfg.n_pairs = 8;
  auto f = [&] {
    Tensor features = swish(matmul(x, wf));
    Tensor logits = matmul(features, wl);
    Rng pair_rng(77);  // same pairs on every evaluation
    return joint_loss(features, logits, labels, cfg, pair_rng).total;
  };
  CHECK(grad_check(f, {x, wf, wl}) < 1e-4);
}
