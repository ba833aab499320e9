#include "fcdiag/contrastive.hpp"

#include <algorithm>

namespace fcdiag {

void ContrastiveConfig::validate() const {
  require(n_pairs >= 0, "contrastive: n_pairs must be nonnegative");
  require(lambda_con >= 0, "contrastive: lambda_con must be nonnegative");
  require(sim_epsilon > 0 && sim_epsilon < 0.1,
          "contrastive: sim_epsilon must lie in (0, 0.1)");
}

namespace {

// Index pairs drawn balanced over (i, j, Y); shared between make_pairs and
// the in-batch sampler.
struct IndexPair {
  Index i, j;
  int y;
};

std::vector<IndexPair> draw_pairs(const std::vector<int>& labels, int n_pairs,
                                  Rng& rng, bool* positives_only) {
  std::vector<std::vector<Index>> by_label;
  for (Index i = 0; i < static_cast<Index>(labels.size()); ++i) {
    int lab = labels[static_cast<std::size_t>(i)];
    if (static_cast<int>(by_label.size()) <= lab)
      by_label.resize(static_cast<std::size_t>(lab) + 1);
    by_label[static_cast<std::size_t>(lab)].push_back(i);
  }
  std::vector<int> present, multi;
  for (std::size_t c = 0; c < by_label.size(); ++c) {
    if (!by_label[c].empty()) present.push_back(static_cast<int>(c));
    if (by_label[c].size() >= 2) multi.push_back(static_cast<int>(c));
  }
  const bool can_negative = present.size() >= 2;
  const bool can_positive = !multi.empty();
  if (positives_only) *positives_only = !can_negative;

  std::vector<IndexPair> pairs;
  if (n_pairs <= 0 || (!can_negative && !can_positive)) return pairs;
  pairs.reserve(static_cast<std::size_t>(n_pairs));
  int want_pos = can_negative ? (can_positive ? n_pairs / 2 : 0) : n_pairs;
  for (int p = 0; p < n_pairs; ++p) {
    bool positive = p < want_pos || !can_negative;
    if (positive) {
      const auto& pool = by_label[static_cast<std::size_t>(
          multi[static_cast<std::size_t>(rng.uniform_int(
              static_cast<std::int64_t>(multi.size())))])];
      Index a = pool[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
      Index b = a;
      while (b == a)
        b = pool[static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
      pairs.push_back({a, b, 1});
    } else {
      int c1 = present[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(present.size())))];
      int c2 = c1;
      while (c2 == c1)
        c2 = present[static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(present.size())))];
      const auto& p1 = by_label[static_cast<std::size_t>(c1)];
      const auto& p2 = by_label[static_cast<std::size_t>(c2)];
      Index a = p1[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(p1.size())))];
      Index b = p2[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(p2.size())))];
      pairs.push_back({a, b, 0});
    }
  }
  return pairs;
}

}  // namespace

std::vector<SamplePair> make_pairs(const Dataset& train, int n_pairs,
                                   std::uint64_t seed) {
  require(train.size() >= 2, "make_pairs: need at least two windows");
  require(n_pairs > 0, "make_pairs: n_pairs must be positive");
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(train.size()));
  for (const SignalWindow& w : train.windows) labels.push_back(w.label);
  int distinct = 0;
  {
    std::vector<int> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    distinct = static_cast<int>(
        std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  }
  if (distinct < 2)
    throw std::invalid_argument(
        "make_pairs: single-class dataset cannot form negative pairs");

  Rng rng(seed);
  auto index_pairs = draw_pairs(labels, n_pairs, rng, nullptr);
  std::vector<SamplePair> out;
  out.reserve(index_pairs.size());
  for (const IndexPair& ip : index_pairs) {
    SamplePair sp;
    sp.a = train.windows[static_cast<std::size_t>(ip.i)];
    sp.b = train.windows[static_cast<std::size_t>(ip.j)];
    sp.y = sp.a.label == sp.b.label ? 1 : 0;
    require(sp.y == ip.y, "make_pairs: pair label bookkeeping broke");
    out.push_back(std::move(sp));
  }
  return out;
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  require(u.rank() == 1 && v.rank() == 1 && u.dim(0) == v.dim(0),
          "cosine_similarity: expects two vectors of equal dimension");
  require(u.value().matrix().norm() > 0 && v.value().matrix().norm() > 0,
          "cosine_similarity: undefined for zero vectors");
  Tensor dot = sum(mul(u, v));
  Tensor nu = sqrt(sum(square(u)));
  Tensor nv = sqrt(sum(square(v)));
  return div(dot, mul(nu, nv));
}

Tensor contrastive_loss(const Tensor& similarity, int y, double eps) {
  require(similarity.size() == 1, "contrastive_loss: similarity must be scalar");
  require(y == 0 || y == 1, "contrastive_loss: Y must be 0 or 1");
  require(eps > 0 && eps < 0.1, "contrastive_loss: eps must lie in (0, 0.1)");
  require(std::abs(similarity[0]) <= 1.0 + 1e-9,
          "contrastive_loss: similarity outside [-1,1]");
  Tensor shifted = clamp(add_scalar(mul_scalar(similarity, 0.5), 0.5), eps,
                         1.0 - eps);
  if (y == 1) return mul_scalar(log(shifted), -1.0);
  return mul_scalar(log(add_scalar(mul_scalar(shifted, -1.0), 1.0)), -1.0);
}

JointLossParts joint_loss(const Tensor& features, const Tensor& logits,
                          const std::vector<int>& labels,
                          const ContrastiveConfig& config, Rng& rng) {
  config.validate();
  require(features.rank() == 2 && logits.rank() == 2,
          "joint_loss: features and logits must be [N,*]");
  require(features.dim(0) == logits.dim(0) &&
              features.dim(0) == static_cast<Index>(labels.size()),
          "joint_loss: batch size mismatch");

  JointLossParts parts;
  parts.ce = cross_entropy(logits, labels);
  if (config.lambda_con == 0.0) {
    parts.total = parts.ce;
    parts.con = Tensor::zeros({1});
    return parts;
  }

  int n_pairs = config.n_pairs > 0 ? config.n_pairs
                                   : static_cast<int>(labels.size());
  auto pairs = draw_pairs(labels, n_pairs, rng, &parts.positives_only);
  parts.pair_count = static_cast<int>(pairs.size());
  if (pairs.empty()) {
    parts.con = Tensor::zeros({1});
    parts.total = parts.ce;
    return parts;
  }

  Index d = features.dim(1);
  Tensor acc = Tensor::zeros({1});
  for (const auto& pair : pairs) {
    Tensor fi = reshape(slice(features, 0, pair.i, 1), {d});
    Tensor fj = reshape(slice(features, 0, pair.j, 1), {d});
    Tensor s = cosine_similarity(fi, fj);
    acc = add(acc, contrastive_loss(s, pair.y, config.sim_epsilon));
  }
  parts.con = mul_scalar(acc, 1.0 / static_cast<double>(pairs.size()));
  parts.total = add(parts.ce, mul_scalar(parts.con, config.lambda_con));
  return parts;
}

}  // namespace fcdiag
