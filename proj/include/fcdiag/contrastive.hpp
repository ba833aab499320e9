#pragma once

#include <cstdint>
#include <vector>

#include "fcdiag/signal.hpp"
#include "fcdiag/tensor.hpp"

namespace fcdiag {

// A pair of windows with correlation label: Y = 1 iff the labels agree.
struct SamplePair {
  SignalWindow a;
  SignalWindow b;
  int y = 0;
};

struct ContrastiveConfig {
  int n_pairs = 64;          // 0: one pair per batch element
  double lambda_con = 0.5;
  double sim_epsilon = 1e-6;

  void validate() const;
};

// Deterministic balanced pairing: half the pairs positive, half negative,
// never pairing a window with itself. Needs at least two classes (otherwise
// no negative pairs exist) and at least one class with two windows.
std::vector<SamplePair> make_pairs(const Dataset& train, int n_pairs,
                                   std::uint64_t seed);

// u.v / (|u||v|), differentiable; rejects zero vectors.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

// Cross-entropy on the similarity remapped from [-1,1] to (0,1):
// S' = clamp((S+1)/2, eps, 1-eps), L = -(Y ln S' + (1-Y) ln(1-S')).
Tensor contrastive_loss(const Tensor& similarity, int y, double eps);

struct JointLossParts {
  Tensor total;
  Tensor ce;
  Tensor con;               // zero tensor when lambda_con == 0
  bool positives_only = false;
  int pair_count = 0;
};

// total = CE(logits, labels) + lambda_con * mean pair loss, with pairs drawn
// within the batch. A single-class batch yields positive pairs only and is
// flagged. With lambda_con == 0 the total aliases the CE term exactly.
JointLossParts joint_loss(const Tensor& features, const Tensor& logits,
                          const std::vector<int>& labels,
                          const ContrastiveConfig& config, Rng& rng);

}  // namespace fcdiag
