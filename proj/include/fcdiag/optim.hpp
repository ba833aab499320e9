#pragma once

#include <vector>

#include "fcdiag/tensor.hpp"

namespace fcdiag {

// Adam with the usual bias correction. One state per parameter list; the
// parameter order must stay fixed across steps.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long t = 0;
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
};

// Applies one update in place using each parameter's accumulated gradient.
// Parameters without an accumulated gradient are treated as having zero
// gradient. Does not clear gradients; call zero_grads afterwards.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

void zero_grads(std::vector<Tensor>& params);

}  // namespace fcdiag
