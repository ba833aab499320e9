#include "fcdiag/optim.hpp"

#include <cmath>

namespace fcdiag {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = Eigen::ArrayXd::Zero(params[i].size());
      state.v[i] = Eigen::ArrayXd::Zero(params[i].size());
    }
  }
  require(state.m.size() == params.size(),
          "adam_step: parameter count changed across steps");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    require(state.m[i].size() == p.size(),
            "adam_step: parameter shape changed across steps");
    const Eigen::ArrayXd& g = p.grad();  // zero-filled if never accumulated
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.square();
    p.raw_value() -=
        lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + state.epsilon);
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace fcdiag
