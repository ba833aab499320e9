#include "fcdiag/grad_check.hpp"

#include <cmath>

namespace fcdiag {

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double eps) {
  require(eps >= 1e-7 && eps <= 1e-3, "grad_check: eps outside [1e-7,1e-3]");
  require(!params.empty(), "grad_check: no parameters");
  for (Tensor& p : params) {
    require(p.requires_grad(), "grad_check: parameter without requires_grad");
    p.zero_grad();
  }

  // analytic gradients
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    require(loss.size() == 1, "grad_check: f must return a scalar");
    tape.backward(loss);
  }
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (Index i = 0; i < p.size(); ++i) {
      double saved = p.raw_value()[i];
      p.raw_value()[i] = saved + eps;
      double up = f().scalar();
      p.raw_value()[i] = saved - eps;
      double down = f().scalar();
      p.raw_value()[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      double ad = analytic[pi][i];
      double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return worst;
}

}  // namespace fcdiag
