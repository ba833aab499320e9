#pragma once

#include <functional>
#include <vector>

#include "fcdiag/tensor.hpp"

namespace fcdiag {

// Compares tape gradients against central finite differences.
//
// f must evaluate the scalar loss from the current parameter values (it is
// called repeatedly while coordinates are perturbed). Returns the worst
// relative error max(|g_ad - g_fd|) / max(|g_ad|, |g_fd|, 1e-6) over all
// coordinates of all parameters.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double eps = 1e-5);

}  // namespace fcdiag
