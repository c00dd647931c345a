#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "astrec/errors.hpp"

namespace astrec {

// Central-difference gradient oracle: (L(p + h e_j) - L(p - h e_j)) / 2h.
// `loss` is any callable taking const std::vector<double>&. Used by the
// gradient acceptance tests; not meant for production training.
template <typename LossFn>
std::vector<double> finite_diff_grad(LossFn&& loss, std::vector<double> params,
                                     double h = 1e-5) {
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double save = params[j];
    params[j] = save + h;
    const double up = loss(params);
    params[j] = save - h;
    const double down = loss(params);
    params[j] = save;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite loss at coordinate " +
                         std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace astrec
