#pragma once

#include <cstdint>
#include <vector>

namespace astrec {

// Bias-corrected Adam with decoupled weight decay. One AdamState per
// parameter block; m/v are lazily sized on the first step.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

struct OptHyper {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// In-place update of `params`. Ascent is implemented by the caller negating
// `grads` before this call. Throws ConfigError on shape mismatch.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, const OptHyper& hp);

// Plain SGD with the same decoupled weight-decay convention.
void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              double lr, double weight_decay);

}  // namespace astrec
