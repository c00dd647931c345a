#include "astrec/optim.hpp"

#include <cmath>
#include <string>

#include "astrec/errors.hpp"

namespace astrec {

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, const OptHyper& hp) {
  const std::size_t n = params.size();
  if (grads.size() != n) {
    throw ConfigError("adam_step: grad size " + std::to_string(grads.size()) +
                      " != param size " + std::to_string(n));
  }
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw ConfigError("adam_step: optimizer state size " +
                      std::to_string(state.m.size()) + " != param size " +
                      std::to_string(n));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    // Decoupled weight decay: applied to the parameter, not the gradient.
    params[i] -= hp.lr * (mhat / (std::sqrt(vhat) + hp.eps) +
                          hp.weight_decay * params[i]);
  }
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              double lr, double weight_decay) {
  if (grads.size() != params.size()) {
    throw ConfigError("sgd_step: grad size " + std::to_string(grads.size()) +
                      " != param size " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * (grads[i] + weight_decay * params[i]);
  }
}

}  // namespace astrec
