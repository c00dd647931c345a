#pragma once

#include <algorithm>
#include <cmath>

namespace astrec {

// Probability clamp applied everywhere a probability feeds a logarithm.
inline constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
  return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

// Logistic function with a stable branch for large |y|; output clamped to
// [kProbEps, 1 - kProbEps] so downstream logs never produce -inf.
inline double sigmoid(double y) {
  double p;
  if (y >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-y));
  } else {
    double e = std::exp(y);
    p = e / (1.0 + e);
  }
  return clamp_prob(p);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Binary cross-entropy of a (possibly soft) label against a logit, natural
// log, computed on the clamped sigmoid.
inline double log_loss(double label, double logit) {
  double p = sigmoid(logit);
  return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

// Entropy of sigmoid(logit) in nats. Evaluated via softplus directly on the
// logit, so saturated logits report the true near-zero entropy instead of
// the clamp floor.
inline double binary_entropy_of_logit(double logit) {
  double a = std::abs(logit);
  double one_minus_p = 1.0 / (1.0 + std::exp(a));  // exp overflow -> 0, as wanted
  return softplus(-a) + one_minus_p * a;
}

// d/dlogit of binary_entropy_of_logit; p(1-p) computed unclamped.
inline double binary_entropy_grad(double logit) {
  double p = 1.0 / (1.0 + std::exp(-logit));
  return -logit * p * (1.0 - p);
}

}  // namespace astrec
