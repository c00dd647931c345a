#pragma once

#include <cstdint>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/rng.hpp"

namespace astrec {

struct SynthConfig {
  int n_users = 500;
  int n_items = 300;
  int k = 16;
  double sigma_factor = 1.0;    // factor scale; entries ~ N(0, sigma_factor^2/k)
  double sigma_r = 1.0;         // preference noise scale
  double sigma_o = 1.0;         // exposure noise scale
  double lambda_conf = 0.0;     // confounding coupling in [0,1]
  double target_density = 0.05; // expected fraction of exposed pairs
  long long uniform_test_pairs = 20000;
  std::uint64_t seed = 1;
};

// Ground-truth world: preference factors, exposure factors, item popularity,
// and the calibrated exposure offset. All probabilities derive from it.
struct SynthWorld {
  std::vector<double> user_factors;           // n_users x k, row-major
  std::vector<double> item_factors;           // n_items x k
  std::vector<double> exposure_user_factors;  // n_users x k
  std::vector<double> exposure_item_factors;  // n_items x k
  std::vector<double> item_popularity_bias;   // n_items
  double exposure_scale_offset = 0.0;
  SynthConfig config;

  double pref_score(int user, int item) const;   // u . v
  double expo_logit(int user, int item) const;   // u'. v' + pop_i + offset
};

// eps = lambda*c + sqrt(1-lambda^2)*sigma*n; the shared c is what couples
// the preference and exposure draws of one pair-event.
double noise_coupled(double lambda, double c, double sigma, double n);

// Factors sampled, then the exposure offset calibrated by bisection so the
// mean exposure probability over 10^4 sampled pairs hits target_density
// (10% relative), else a calibration error reporting the achieved density.
SynthWorld build_world(const SynthConfig& config, Rng& rng);

// sigma(u.v + eps_R): one fresh independent normal per call, plus the
// caller-supplied confounder draw.
double preference_prob(const SynthWorld& world, int user, int item,
                       double confounder_draw, Rng& rng);

// min(1, exp(log sigma(u'.v' + pop_i + offset) + eps_O)), same confounder.
double exposure_prob(const SynthWorld& world, int user, int item,
                     double confounder_draw, Rng& rng);

// One pass over the full user x item grid: draw c, expose, label exposed
// pairs with the same c. Emits only exposed pairs, row-major order.
std::vector<Interaction> sample_logged(const SynthWorld& world, const Rng& rng);

// n_pairs uniform pairs with replacement, labeled ignoring exposure.
std::vector<Interaction> sample_uniform(const SynthWorld& world,
                                        long long n_pairs, const Rng& rng);

// g = E_c[preference_prob]; k = E_c[pref * expo] / E_c[expo] — the optimal
// labeling functions off- and on-support. Monte-Carlo with mc_draws >= 1000.
double oracle_g(const SynthWorld& world, int user, int item, int mc_draws,
                const Rng& rng);
double oracle_k(const SynthWorld& world, int user, int item, int mc_draws,
                const Rng& rng);

}  // namespace astrec
