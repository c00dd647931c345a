#include "astrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "astrec/errors.hpp"
#include "astrec/parallel.hpp"
#include "astrec/scalarfn.hpp"

namespace astrec {

namespace {

double dot_k(const std::vector<double>& a, int row_a,
             const std::vector<double>& b, int row_b, int k) {
  double s = 0.0;
  const double* pa = a.data() + static_cast<std::size_t>(row_a) * k;
  const double* pb = b.data() + static_cast<std::size_t>(row_b) * k;
  for (int d = 0; d < k; ++d) s += pa[d] * pb[d];
  return s;
}

// log sigma(s), stable for all s.
double log_sigmoid(double s) { return -softplus(-s); }

void fill_gaussian(std::vector<double>& v, double scale, Rng rng) {
  for (double& x : v) x = scale * rng.gaussian();
}

void validate(const SynthConfig& c) {
  if (c.n_users <= 0 || c.n_items <= 0 || c.k <= 0)
    throw ConfigError("synth: sizes and k must be positive");
  if (!(c.target_density > 0.0 && c.target_density < 1.0))
    throw ConfigError("synth: target_density must lie in (0,1)");
  if (c.lambda_conf < 0.0 || c.lambda_conf > 1.0)
    throw ConfigError("synth: lambda_conf must lie in [0,1]");
  if (c.sigma_factor < 0 || c.sigma_r < 0 || c.sigma_o < 0)
    throw ConfigError("synth: noise scales must be nonnegative");
}

}  // namespace

double SynthWorld::pref_score(int user, int item) const {
  return dot_k(user_factors, user, item_factors, item, config.k);
}

double SynthWorld::expo_logit(int user, int item) const {
  return dot_k(exposure_user_factors, user, exposure_item_factors, item, config.k) +
         item_popularity_bias[item] + exposure_scale_offset;
}

double noise_coupled(double lambda, double c, double sigma, double n) {
  return lambda * c + std::sqrt(1.0 - lambda * lambda) * sigma * n;
}

SynthWorld build_world(const SynthConfig& config, Rng& rng) {
  validate(config);
  SynthWorld w;
  w.config = config;
  const std::size_t uk = static_cast<std::size_t>(config.n_users) * config.k;
  const std::size_t ik = static_cast<std::size_t>(config.n_items) * config.k;
  const double scale = config.sigma_factor / std::sqrt(static_cast<double>(config.k));
  w.user_factors.resize(uk);
  w.item_factors.resize(ik);
  w.exposure_user_factors.resize(uk);
  w.exposure_item_factors.resize(ik);
  w.item_popularity_bias.resize(config.n_items);
  fill_gaussian(w.user_factors, scale, rng.substream(0));
  fill_gaussian(w.item_factors, scale, rng.substream(1));
  fill_gaussian(w.exposure_user_factors, scale, rng.substream(2));
  fill_gaussian(w.exposure_item_factors, scale, rng.substream(3));
  fill_gaussian(w.item_popularity_bias, 1.0, rng.substream(4));

  // Exposure offset calibration: sample pairs and noise once (common random
  // numbers), then bisect on the offset — the mean is monotone in it.
  const int n_cal = 10000;
  std::vector<double> base(n_cal), eps(n_cal);
  {
    Rng cal = rng.substream(5);
    for (int j = 0; j < n_cal; ++j) {
      int u = static_cast<int>(cal.uniform_int(config.n_users));
      int i = static_cast<int>(cal.uniform_int(config.n_items));
      double c = cal.gaussian();
      double n = cal.gaussian();
      base[j] = dot_k(w.exposure_user_factors, u, w.exposure_item_factors, i,
                      config.k) + w.item_popularity_bias[i];
      eps[j] = noise_coupled(config.lambda_conf, c, config.sigma_o, n);
    }
  }
  auto mean_density = [&](double offset) {
    double s = 0.0;
    for (int j = 0; j < n_cal; ++j)
      s += std::min(1.0, std::exp(log_sigmoid(base[j] + offset) + eps[j]));
    return s / n_cal;
  };
  double lo = -40.0, hi = 40.0;
  for (int step = 0; step < 64; ++step) {
    double mid = 0.5 * (lo + hi);
    (mean_density(mid) < config.target_density ? lo : hi) = mid;
  }
  w.exposure_scale_offset = 0.5 * (lo + hi);
  const double achieved = mean_density(w.exposure_scale_offset);
  if (std::abs(achieved - config.target_density) > 0.10 * config.target_density) {
    throw NumericError("synth: exposure calibration failed, achieved density " +
                       std::to_string(achieved) + " vs target " +
                       std::to_string(config.target_density));
  }
  return w;
}

double preference_prob(const SynthWorld& world, int user, int item,
                       double confounder_draw, Rng& rng) {
  const double eps_r = noise_coupled(world.config.lambda_conf, confounder_draw,
                                     world.config.sigma_r, rng.gaussian());
  return sigmoid(world.pref_score(user, item) + eps_r);
}

double exposure_prob(const SynthWorld& world, int user, int item,
                     double confounder_draw, Rng& rng) {
  const double eps_o = noise_coupled(world.config.lambda_conf, confounder_draw,
                                     world.config.sigma_o, rng.gaussian());
  return std::min(1.0, std::exp(log_sigmoid(world.expo_logit(user, item)) + eps_o));
}

std::vector<Interaction> sample_logged(const SynthWorld& world, const Rng& rng) {
  const long long n_pairs =
      static_cast<long long>(world.config.n_users) * world.config.n_items;
  std::vector<std::vector<Interaction>> parts(kChunkCount);
  for_chunks(static_cast<std::size_t>(n_pairs), [&](int c, std::size_t lo, std::size_t hi) {
    auto& out = parts[c];
    for (std::size_t p = lo; p < hi; ++p) {
      Rng ev = rng.substream(p);
      const int user = static_cast<int>(p / world.config.n_items);
      const int item = static_cast<int>(p % world.config.n_items);
      const double conf = ev.gaussian();
      const double p_expose = exposure_prob(world, user, item, conf, ev);
      if (ev.uniform() >= p_expose) continue;
      const double p_pref = preference_prob(world, user, item, conf, ev);
      Interaction it;
      it.user = user;
      it.item = item;
      it.label = ev.uniform() < p_pref ? 1 : 0;
      it.raw_rating = it.label ? 5 : 1;
      it.source = Source::Logged;
      out.push_back(it);
    }
  });
  std::vector<Interaction> logged;
  for (const auto& part : parts) logged.insert(logged.end(), part.begin(), part.end());
  return logged;
}

std::vector<Interaction> sample_uniform(const SynthWorld& world,
                                        long long n_pairs, const Rng& rng) {
  if (n_pairs <= 0) return {};
  std::vector<Interaction> out(static_cast<std::size_t>(n_pairs));
  for_chunks(static_cast<std::size_t>(n_pairs), [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      Rng ev = rng.substream(j);
      Interaction it;
      it.user = static_cast<int>(ev.uniform_int(world.config.n_users));
      it.item = static_cast<int>(ev.uniform_int(world.config.n_items));
      const double conf = ev.gaussian();
      const double p_pref = preference_prob(world, it.user, it.item, conf, ev);
      it.label = ev.uniform() < p_pref ? 1 : 0;
      it.raw_rating = it.label ? 5 : 1;
      it.source = Source::Uniform;
      out[j] = it;
    }
  });
  return out;
}

double oracle_g(const SynthWorld& world, int user, int item, int mc_draws,
                const Rng& rng) {
  std::vector<double> partial(kChunkCount, 0.0);
  for_chunks(static_cast<std::size_t>(mc_draws), [&](int c, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      Rng ev = rng.substream(j);
      acc += preference_prob(world, user, item, ev.gaussian(), ev);
    }
    partial[c] = acc;
  });
  double sum = 0.0;
  for (double v : partial) sum += v;
  return sum / mc_draws;
}

double oracle_k(const SynthWorld& world, int user, int item, int mc_draws,
                const Rng& rng) {
  std::vector<double> part_num(kChunkCount, 0.0), part_den(kChunkCount, 0.0);
  for_chunks(static_cast<std::size_t>(mc_draws), [&](int c, std::size_t lo, std::size_t hi) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      Rng ev = rng.substream(j);
      const double conf = ev.gaussian();
      const double pp = preference_prob(world, user, item, conf, ev);
      const double pe = exposure_prob(world, user, item, conf, ev);
      num += pp * pe;
      den += pe;
    }
    part_num[c] = num;
    part_den[c] = den;
  });
  double num = 0.0, den = 0.0;
  for (int c = 0; c < kChunkCount; ++c) {
    num += part_num[c];
    den += part_den[c];
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace astrec
