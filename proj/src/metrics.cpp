#include "astrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "astrec/errors.hpp"
#include "astrec/losses.hpp"
#include "astrec/parallel.hpp"
#include "astrec/scalarfn.hpp"

namespace astrec {

std::vector<int> rank_items(const Model& m, int user,
                            std::vector<int> candidates) {
  EvalScratch scratch;
  std::vector<std::pair<double, int>> keyed(candidates.size());
  for (std::size_t j = 0; j < candidates.size(); ++j)
    keyed[j] = {eval_logit(m, user, candidates[j], scratch), candidates[j]};
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t j = 0; j < candidates.size(); ++j)
    candidates[j] = keyed[j].second;
  return candidates;
}

double ndcg_at_k(const std::vector<int>& ranked_relevance, int k) {
  if (k <= 0) throw ConfigError("ndcg_at_k: K must be positive");
  int n_rel = 0;
  for (int r : ranked_relevance) n_rel += r ? 1 : 0;
  if (n_rel == 0) return 0.0;
  const int len = static_cast<int>(ranked_relevance.size());
  double dcg = 0.0;
  for (int j = 0; j < std::min(k, len); ++j)
    if (ranked_relevance[j]) dcg += 1.0 / std::log2(j + 2.0);
  double idcg = 0.0;
  for (int j = 0; j < std::min(k, n_rel); ++j) idcg += 1.0 / std::log2(j + 2.0);
  return dcg / idcg;
}

double hr_at_k(const std::vector<int>& ranked_relevance, int n_relevant_total,
               int k, HrMode mode) {
  if (k <= 0) throw ConfigError("hr_at_k: K must be positive");
  if (n_relevant_total <= 0)
    throw ConfigError("hr_at_k: no relevant items; exclude the user upstream");
  const int len = static_cast<int>(ranked_relevance.size());
  int hits = 0;
  for (int j = 0; j < std::min(k, len); ++j)
    hits += ranked_relevance[j] ? 1 : 0;
  if (mode == HrMode::AnyHit) return hits > 0 ? 1.0 : 0.0;
  return static_cast<double>(hits) / n_relevant_total;
}

MetricsReport evaluate(const Model& m, const std::vector<Interaction>& test,
                       int k, HrMode mode) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  if (k <= 0) throw ConfigError("evaluate: K must be positive");

  // Group by user; std::map keeps user order ascending for a stable mean.
  std::map<int, std::vector<std::pair<int, int>>> by_user;  // item, label
  for (const Interaction& it : test)
    by_user[it.user].push_back({it.item, it.label});

  std::vector<int> users;
  std::vector<const std::vector<std::pair<int, int>>*> rows;
  for (const auto& [u, v] : by_user) {
    users.push_back(u);
    rows.push_back(&v);
  }

  MetricsReport rep;
  rep.k = k;
  rep.hr_mode = mode;

  const std::size_t n = users.size();
  std::vector<double> user_ndcg(n, 0.0), user_hr(n, 0.0);
  std::vector<char> keep(n, 0);
  for_chunks(n, [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      const auto& items = *rows[j];
      int n_rel = 0;
      std::vector<int> cand;
      for (const auto& [item, label] : items) {
        cand.push_back(item);
        n_rel += label ? 1 : 0;
      }
      if (n_rel == 0) continue;
      std::vector<int> ranked = rank_items(m, users[j], cand);
      std::vector<int> rel(ranked.size(), 0);
      for (std::size_t r = 0; r < ranked.size(); ++r)
        for (const auto& [item, label] : items)
          if (item == ranked[r]) {
            rel[r] = label;
            break;
          }
      keep[j] = 1;
      user_ndcg[j] = ndcg_at_k(rel, k);
      user_hr[j] = hr_at_k(rel, n_rel, k, mode);
    }
  });

  double sn = 0.0, sh = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!keep[j]) {
      ++rep.n_users_skipped;
      continue;
    }
    ++rep.n_users_evaluated;
    sn += user_ndcg[j];
    sh += user_hr[j];
  }
  if (rep.n_users_evaluated > 0) {
    rep.ndcg = sn / rep.n_users_evaluated;
    rep.hr = sh / rep.n_users_evaluated;
  }
  return rep;
}

namespace {

void check_rows(const std::vector<std::vector<double>>& z, const char* who) {
  if (z.empty()) throw ConfigError(std::string(who) + ": empty sample set");
  for (const auto& row : z)
    if (row.size() != z[0].size())
      throw ConfigError(std::string(who) + ": ragged sample rows");
}

}  // namespace

double a_distance(const std::vector<std::vector<double>>& z_p,
                  const std::vector<std::vector<double>>& z_q) {
  check_rows(z_p, "a_distance");
  check_rows(z_q, "a_distance");
  if (z_p.size() < 20 || z_q.size() < 20)
    throw ConfigError("a_distance: need at least 20 samples per side");
  if (z_p[0].size() != z_q[0].size())
    throw ConfigError("a_distance: dimension mismatch between sides");
  const std::size_t dim = z_p[0].size();
  const std::size_t fp = z_p.size() / 2, fq = z_q.size() / 2;

  // Linear logistic domain classifier (P -> 1, Q -> 0), 200 full-batch
  // gradient steps at lr 0.1 from zero weights.
  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  const double n_fit = static_cast<double>(fp + fq);
  for (int step = 0; step < 200; ++step) {
    std::vector<double> gw(dim, 0.0);
    double gb = 0.0;
    auto accumulate = [&](const std::vector<double>& z, double y) {
      double s = b;
      for (std::size_t d = 0; d < dim; ++d) s += w[d] * z[d];
      const double r = (sigmoid(s) - y) / n_fit;
      for (std::size_t d = 0; d < dim; ++d) gw[d] += r * z[d];
      gb += r;
    };
    for (std::size_t j = 0; j < fp; ++j) accumulate(z_p[j], 1.0);
    for (std::size_t j = 0; j < fq; ++j) accumulate(z_q[j], 0.0);
    for (std::size_t d = 0; d < dim; ++d) w[d] -= 0.1 * gw[d];
    b -= 0.1 * gb;
  }

  auto predicts_p = [&](const std::vector<double>& z) {
    double s = b;
    for (std::size_t d = 0; d < dim; ++d) s += w[d] * z[d];
    return s > 0.0;
  };
  double errors = 0.0;
  const double n_hold = static_cast<double>((z_p.size() - fp) + (z_q.size() - fq));
  for (std::size_t j = fp; j < z_p.size(); ++j)
    if (!predicts_p(z_p[j])) errors += 1.0;
  for (std::size_t j = fq; j < z_q.size(); ++j)
    if (predicts_p(z_q[j])) errors += 1.0;
  const double err = errors / n_hold;
  return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

double cond_shift(const std::vector<std::vector<double>>& z_p,
                  const std::vector<int>& y_p,
                  const std::vector<std::vector<double>>& z_q,
                  const std::vector<int>& y_q) {
  check_rows(z_p, "cond_shift");
  check_rows(z_q, "cond_shift");
  if (z_p.size() != y_p.size() || z_q.size() != y_q.size())
    throw ConfigError("cond_shift: labels misaligned with samples");
  if (z_p[0].size() != z_q[0].size())
    throw ConfigError("cond_shift: dimension mismatch between sides");
  const std::size_t dim = z_p[0].size();
  const double n_all = static_cast<double>(z_p.size() + z_q.size());
  double total = 0.0;
  for (int c = 0; c <= 1; ++c) {
    std::vector<double> mp(dim, 0.0), mq(dim, 0.0);
    std::size_t np = 0, nq = 0;
    for (std::size_t j = 0; j < z_p.size(); ++j)
      if ((y_p[j] != 0) == (c != 0)) {
        ++np;
        for (std::size_t d = 0; d < dim; ++d) mp[d] += z_p[j][d];
      }
    for (std::size_t j = 0; j < z_q.size(); ++j)
      if ((y_q[j] != 0) == (c != 0)) {
        ++nq;
        for (std::size_t d = 0; d < dim; ++d) mq[d] += z_q[j][d];
      }
    if (np == 0 || nq == 0) continue;
    const double w_c = static_cast<double>(np + nq) / n_all;
    double dist = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double delta = mp[d] / np - mq[d] / nq;
      dist += delta * delta;
    }
    total += w_c * dist;
  }
  return total;
}

double kl_estimate(const Model& m,
                   const std::vector<std::pair<int, int>>& batch_p,
                   const std::vector<std::pair<int, int>>& batch_q) {
  return loss_adversarial(m, batch_p, batch_q, Mode::Eval, Rng(0, 0)).value;
}

LabelingDistance labeling_distance(const SynthWorld& world, int pair_sample,
                                   int mc_draws, const Rng& rng) {
  if (pair_sample < 1)
    throw ConfigError("labeling_distance: pair_sample must be positive");
  const int n_users = world.config.n_users, n_items = world.config.n_items;
  LabelingDistance out;

  // Q branch: uniform pairs, chunk-parallel with an ordered reduction.
  std::vector<double> partial(kChunkCount, 0.0);
  for_chunks(static_cast<std::size_t>(pair_sample),
             [&](int c, std::size_t lo, std::size_t hi) {
               double acc = 0.0;
               for (std::size_t s = lo; s < hi; ++s) {
                 Rng r = rng.substream(s);
                 const int u = static_cast<int>(r.uniform_int(n_users));
                 const int i = static_cast<int>(r.uniform_int(n_items));
                 const double g = oracle_g(world, u, i, mc_draws, r.substream(1));
                 const double k = oracle_k(world, u, i, mc_draws, r.substream(2));
                 acc += std::abs(g - k);
               }
               partial[c] = acc;
             });
  double sum = 0.0;
  for (double v : partial) sum += v;
  out.q_branch = sum / pair_sample;

  // P branch: exposure-weighted pairs via rejection sampling (accept a
  // uniform pair with its realized exposure probability).
  Rng pr = rng.substream(1u << 20);
  double acc = 0.0;
  int accepted = 0;
  const long long budget = 2000LL * pair_sample;
  for (long long t = 0; t < budget && accepted < pair_sample; ++t) {
    Rng r = pr.substream(static_cast<std::uint64_t>(t));
    const int u = static_cast<int>(r.uniform_int(n_users));
    const int i = static_cast<int>(r.uniform_int(n_items));
    const double c = r.gaussian();
    const double expo = exposure_prob(world, u, i, c, r);
    if (r.uniform() >= expo) continue;
    const double g = oracle_g(world, u, i, mc_draws, r.substream(1));
    const double k = oracle_k(world, u, i, mc_draws, r.substream(2));
    acc += std::abs(g - k);
    ++accepted;
  }
  if (accepted == 0)
    throw NumericError("labeling_distance: no exposed pair accepted in budget");
  out.p_branch = acc / accepted;
  return out;
}

}  // namespace astrec
