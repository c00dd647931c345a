#pragma once

#include <utility>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/model.hpp"
#include "astrec/rng.hpp"
#include "astrec/synth.hpp"

namespace astrec {

// HR@K is reported in one of two modes; Recall is the default (see the
// README's metrics notes for why).
enum class HrMode { Recall, AnyHit };

struct MetricsReport {
  double hr = 0.0;
  double ndcg = 0.0;
  int k = 5;
  HrMode hr_mode = HrMode::Recall;
  int n_users_evaluated = 0;
  int n_users_skipped = 0;  // users with no positive test item
};

// Candidates sorted by Eval-mode logit, descending; ties broken by ascending
// item id so the order is deterministic.
std::vector<int> rank_items(const Model& m, int user, std::vector<int> candidates);

// DCG@K = sum_{j<=min(K,len)} rel_j / log2(j+1); IDCG over the ideal order of
// the same relevance multiset; 0 when nothing is relevant.
double ndcg_at_k(const std::vector<int>& ranked_relevance, int k);

// Recall: (# relevant in top K) / n_relevant_total. AnyHit: 1 if any.
double hr_at_k(const std::vector<int>& ranked_relevance, int n_relevant_total,
               int k, HrMode mode);

// Per-user ranking over that user's own test items; users without a positive
// are skipped and counted. Unweighted user mean, bit-stable reduction order.
MetricsReport evaluate(const Model& m, const std::vector<Interaction>& test,
                       int k, HrMode mode = HrMode::Recall);

// Proxy for the covariate-shift distance: train a linear logistic domain
// classifier on the first halves, measure holdout error e on the second,
// report 2*(1 - 2e) clamped to [0,2].
double a_distance(const std::vector<std::vector<double>>& z_p,
                  const std::vector<std::vector<double>>& z_q);

// Label-conditioned mean discrepancy:
// sum_c w_c * || mean(z_P | y=c) - mean(z_Q | y=c) ||^2 with pooled weights;
// a class absent on either side contributes 0.
double cond_shift(const std::vector<std::vector<double>>& z_p,
                  const std::vector<int>& y_p,
                  const std::vector<std::vector<double>>& z_q,
                  const std::vector<int>& y_q);

// Current value of the dual KL estimator on the model's own critic; no
// parameter updates.
double kl_estimate(const Model& m,
                   const std::vector<std::pair<int, int>>& batch_p,
                   const std::vector<std::pair<int, int>>& batch_q);

// mean |oracle_g - oracle_k| under uniform pairs (q_branch) and under
// exposure-weighted pairs (p_branch). Oracle-only: needs a SynthWorld.
struct LabelingDistance {
  double q_branch = 0.0;
  double p_branch = 0.0;
};

LabelingDistance labeling_distance(const SynthWorld& world, int pair_sample,
                                   int mc_draws, const Rng& rng);

}  // namespace astrec
