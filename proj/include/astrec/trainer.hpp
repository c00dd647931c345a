#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/losses.hpp"
#include "astrec/model.hpp"
#include "astrec/rng.hpp"

namespace astrec {

enum class Objective { Biased, IPS, MultiTask, AST };

const char* objective_name(Objective o);
Objective objective_from_string(const std::string& s);

struct TrainConfig {
  Objective objective = Objective::AST;
  LossWeights weights{0.6, 0.4, 0.4};
  double lr = 0.005;
  double critic_lr = 0.0;  // <= 0: use lr
  int critic_steps = 1;    // critic updates per iteration; 1 = joint step only
  double weight_decay = 1e-5;
  long long max_steps = 20000;
  int batch_size_d = 512;
  int batch_size_q = 512;
  int teacher_refresh = 100;  // 1 refreshes every step
  int eval_every = 500;
  int patience = 10;  // early stop after this many non-improving evals
  int k = 16;
  double dropout_rate = 0.2;
  Variant variant = Variant::MF;
  int critic_hidden = 16;
  std::uint64_t seed = 0;
  bool implicit_negatives = false;  // draw label-0 pairs at train time
  int neg_ratio = 4;                // negatives per positive slot (implicit)
  int eval_k = 5;                   // validation NDCG@K
  double propensity_tau = 1.0;      // IPS estimator power
};

void validate_train_config(const TrainConfig& c);

struct EvalRow {
  long long step = 0;
  double loss_d = 0.0, loss_a = 0.0, loss_s = 0.0, loss_e = 0.0;
  double loss_total = 0.0;
  double val_ndcg = 0.0;
};

enum class StopReason { MaxSteps, EarlyStop };

const char* stop_reason_name(StopReason r);

struct TrainResult {
  Model best_model;
  long long best_step = 0;
  double best_val_ndcg = 0.0;
  std::vector<EvalRow> history;  // one row per eval, strictly increasing step
  StopReason stop_reason = StopReason::MaxSteps;
  long long steps_run = 0;
};

// One simultaneous min-max step per iteration: sample batch_D (uniform with
// replacement over D = D_P or D_P u D_Q) and batch_Q (uniform grid pairs),
// refresh the teacher on schedule, descend (phi, psi), ascend theta. Every
// eval_every steps the validation NDCG@K decides best-checkpoint tracking
// and early stopping. propensity_override injects oracle propensities for
// IPS; the default estimates them from the biased split.
TrainResult train(const Dataset& ds, const TrainConfig& config, const Rng& rng,
                  const PropensityTable* propensity_override = nullptr);

// The full run first, then one run per named component ("A", "S", "E") with
// that weight zeroed and everything else unchanged.
struct AblationRun {
  std::string name;
  TrainResult result;
};

std::vector<AblationRun> ablate(const Dataset& ds, const TrainConfig& config,
                                const std::vector<std::string>& components,
                                const Rng& rng);

}  // namespace astrec
