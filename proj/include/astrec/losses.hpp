#pragma once

#include <utility>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/model.hpp"
#include "astrec/optim.hpp"
#include "astrec/rng.hpp"

namespace astrec {

struct LossWeights {
  double alpha = 0.0;  // adversarial
  double beta = 0.0;   // self-training
  double gamma = 0.0;  // entropy
  double rho = 1.0;    // multi-task mixing (baseline only)
  double ips_clip = 0.05;
  bool entropy_updates_head = false;
};

void validate_weights(const LossWeights& w);

struct PropensityTable {
  std::vector<double> p;  // per-item exposure estimate, entries in (0,1]
  double tau = 1.0;
  double floor = 0.05;
};

// p_hat(O|i) = clip((count_i / n_users)^tau, floor, 1).
PropensityTable estimate_propensity(const std::vector<Interaction>& biased_train,
                                    int n_users, int n_items, double tau = 1.0,
                                    double floor = 0.05);

// Value plus aligned traces/partials, ready for backward() with whatever
// freeze set the objective routes this component to.
struct BatchLoss {
  double value = 0.0;
  std::vector<ForwardTrace> traces;
  std::vector<TraceGrad> partials;
};

BatchLoss loss_biased_erm(const Model& m, const std::vector<Interaction>& batch,
                          Mode mode, const Rng& rng);

BatchLoss loss_ips(const Model& m, const std::vector<Interaction>& batch,
                   const PropensityTable& prop, Mode mode, const Rng& rng);

// sigma(teacher Eval logit); no gradients flow into the teacher.
double pseudo_label(const Model& teacher, int user, int item);

// Mean log loss against soft pseudo-labels; route with freeze {psi, theta}.
BatchLoss loss_self_train(const Model& m,
                          const std::vector<std::pair<int, int>>& batch_q,
                          const std::vector<double>& pseudo_labels, Mode mode,
                          const Rng& rng);

// Mean H(sigma(logit)); route phi-only unless entropy_updates_head.
BatchLoss loss_entropy(const Model& m,
                       const std::vector<std::pair<int, int>>& batch_q,
                       Mode mode, const Rng& rng);

// Fenchel-dual KL estimate mean_P[theta(z)] - mean_Q[exp(theta(z))] + 1 on
// traces already forwarded; evaluates the critic on each trace and fills
// dscore partials (d value / d score). The critic ascends on this value,
// phi descends; psi takes nothing.
double loss_adversarial_traced(const Model& m, std::vector<ForwardTrace>& traces_p,
                               std::vector<ForwardTrace>& traces_q,
                               std::vector<TraceGrad>& partials_p,
                               std::vector<TraceGrad>& partials_q);

struct AdversarialLoss {
  double value = 0.0;
  std::vector<ForwardTrace> traces_p, traces_q;
  std::vector<TraceGrad> partials_p, partials_q;
};

AdversarialLoss loss_adversarial(const Model& m,
                                 const std::vector<std::pair<int, int>>& batch_p,
                                 const std::vector<std::pair<int, int>>& batch_q,
                                 Mode mode, const Rng& rng);

// Same dual on raw feature rows (no model), for KL diagnostics and tests.
// When grads is non-null accumulates d value / d critic weights into it.
double adversarial_value(const Critic& critic,
                         const std::vector<std::vector<double>>& z_p,
                         const std::vector<std::vector<double>>& z_q,
                         CriticGrads* grads);

// Adam state for a standalone critic plus one ascent step (the gradients
// are negated internally; adam_step itself always descends).
struct CriticAdam {
  AdamState w1, b1, w2, b2;
};

void critic_adam_ascend(Critic& c, const CriticGrads& g, CriticAdam& st,
                        const OptHyper& hp);

// Minibatch Adam ascent of the dual; returns the final full-batch value.
double train_critic(Critic& critic, const std::vector<std::vector<double>>& z_p,
                    const std::vector<std::vector<double>>& z_q, int steps,
                    double lr, int batch_size, const Rng& rng);

// Combined objective. grads carries the min-player routing
//   phi <- d(L_D + alpha L_A + beta L_S + gamma L_E)
//   psi <- d(L_D) (+ d(gamma L_E) iff entropy_updates_head)
// and grads.critic holds +d(alpha L_A)/d theta — the trainer negates it to
// realize the critic's ascent.
struct TotalLoss {
  double value = 0.0;
  double loss_d = 0.0, loss_a = 0.0, loss_s = 0.0, loss_e = 0.0;
  Grads grads;
};

TotalLoss loss_total(const Model& m, const Model* teacher,
                     const std::vector<Interaction>& batch_d,
                     const std::vector<std::pair<int, int>>& batch_q,
                     const LossWeights& w, Mode mode, const Rng& rng);

// rho * ERM(P) + (1-rho) * ERM(Q_labeled) + alpha * ||mean z_P - mean z_Q||^2.
struct MultitaskLoss {
  double value = 0.0;
  Grads grads;
};

MultitaskLoss loss_multitask(const Model& m,
                             const std::vector<Interaction>& batch_p,
                             const std::vector<Interaction>& batch_q_labeled,
                             const LossWeights& w, Mode mode, const Rng& rng);

}  // namespace astrec
