#include "astrec/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "astrec/errors.hpp"
#include "astrec/optim.hpp"
#include "astrec/parallel.hpp"
#include "astrec/scalarfn.hpp"

namespace astrec {

namespace {

constexpr double kExpClamp = 30.0;

std::vector<std::pair<int, int>> to_pairs(const std::vector<Interaction>& batch) {
  std::vector<std::pair<int, int>> pairs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    pairs[i] = {batch[i].user, batch[i].item};
  return pairs;
}

// Deterministic mean of f(j) over traces: chunk sums reduced in order.
template <typename F>
double chunked_mean(std::size_t n, F&& f) {
  std::vector<double> partial(kChunkCount, 0.0);
  for_chunks(n, [&](int c, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += f(j);
    partial[c] = acc;
  });
  double sum = 0.0;
  for (double v : partial) sum += v;
  return sum / static_cast<double>(n);
}

}  // namespace

void validate_weights(const LossWeights& w) {
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0)
    throw ConfigError("loss weights alpha/beta/gamma must be nonnegative");
  if (w.rho < 0 || w.rho > 1) throw ConfigError("rho must lie in [0,1]");
  if (!(w.ips_clip > 0 && w.ips_clip <= 1))
    throw ConfigError("ips_clip must lie in (0,1]");
}

PropensityTable estimate_propensity(const std::vector<Interaction>& biased_train,
                                    int n_users, int n_items, double tau,
                                    double floor) {
  if (n_users <= 0 || n_items <= 0)
    throw ConfigError("estimate_propensity: empty id space");
  if (!(floor > 0 && floor <= 1))
    throw ConfigError("estimate_propensity: floor must lie in (0,1]");
  PropensityTable t;
  t.tau = tau;
  t.floor = floor;
  std::vector<double> count(n_items, 0.0);
  for (const Interaction& it : biased_train) count[it.item] += 1.0;
  t.p.resize(n_items);
  for (int i = 0; i < n_items; ++i)
    t.p[i] = std::clamp(std::pow(count[i] / n_users, tau), floor, 1.0);
  return t;
}

BatchLoss loss_biased_erm(const Model& m, const std::vector<Interaction>& batch,
                          Mode mode, const Rng& rng) {
  if (batch.empty()) throw ConfigError("loss_biased_erm: empty batch");
  BatchLoss out;
  out.traces = forward_batch(m, to_pairs(batch), mode, rng);
  out.partials.resize(batch.size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.value = chunked_mean(batch.size(), [&](std::size_t j) {
    const double logit = out.traces[j].logit;
    const double label = batch[j].label;
    out.partials[j].dlogit = (sigmoid(logit) - label) * inv_b;
    return log_loss(label, logit);
  });
  return out;
}

BatchLoss loss_ips(const Model& m, const std::vector<Interaction>& batch,
                   const PropensityTable& prop, Mode mode, const Rng& rng) {
  if (batch.empty()) throw ConfigError("loss_ips: empty batch");
  for (const Interaction& it : batch) {
    if (it.item < 0 || it.item >= static_cast<int>(prop.p.size()))
      throw ConfigError("loss_ips: item " + std::to_string(it.item) +
                        " missing from the propensity table");
  }
  BatchLoss out;
  out.traces = forward_batch(m, to_pairs(batch), mode, rng);
  out.partials.resize(batch.size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.value = chunked_mean(batch.size(), [&](std::size_t j) {
    const double logit = out.traces[j].logit;
    const double label = batch[j].label;
    const double w = 1.0 / prop.p[batch[j].item];
    out.partials[j].dlogit = w * (sigmoid(logit) - label) * inv_b;
    return w * log_loss(label, logit);
  });
  return out;
}

double pseudo_label(const Model& teacher, int user, int item) {
  thread_local EvalScratch scratch;
  return sigmoid(eval_logit(teacher, user, item, scratch));
}

BatchLoss loss_self_train(const Model& m,
                          const std::vector<std::pair<int, int>>& batch_q,
                          const std::vector<double>& pseudo_labels, Mode mode,
                          const Rng& rng) {
  if (batch_q.size() != pseudo_labels.size())
    throw ConfigError("loss_self_train: batch and pseudo-labels disagree in length");
  if (batch_q.empty()) throw ConfigError("loss_self_train: empty batch");
  BatchLoss out;
  out.traces = forward_batch(m, batch_q, mode, rng);
  out.partials.resize(batch_q.size());
  const double inv_b = 1.0 / static_cast<double>(batch_q.size());
  out.value = chunked_mean(batch_q.size(), [&](std::size_t j) {
    const double logit = out.traces[j].logit;
    out.partials[j].dlogit = (sigmoid(logit) - pseudo_labels[j]) * inv_b;
    return log_loss(pseudo_labels[j], logit);
  });
  return out;
}

BatchLoss loss_entropy(const Model& m,
                       const std::vector<std::pair<int, int>>& batch_q,
                       Mode mode, const Rng& rng) {
  if (batch_q.empty()) throw ConfigError("loss_entropy: empty batch");
  BatchLoss out;
  out.traces = forward_batch(m, batch_q, mode, rng);
  out.partials.resize(batch_q.size());
  const double inv_b = 1.0 / static_cast<double>(batch_q.size());
  out.value = chunked_mean(batch_q.size(), [&](std::size_t j) {
    const double logit = out.traces[j].logit;
    out.partials[j].dlogit = binary_entropy_grad(logit) * inv_b;
    return binary_entropy_of_logit(logit);
  });
  return out;
}

double loss_adversarial_traced(const Model& m, std::vector<ForwardTrace>& traces_p,
                               std::vector<ForwardTrace>& traces_q,
                               std::vector<TraceGrad>& partials_p,
                               std::vector<TraceGrad>& partials_q) {
  if (traces_p.empty() || traces_q.empty())
    throw ConfigError("loss_adversarial: both batches must be non-empty");
  if (partials_p.empty()) partials_p.resize(traces_p.size());
  if (partials_q.empty()) partials_q.resize(traces_q.size());
  if (partials_p.size() != traces_p.size() || partials_q.size() != traces_q.size())
    throw ConfigError("loss_adversarial: partials misaligned with traces");
  for (ForwardTrace& t : traces_p)
    if (!t.has_critic) critic_forward(m, t);
  for (ForwardTrace& t : traces_q)
    if (!t.has_critic) critic_forward(m, t);
  const double inv_p = 1.0 / static_cast<double>(traces_p.size());
  const double inv_q = 1.0 / static_cast<double>(traces_q.size());
  double mean_p = 0.0;
  for (std::size_t j = 0; j < traces_p.size(); ++j) {
    const double s = traces_p[j].critic_score;
    if (!std::isfinite(s)) throw NumericError("loss_adversarial: non-finite critic score");
    mean_p += s;
    partials_p[j].dscore += inv_p;
  }
  mean_p *= inv_p;
  double mean_q = 0.0;
  for (std::size_t j = 0; j < traces_q.size(); ++j) {
    const double s = traces_q[j].critic_score;
    if (!std::isfinite(s)) throw NumericError("loss_adversarial: non-finite critic score");
    const double e = std::exp(std::min(s, kExpClamp));
    mean_q += e;
    partials_q[j].dscore += (s < kExpClamp ? -e : 0.0) * inv_q;
  }
  mean_q *= inv_q;
  return mean_p - mean_q + 1.0;
}

AdversarialLoss loss_adversarial(const Model& m,
                                 const std::vector<std::pair<int, int>>& batch_p,
                                 const std::vector<std::pair<int, int>>& batch_q,
                                 Mode mode, const Rng& rng) {
  AdversarialLoss out;
  out.traces_p = forward_batch(m, batch_p, mode, rng.substream(0));
  out.traces_q = forward_batch(m, batch_q, mode, rng.substream(1));
  out.value = loss_adversarial_traced(m, out.traces_p, out.traces_q,
                                      out.partials_p, out.partials_q);
  return out;
}

double adversarial_value(const Critic& critic,
                         const std::vector<std::vector<double>>& z_p,
                         const std::vector<std::vector<double>>& z_q,
                         CriticGrads* grads) {
  if (z_p.empty() || z_q.empty())
    throw ConfigError("adversarial_value: both sample sets must be non-empty");
  std::vector<double> h1;
  const double inv_p = 1.0 / static_cast<double>(z_p.size());
  const double inv_q = 1.0 / static_cast<double>(z_q.size());
  double mean_p = 0.0, mean_q = 0.0;
  for (const auto& z : z_p) {
    const double s = critic.forward(z.data(), h1);
    if (!std::isfinite(s)) throw NumericError("adversarial_value: non-finite score");
    mean_p += s;
    if (grads) critic_backward(critic, z.data(), h1, inv_p, grads, nullptr);
  }
  for (const auto& z : z_q) {
    const double s = critic.forward(z.data(), h1);
    if (!std::isfinite(s)) throw NumericError("adversarial_value: non-finite score");
    const double e = std::exp(std::min(s, kExpClamp));
    mean_q += e;
    if (grads && s < kExpClamp)
      critic_backward(critic, z.data(), h1, -e * inv_q, grads, nullptr);
  }
  return mean_p * inv_p - mean_q * inv_q + 1.0;
}

void critic_adam_ascend(Critic& c, const CriticGrads& g, CriticAdam& st,
                        const OptHyper& hp) {
  auto ascend = [&](std::vector<double>& p, const std::vector<double>& gr,
                    AdamState& s) {
    std::vector<double> neg(gr.size());
    for (std::size_t i = 0; i < gr.size(); ++i) neg[i] = -gr[i];
    adam_step(p, neg, s, hp);
  };
  ascend(c.w1, g.w1, st.w1);
  ascend(c.b1, g.b1, st.b1);
  ascend(c.w2, g.w2, st.w2);
  std::vector<double> b2{c.b2};
  ascend(b2, {g.b2}, st.b2);
  c.b2 = b2[0];
}

double train_critic(Critic& critic, const std::vector<std::vector<double>>& z_p,
                    const std::vector<std::vector<double>>& z_q, int steps,
                    double lr, int batch_size, const Rng& rng) {
  if (batch_size <= 0) throw ConfigError("train_critic: batch_size must be positive");
  OptHyper hp;
  hp.lr = lr;
  CriticAdam st;
  std::vector<std::vector<double>> bp(batch_size), bq(batch_size);
  for (int t = 0; t < steps; ++t) {
    Rng r = rng.substream(static_cast<std::uint64_t>(t));
    for (int j = 0; j < batch_size; ++j) {
      bp[j] = z_p[r.uniform_int(z_p.size())];
      bq[j] = z_q[r.uniform_int(z_q.size())];
    }
    CriticGrads g;
    g.resize(critic);
    adversarial_value(critic, bp, bq, &g);
    critic_adam_ascend(critic, g, st, hp);
  }
  return adversarial_value(critic, z_p, z_q, nullptr);
}

TotalLoss loss_total(const Model& m, const Model* teacher,
                     const std::vector<Interaction>& batch_d,
                     const std::vector<std::pair<int, int>>& batch_q,
                     const LossWeights& w, Mode mode, const Rng& rng) {
  validate_weights(w);
  if (batch_d.empty()) throw ConfigError("loss_total: empty batch_D");
  const bool need_q = w.alpha > 0 || w.beta > 0 || w.gamma > 0;
  if (need_q && batch_q.empty())
    throw ConfigError("loss_total: empty batch_Q with alpha, beta, or gamma > 0");
  if (w.beta > 0 && teacher == nullptr)
    throw ConfigError("loss_total: self-training needs a teacher snapshot");

  TotalLoss out;
  out.grads.resize(m);

  BatchLoss d = loss_biased_erm(m, batch_d, mode, rng.substream(0));
  out.loss_d = d.value;
  backward(m, d.traces, d.partials, {}, out.grads);

  std::vector<ForwardTrace> traces_q;
  if (need_q) traces_q = forward_batch(m, batch_q, mode, rng.substream(1));

  if (w.alpha > 0) {
    // P side: features of the logged subset of batch_D (labels unused).
    std::vector<ForwardTrace> traces_p;
    for (std::size_t j = 0; j < batch_d.size(); ++j)
      if (batch_d[j].source == Source::Logged) traces_p.push_back(d.traces[j]);
    if (!traces_p.empty()) {
      std::vector<TraceGrad> pp, pq;
      out.loss_a = loss_adversarial_traced(m, traces_p, traces_q, pp, pq);
      for (TraceGrad& g : pp) g.dscore *= w.alpha;
      for (TraceGrad& g : pq) g.dscore *= w.alpha;
      const FreezeSet no_psi{false, true, false};
      backward(m, traces_p, pp, no_psi, out.grads);
      backward(m, traces_q, pq, no_psi, out.grads);
    }
    // An all-uniform batch_D leaves no P sample; the step skips L_A.
  }

  if (w.beta > 0 || w.gamma > 0) {
    std::vector<TraceGrad> sq(traces_q.size());
    const double inv_q = 1.0 / static_cast<double>(traces_q.size());
    if (w.beta > 0) {
      out.loss_s = chunked_mean(traces_q.size(), [&](std::size_t j) {
        const double pl = pseudo_label(*teacher, batch_q[j].first, batch_q[j].second);
        const double logit = traces_q[j].logit;
        sq[j].dlogit += w.beta * (sigmoid(logit) - pl) * inv_q;
        return log_loss(pl, logit);
      });
    }
    if (w.gamma > 0 && !w.entropy_updates_head) {
      out.loss_e = chunked_mean(traces_q.size(), [&](std::size_t j) {
        const double logit = traces_q[j].logit;
        sq[j].dlogit += w.gamma * binary_entropy_grad(logit) * inv_q;
        return binary_entropy_of_logit(logit);
      });
    }
    if (w.beta > 0 || !w.entropy_updates_head)
      backward(m, traces_q, sq, {false, true, true}, out.grads);
    if (w.gamma > 0 && w.entropy_updates_head) {
      std::vector<TraceGrad> eq(traces_q.size());
      out.loss_e = chunked_mean(traces_q.size(), [&](std::size_t j) {
        const double logit = traces_q[j].logit;
        eq[j].dlogit = w.gamma * binary_entropy_grad(logit) * inv_q;
        return binary_entropy_of_logit(logit);
      });
      backward(m, traces_q, eq, {false, false, true}, out.grads);
    }
  }

  out.value = out.loss_d + w.alpha * out.loss_a + w.beta * out.loss_s +
              w.gamma * out.loss_e;
  return out;
}

MultitaskLoss loss_multitask(const Model& m,
                             const std::vector<Interaction>& batch_p,
                             const std::vector<Interaction>& batch_q_labeled,
                             const LossWeights& w, Mode mode, const Rng& rng) {
  validate_weights(w);
  if (batch_p.empty()) throw ConfigError("loss_multitask: empty batch_P");
  if (batch_q_labeled.empty() && (w.rho < 1.0 || w.alpha > 0))
    throw ConfigError("loss_multitask: empty uniform batch with rho < 1 or alpha > 0");

  MultitaskLoss out;
  out.grads.resize(m);

  BatchLoss p = loss_biased_erm(m, batch_p, mode, rng.substream(0));
  for (TraceGrad& g : p.partials) g.dlogit *= w.rho;
  out.value = w.rho * p.value;

  if (!batch_q_labeled.empty()) {
    BatchLoss q = loss_biased_erm(m, batch_q_labeled, mode, rng.substream(1));
    for (TraceGrad& g : q.partials) g.dlogit *= (1.0 - w.rho);
    out.value += (1.0 - w.rho) * q.value;
    if (w.alpha > 0) {
      // Alignment R on clean features: || mean z_P - mean z_Q ||^2.
      const int k = m.k;
      std::vector<double> delta(k, 0.0);
      for (const ForwardTrace& t : p.traces)
        for (int d = 0; d < k; ++d) delta[d] += t.z_clean[d] / p.traces.size();
      for (const ForwardTrace& t : q.traces)
        for (int d = 0; d < k; ++d) delta[d] -= t.z_clean[d] / q.traces.size();
      double r = 0.0;
      for (double v : delta) r += v * v;
      out.value += w.alpha * r;
      const double cp = w.alpha * 2.0 / static_cast<double>(p.traces.size());
      const double cq = -w.alpha * 2.0 / static_cast<double>(q.traces.size());
      for (TraceGrad& g : p.partials) {
        g.dz.resize(k);
        for (int d = 0; d < k; ++d) g.dz[d] = cp * delta[d];
      }
      for (TraceGrad& g : q.partials) {
        g.dz.resize(k);
        for (int d = 0; d < k; ++d) g.dz[d] = cq * delta[d];
      }
    }
    backward(m, q.traces, q.partials, {}, out.grads);
  }
  backward(m, p.traces, p.partials, {}, out.grads);
  return out;
}

}  // namespace astrec
