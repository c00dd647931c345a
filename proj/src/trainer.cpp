#include "astrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "astrec/errors.hpp"
#include "astrec/metrics.hpp"
#include "astrec/optim.hpp"

namespace astrec {

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::Biased: return "biased";
    case Objective::IPS: return "ips";
    case Objective::MultiTask: return "multitask";
    case Objective::AST: return "ast";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& s) {
  if (s == "biased") return Objective::Biased;
  if (s == "ips") return Objective::IPS;
  if (s == "multitask") return Objective::MultiTask;
  if (s == "ast") return Objective::AST;
  throw ConfigError("unknown objective '" + s +
                    "' (expected biased|ips|multitask|ast)");
}

const char* stop_reason_name(StopReason r) {
  return r == StopReason::MaxSteps ? "max_steps" : "early_stop";
}

void validate_train_config(const TrainConfig& c) {
  validate_weights(c.weights);
  if (c.max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
  if (c.batch_size_d < 1 || c.batch_size_q < 1)
    throw ConfigError("train: batch sizes must be >= 1");
  if (c.patience < 1) throw ConfigError("train: patience must be >= 1");
  // lr = 0 is allowed deliberately: it freezes the model, which the tests
  // use to probe the loop without parameter movement.
  if (c.lr < 0) throw ConfigError("train: lr must be nonnegative");
  if (c.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (c.critic_steps < 1) throw ConfigError("train: critic_steps must be >= 1");
  if (c.eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (c.teacher_refresh < 1)
    throw ConfigError("train: teacher_refresh must be >= 1");
  if (c.k < 1) throw ConfigError("train: k must be >= 1");
  if (c.dropout_rate < 0 || c.dropout_rate >= 1)
    throw ConfigError("train: dropout_rate must lie in [0,1)");
  if (c.neg_ratio < 1) throw ConfigError("train: neg_ratio must be >= 1");
  if (c.eval_k < 1) throw ConfigError("train: eval_k must be >= 1");
  if (c.critic_hidden < 1) throw ConfigError("train: critic_hidden must be >= 1");
}

namespace {

std::size_t critic_param_count(const Model& m) {
  return m.critic.w1.size() + m.critic.b1.size() + m.critic.w2.size() + 1;
}

void check_finite(double v, const char* component, long long step) {
  if (!std::isfinite(v))
    throw TrainingError("train: diverged at step " + std::to_string(step) +
                        ": " + component + " is non-finite");
}

// Per-user sorted item lists, for implicit-negative rejection.
std::vector<std::vector<int>> observed_items(const std::vector<Interaction>& pool,
                                             int n_users) {
  std::vector<std::vector<int>> seen(n_users);
  for (const Interaction& it : pool) seen[it.user].push_back(it.item);
  for (auto& v : seen) std::sort(v.begin(), v.end());
  return seen;
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& config, const Rng& rng,
                  const PropensityTable* propensity_override) {
  validate_train_config(config);
  check_dataset(ds);
  if (ds.validation.empty())
    throw ConfigError("train: validation split is empty");

  // D = D_P for the baselines; D_P u D_Q for AST when uniform data exists.
  std::vector<Interaction> pool = ds.biased_train;
  if (config.objective == Objective::AST)
    pool.insert(pool.end(), ds.uniform_train.begin(), ds.uniform_train.end());
  if (pool.empty()) throw ConfigError("train: no training interactions");
  if (config.objective == Objective::MultiTask && ds.uniform_train.empty() &&
      (config.weights.rho < 1.0 || config.weights.alpha > 0))
    throw ConfigError(
        "train: multitask with rho < 1 or alpha > 0 needs uniform data");

  // Implicit-feedback variant: keep positives, draw negatives per slot.
  std::vector<std::vector<int>> seen;
  if (config.implicit_negatives) {
    seen = observed_items(pool, ds.n_users);
    pool = drop_negatives(pool);
    if (pool.empty())
      throw ConfigError("train: implicit_negatives with no positive rows");
  }

  PropensityTable prop;
  if (config.objective == Objective::IPS)
    prop = propensity_override
               ? *propensity_override
               : estimate_propensity(ds.biased_train, ds.n_users, ds.n_items,
                                     config.propensity_tau,
                                     config.weights.ips_clip);

  Model m = init(config.variant, ds.n_users, ds.n_items, config.k,
                 config.dropout_rate, rng.substream(0), config.critic_hidden);

  const std::size_t critic_n = critic_param_count(m);
  const std::size_t min_n = pack_params(m).size() - critic_n;
  OptHyper hp_min;
  hp_min.lr = config.lr;
  hp_min.weight_decay = config.weight_decay;
  OptHyper hp_critic = hp_min;
  if (config.critic_lr > 0) hp_critic.lr = config.critic_lr;
  AdamState st_min, st_critic;

  // Simultaneous update: descent on [0, min_n), ascent on the critic span.
  auto apply_joint = [&](const std::vector<double>& g) {
    std::vector<double> p = pack_params(m);
    std::vector<double> pm(p.begin(), p.begin() + min_n);
    std::vector<double> gm(g.begin(), g.begin() + min_n);
    adam_step(pm, gm, st_min, hp_min);
    std::copy(pm.begin(), pm.end(), p.begin());
    std::vector<double> pc(p.begin() + min_n, p.end());
    std::vector<double> gc(g.begin() + min_n, g.end());
    for (double& x : gc) x = -x;
    adam_step(pc, gc, st_critic, hp_critic);
    std::copy(pc.begin(), pc.end(), p.begin() + min_n);
    unpack_params(m, p);
  };
  auto apply_critic_only = [&](const std::vector<double>& g) {
    std::vector<double> p = pack_params(m);
    std::vector<double> pc(p.begin() + min_n, p.end());
    std::vector<double> gc(g.begin() + min_n, g.end());
    for (double& x : gc) x = -x;
    adam_step(pc, gc, st_critic, hp_critic);
    std::copy(pc.begin(), pc.end(), p.begin() + min_n);
    unpack_params(m, p);
  };

  const bool is_ast = config.objective == Objective::AST;
  const LossWeights weights =
      config.objective == Objective::Biased ? LossWeights{} : config.weights;
  const bool need_q =
      is_ast && (weights.alpha > 0 || weights.beta > 0 || weights.gamma > 0);
  const bool need_teacher = is_ast && weights.beta > 0;

  Model teacher;
  bool teacher_ready = false;

  TrainResult out;
  double best = -1.0;
  int stale = 0;
  double wd_sum = 0, wa_sum = 0, ws_sum = 0, we_sum = 0, wt_sum = 0;
  long long window = 0;

  for (long long n = 1; n <= config.max_steps; ++n) {
    Rng sn = rng.substream(static_cast<std::uint64_t>(n));

    // (a) batches for this step.
    Rng sd = sn.substream(0);
    std::vector<Interaction> batch_d(config.batch_size_d);
    for (Interaction& slot : batch_d) {
      slot = pool[sd.uniform_int(pool.size())];
      if (config.implicit_negatives &&
          sd.uniform_int(static_cast<std::uint64_t>(config.neg_ratio) + 1) != 0) {
        const auto& su = seen[slot.user];
        int item = static_cast<int>(sd.uniform_int(ds.n_items));
        for (int tries = 0; tries < 1000; ++tries) {
          if (!std::binary_search(su.begin(), su.end(), item)) break;
          item = static_cast<int>(sd.uniform_int(ds.n_items));
        }
        slot.item = item;
        slot.label = 0;
        slot.raw_rating = 0;
      }
    }
    Rng sq = sn.substream(1);
    std::vector<std::pair<int, int>> batch_q;
    if (need_q) {
      batch_q.resize(config.batch_size_q);
      for (auto& [u, i] : batch_q) {
        u = static_cast<int>(sq.uniform_int(ds.n_users));
        i = static_cast<int>(sq.uniform_int(ds.n_items));
      }
    }
    std::vector<Interaction> batch_q_labeled;
    if (config.objective == Objective::MultiTask && !ds.uniform_train.empty()) {
      batch_q_labeled.resize(config.batch_size_q);
      for (Interaction& slot : batch_q_labeled)
        slot = ds.uniform_train[sq.uniform_int(ds.uniform_train.size())];
    }

    // (b) teacher snapshot on schedule.
    if (need_teacher &&
        (!teacher_ready || config.teacher_refresh == 1 ||
         n % config.teacher_refresh == 1)) {
      teacher = m;
      teacher_ready = true;
    }

    // (c) loss, gradients, one simultaneous update.
    Rng sf = sn.substream(2);
    double loss_d = 0, loss_a = 0, loss_s = 0, loss_e = 0, loss_value = 0;
    std::vector<double> flat_grads;
    if (config.objective == Objective::IPS) {
      BatchLoss bl = loss_ips(m, batch_d, prop, Mode::Train, sf.substream(0));
      Grads g;
      g.resize(m);
      backward(m, bl.traces, bl.partials, {}, g);
      loss_d = loss_value = bl.value;
      flat_grads = pack_grads(m, g);
    } else if (config.objective == Objective::MultiTask) {
      MultitaskLoss ml = loss_multitask(m, batch_d, batch_q_labeled, weights,
                                        Mode::Train, sf);
      loss_d = loss_value = ml.value;
      flat_grads = pack_grads(m, ml.grads);
    } else {  // Biased or AST share the combined-objective path.
      TotalLoss tl = loss_total(m, teacher_ready ? &teacher : nullptr, batch_d,
                                batch_q, weights, Mode::Train, sf);
      loss_d = tl.loss_d;
      loss_a = tl.loss_a;
      loss_s = tl.loss_s;
      loss_e = tl.loss_e;
      loss_value = tl.value;
      flat_grads = pack_grads(m, tl.grads);
    }
    check_finite(loss_d, "loss_D", n);
    check_finite(loss_a, "loss_A", n);
    check_finite(loss_s, "loss_S", n);
    check_finite(loss_e, "loss_E", n);
    check_finite(loss_value, "loss_total", n);
    apply_joint(flat_grads);

    // Optional extra critic-only ascent steps on fresh forwards.
    if (is_ast && weights.alpha > 0 && config.critic_steps > 1) {
      std::vector<std::pair<int, int>> pairs_p;
      for (const Interaction& it : batch_d)
        if (it.source == Source::Logged) pairs_p.push_back({it.user, it.item});
      for (int s = 1; s < config.critic_steps && !pairs_p.empty(); ++s) {
        Rng cs = sn.substream(4 + static_cast<std::uint64_t>(s));
        auto tp = forward_batch(m, pairs_p, Mode::Train, cs.substream(0));
        auto tq = forward_batch(m, batch_q, Mode::Train, cs.substream(1));
        std::vector<TraceGrad> pp, pq;
        double adv = loss_adversarial_traced(m, tp, tq, pp, pq);
        check_finite(adv, "loss_A", n);
        for (TraceGrad& tg : pp) tg.dscore *= weights.alpha;
        for (TraceGrad& tg : pq) tg.dscore *= weights.alpha;
        Grads cg;
        cg.resize(m);
        const FreezeSet critic_only{true, true, false};
        backward(m, tp, pp, critic_only, cg);
        backward(m, tq, pq, critic_only, cg);
        apply_critic_only(pack_grads(m, cg));
      }
    }

    wd_sum += loss_d;
    wa_sum += loss_a;
    ws_sum += loss_s;
    we_sum += loss_e;
    wt_sum += loss_value;
    ++window;

    // (d) periodic validation, best tracking, early stopping.
    if (n % config.eval_every == 0 || n == config.max_steps) {
      MetricsReport rep = evaluate(m, ds.validation, config.eval_k);
      EvalRow row;
      row.step = n;
      row.loss_d = wd_sum / window;
      row.loss_a = wa_sum / window;
      row.loss_s = ws_sum / window;
      row.loss_e = we_sum / window;
      row.loss_total = wt_sum / window;
      row.val_ndcg = rep.ndcg;
      out.history.push_back(row);
      wd_sum = wa_sum = ws_sum = we_sum = wt_sum = 0;
      window = 0;
      if (rep.ndcg > best) {
        best = rep.ndcg;
        out.best_model = m;
        out.best_step = n;
        stale = 0;
      } else {
        ++stale;
      }
      if (stale >= config.patience) {
        out.stop_reason = StopReason::EarlyStop;
        out.steps_run = n;
        out.best_val_ndcg = best;
        return out;
      }
    }
  }
  out.stop_reason = StopReason::MaxSteps;
  out.steps_run = config.max_steps;
  out.best_val_ndcg = best;
  return out;
}

std::vector<AblationRun> ablate(const Dataset& ds, const TrainConfig& config,
                                const std::vector<std::string>& components,
                                const Rng& rng) {
  for (std::size_t i = 0; i < components.size(); ++i) {
    const std::string& c = components[i];
    if (c != "A" && c != "S" && c != "E")
      throw ConfigError("ablate: unknown component '" + c +
                        "' (expected A, S or E)");
    for (std::size_t j = i + 1; j < components.size(); ++j)
      if (components[j] == c)
        throw ConfigError("ablate: duplicate component '" + c + "'");
  }
  std::vector<AblationRun> runs;
  runs.push_back({"full", train(ds, config, rng)});
  for (const std::string& c : components) {
    TrainConfig cut = config;
    if (c == "A") cut.weights.alpha = 0;
    if (c == "S") cut.weights.beta = 0;
    if (c == "E") cut.weights.gamma = 0;
    runs.push_back({"w/o " + c, train(ds, cut, rng)});
  }
  return runs;
}

}  // namespace astrec
