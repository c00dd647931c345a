#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/errors.hpp"
#include "astrec/losses.hpp"
#include "astrec/metrics.hpp"
#include "astrec/model.hpp"
#include "astrec/optim.hpp"
#include "astrec/synth.hpp"
#include "astrec/trainer.hpp"

using namespace astrec;

namespace {

// Small confounded world wired into a Dataset the trainer accepts.
Dataset tiny_dataset(std::uint64_t seed = 11) {
  SynthConfig sc;
  sc.n_users = 30;
  sc.n_items = 20;
  sc.k = 4;
  sc.lambda_conf = 0.5;
  sc.target_density = 0.2;
  sc.seed = seed;
  Rng wr(seed, 0);
  SynthWorld w = build_world(sc, wr);
  Dataset ds;
  ds.n_users = sc.n_users;
  ds.n_items = sc.n_items;
  ds.biased_train = sample_logged(w, Rng(seed, 1));
  std::vector<Interaction> uni = dedupe_pairs(sample_uniform(w, 600, Rng(seed, 2)));
  Rng sr(seed, 3);
  UniformSplit us = split_uniform(uni, 0.3, 0.3, 0.4, sr);
  ds.uniform_train = us.train;
  ds.validation = us.validation;
  ds.test = us.test;
  return ds;
}

// Short, cheap run; individual cases override what they probe.
TrainConfig tiny_config(Objective obj) {
  TrainConfig c;
  c.objective = obj;
  c.k = 4;
  c.lr = 0.01;
  c.batch_size_d = 32;
  c.batch_size_q = 32;
  c.max_steps = 40;
  c.eval_every = 10;
  c.patience = 50;
  c.teacher_refresh = 10;
  c.eval_k = 3;
  c.critic_hidden = 8;
  return c;
}

bool same_history(const std::vector<EvalRow>& a, const std::vector<EvalRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].loss_d != b[i].loss_d ||
        a[i].loss_a != b[i].loss_a || a[i].loss_s != b[i].loss_s ||
        a[i].loss_e != b[i].loss_e || a[i].loss_total != b[i].loss_total ||
        a[i].val_ndcg != b[i].val_ndcg)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("objective and stop-reason names round-trip") {
  for (Objective o : {Objective::Biased, Objective::IPS, Objective::MultiTask,
                      Objective::AST})
    CHECK(objective_from_string(objective_name(o)) == o);
  CHECK_THROWS_AS(objective_from_string("dr"), ConfigError);
  CHECK(std::string(stop_reason_name(StopReason::MaxSteps)) == "max_steps");
  CHECK(std::string(stop_reason_name(StopReason::EarlyStop)) == "early_stop");
}

TEST_CASE("validate_train_config rejects out-of-range fields") {
  TrainConfig ok = tiny_config(Objective::Biased);
  CHECK_NOTHROW(validate_train_config(ok));
  ok.lr = 0.0;  // explicitly allowed: freezes the model
  CHECK_NOTHROW(validate_train_config(ok));

  auto reject = [&](auto&& tweak) {
    TrainConfig c = tiny_config(Objective::AST);
    tweak(c);
    CHECK_THROWS_AS(validate_train_config(c), ConfigError);
  };
  reject([](TrainConfig& c) { c.max_steps = 0; });
  reject([](TrainConfig& c) { c.batch_size_d = 0; });
  reject([](TrainConfig& c) { c.batch_size_q = 0; });
  reject([](TrainConfig& c) { c.patience = 0; });
  reject([](TrainConfig& c) { c.lr = -0.1; });
  reject([](TrainConfig& c) { c.weight_decay = -1e-9; });
  reject([](TrainConfig& c) { c.critic_steps = 0; });
  reject([](TrainConfig& c) { c.eval_every = 0; });
  reject([](TrainConfig& c) { c.teacher_refresh = 0; });
  reject([](TrainConfig& c) { c.k = 0; });
  reject([](TrainConfig& c) { c.dropout_rate = 1.0; });
  reject([](TrainConfig& c) { c.dropout_rate = -0.1; });
  reject([](TrainConfig& c) { c.neg_ratio = 0; });
  reject([](TrainConfig& c) { c.eval_k = 0; });
  reject([](TrainConfig& c) { c.critic_hidden = 0; });
  reject([](TrainConfig& c) { c.weights.alpha = -0.5; });
}

TEST_CASE("train rejects inconsistent datasets") {
  Dataset ds = tiny_dataset();
  Rng r(1, 0);

  Dataset no_val = ds;
  no_val.validation.clear();
  CHECK_THROWS_AS(train(no_val, tiny_config(Objective::Biased), r), ConfigError);

  Dataset no_pool = ds;
  no_pool.biased_train.clear();
  CHECK_THROWS_AS(train(no_pool, tiny_config(Objective::Biased), r), ConfigError);

  // Multi-task needs labeled uniform data once it mixes or regularizes.
  Dataset no_uni = ds;
  no_uni.uniform_train.clear();
  TrainConfig mt = tiny_config(Objective::MultiTask);
  mt.weights.rho = 0.7;
  CHECK_THROWS_AS(train(no_uni, mt, r), ConfigError);
  mt.weights.rho = 1.0;
  mt.weights.alpha = 0.2;
  CHECK_THROWS_AS(train(no_uni, mt, r), ConfigError);

  // Implicit feedback with nothing but negatives leaves an empty pool.
  Dataset all_neg = ds;
  for (Interaction& it : all_neg.biased_train) it.label = 0;
  TrainConfig imp = tiny_config(Objective::Biased);
  imp.implicit_negatives = true;
  CHECK_THROWS_AS(train(all_neg, imp, r), ConfigError);
}

TEST_CASE("one step at lr zero leaves the model at its initialization") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::Biased);
  c.lr = 0.0;
  c.max_steps = 1;
  c.eval_every = 1;
  Rng r(42, 9);
  TrainResult res = train(ds, c, r);

  Model fresh = init(c.variant, ds.n_users, ds.n_items, c.k, c.dropout_rate,
                     r.substream(0), c.critic_hidden);
  CHECK(pack_params(res.best_model) == pack_params(fresh));
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].step == 1);
  CHECK(res.history[0].val_ndcg ==
        evaluate(fresh, ds.validation, c.eval_k).ndcg);
  CHECK(res.best_step == 1);
  CHECK(res.steps_run == 1);
  CHECK(res.stop_reason == StopReason::MaxSteps);
}

TEST_CASE("ast with zero weights reproduces the biased trajectory bitwise") {
  // The trajectories share a sampling order only when the training pools
  // match, i.e. when there is no uniform training data to fold into D.
  Dataset ds = tiny_dataset();
  ds.uniform_train.clear();

  TrainConfig biased = tiny_config(Objective::Biased);
  biased.max_steps = 60;
  TrainConfig ast = biased;
  ast.objective = Objective::AST;
  ast.weights = LossWeights{};  // alpha = beta = gamma = 0

  TrainResult rb = train(ds, biased, Rng(7, 0));
  TrainResult ra = train(ds, ast, Rng(7, 0));
  CHECK(same_history(rb.history, ra.history));
  CHECK(pack_params(rb.best_model) == pack_params(ra.best_model));
  CHECK(rb.best_step == ra.best_step);
}

TEST_CASE("ips with unit propensities matches biased bitwise") {
  Dataset ds = tiny_dataset();
  TrainConfig biased = tiny_config(Objective::Biased);
  TrainConfig ips = tiny_config(Objective::IPS);

  PropensityTable unit;
  unit.p.assign(static_cast<std::size_t>(ds.n_items), 1.0);
  unit.tau = 1.0;
  unit.floor = 1.0;

  TrainResult rb = train(ds, biased, Rng(3, 1));
  TrainResult ri = train(ds, ips, Rng(3, 1), &unit);
  CHECK(same_history(rb.history, ri.history));
  CHECK(pack_params(rb.best_model) == pack_params(ri.best_model));

  // With estimated propensities the reweighting must actually bite.
  TrainResult rw = train(ds, ips, Rng(3, 1));
  CHECK_FALSE(same_history(rb.history, rw.history));
}

TEST_CASE("seed determinism and seed sensitivity") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::AST);
  c.weights = {0.4, 0.4, 0.2};

  TrainResult a = train(ds, c, Rng(21, 5));
  TrainResult b = train(ds, c, Rng(21, 5));
  CHECK(same_history(a.history, b.history));
  CHECK(pack_params(a.best_model) == pack_params(b.best_model));

  TrainResult other = train(ds, c, Rng(22, 5));
  CHECK_FALSE(same_history(a.history, other.history));
}

TEST_CASE("history lands on the eval grid and tracks the best row") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::Biased);
  c.max_steps = 100;
  c.eval_every = 30;
  TrainResult res = train(ds, c, Rng(9, 2));

  REQUIRE(res.history.size() == 4);
  const long long want[] = {30, 60, 90, 100};
  for (int i = 0; i < 4; ++i) CHECK(res.history[i].step == want[i]);
  for (std::size_t i = 1; i < res.history.size(); ++i)
    CHECK(res.history[i].step > res.history[i - 1].step);

  double best = -1.0;
  long long best_step = 0;
  for (const EvalRow& row : res.history)
    if (row.val_ndcg > best) {
      best = row.val_ndcg;
      best_step = row.step;
    }
  CHECK(res.best_val_ndcg == best);
  CHECK(res.best_step == best_step);
  CHECK(res.stop_reason == StopReason::MaxSteps);
  CHECK(res.steps_run == 100);
}

TEST_CASE("early stopping fires after patience stale evals") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::Biased);
  c.lr = 0.0;  // frozen model: the metric never improves after eval one
  c.max_steps = 1000;
  c.eval_every = 5;
  c.patience = 3;
  TrainResult res = train(ds, c, Rng(13, 4));

  CHECK(res.stop_reason == StopReason::EarlyStop);
  CHECK(res.steps_run == 20);  // improve at 5, stale at 10/15/20
  REQUIRE(res.history.size() == 4);
  CHECK(res.best_step == 5);
  for (const EvalRow& row : res.history)
    CHECK(row.val_ndcg == res.history[0].val_ndcg);
}

TEST_CASE("critic-only ascent on fixed batches is monotone") {
  // Smoke test of the max step: features frozen, critic climbing the dual.
  // Default init is 0.01-scale, which leaves nothing to distinguish, so the
  // fixture plants a unit-scale mean shift between two user blocks.
  Model m = init(Variant::MF, 30, 20, 4, 0.0, Rng(3, 0), 8);
  Rng er(31, 7);
  for (double& x : m.user_emb) x = er.gaussian();
  for (std::size_t j = 15u * 4; j < m.user_emb.size(); ++j)
    m.user_emb[j] += 1.5;
  for (double& x : m.item_emb) x = 0.8 + 0.3 * er.gaussian();
  std::vector<std::pair<int, int>> pairs_p, pairs_q;
  Rng pr(8, 1);
  for (int s = 0; s < 200; ++s) {
    pairs_p.push_back({static_cast<int>(pr.uniform_int(15)),
                       static_cast<int>(pr.uniform_int(20))});
    pairs_q.push_back({15 + static_cast<int>(pr.uniform_int(15)),
                       static_cast<int>(pr.uniform_int(20))});
  }
  auto rows_of = [&](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::vector<double>> rows;
    for (const ForwardTrace& tr : forward_batch(m, pairs, Mode::Eval, Rng(0, 0)))
      rows.push_back(tr.z_clean);
    return rows;
  };
  std::vector<std::vector<double>> zp = rows_of(pairs_p), zq = rows_of(pairs_q);

  CriticAdam st;
  OptHyper hp;
  hp.lr = 0.005;
  std::vector<double> vals;
  for (int t = 0; t < 500; ++t) {
    CriticGrads g;
    g.resize(m.critic);
    vals.push_back(adversarial_value(m.critic, zp, zq, &g));
    critic_adam_ascend(m.critic, g, st, hp);
  }
  vals.push_back(adversarial_value(m.critic, zp, zq, nullptr));

  CHECK(vals.back() > vals.front() + 0.01);
  for (std::size_t t = 1; t < vals.size(); ++t)
    CHECK(vals[t] >= vals[t - 1] - 1e-3);  // Adam wobble allowance
}

TEST_CASE("teacher parameters never receive gradient") {
  Model student = init(Variant::MF, 20, 15, 3, 0.0, Rng(5, 0), 8);
  Model teacher = student;
  const std::vector<double> before = pack_params(teacher);

  std::vector<Interaction> batch_d;
  Rng br(6, 0);
  for (int s = 0; s < 48; ++s) {
    Interaction it;
    it.user = static_cast<int>(br.uniform_int(20));
    it.item = static_cast<int>(br.uniform_int(15));
    it.label = static_cast<int>(br.uniform_int(2));
    batch_d.push_back(it);
  }
  std::vector<std::pair<int, int>> batch_q;
  for (int s = 0; s < 48; ++s)
    batch_q.push_back({static_cast<int>(br.uniform_int(20)),
                       static_cast<int>(br.uniform_int(15))});

  LossWeights w{0.5, 0.5, 0.3};
  AdamState st;
  OptHyper hp;
  hp.lr = 0.01;
  for (int t = 0; t < 20; ++t) {
    TotalLoss tl =
        loss_total(student, &teacher, batch_d, batch_q, w, Mode::Train,
                   Rng(100 + static_cast<std::uint64_t>(t), 2));
    std::vector<double> p = pack_params(student);
    adam_step(p, pack_grads(student, tl.grads), st, hp);
    unpack_params(student, p);
  }
  CHECK(pack_params(teacher) == before);
}

TEST_CASE("ast smoke run exercises every component") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::AST);
  c.weights = {0.6, 0.4, 0.4};
  c.max_steps = 120;
  c.eval_every = 40;
  c.critic_steps = 2;  // exercise the inner ascent loop

  TrainResult res = train(ds, c, Rng(17, 3));
  REQUIRE(res.history.size() == 3);
  bool adversarial_moved = false;
  for (const EvalRow& row : res.history) {
    CHECK(std::isfinite(row.loss_d));
    CHECK(std::isfinite(row.loss_a));
    CHECK(row.loss_s >= 0.0);
    CHECK(row.loss_e >= 0.0);
    CHECK(row.loss_e <= std::log(2.0) + 1e-12);
    CHECK(std::isfinite(row.loss_total));
    CHECK(row.val_ndcg >= 0.0);
    CHECK(row.val_ndcg <= 1.0);
    if (row.loss_a != 0.0) adversarial_moved = true;
  }
  CHECK(adversarial_moved);
  double best = -1.0;
  for (const EvalRow& row : res.history) best = std::max(best, row.val_ndcg);
  CHECK(res.best_val_ndcg == best);
}

TEST_CASE("multitask and implicit-negative modes run end to end") {
  Dataset ds = tiny_dataset();

  TrainConfig mt = tiny_config(Objective::MultiTask);
  mt.weights.rho = 0.7;
  mt.weights.alpha = 0.3;
  TrainResult rm = train(ds, mt, Rng(19, 0));
  CHECK(rm.history.size() == 4);
  for (const EvalRow& row : rm.history) CHECK(std::isfinite(row.loss_total));

  TrainConfig imp = tiny_config(Objective::Biased);
  imp.implicit_negatives = true;
  imp.neg_ratio = 3;
  TrainResult ri = train(ds, imp, Rng(19, 1));
  CHECK(ri.history.size() == 4);
  TrainResult ri2 = train(ds, imp, Rng(19, 1));
  CHECK(same_history(ri.history, ri2.history));
}

TEST_CASE("divergence raises a training error naming step and component") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::Biased);
  c.lr = 1e15;
  c.max_steps = 100;
  try {
    train(ds, c, Rng(23, 0));
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("diverged at step") != std::string::npos);
    CHECK(msg.find("loss_") != std::string::npos);
  }
}

TEST_CASE("ablate runs full plus one run per component") {
  Dataset ds = tiny_dataset();
  TrainConfig c = tiny_config(Objective::AST);
  c.weights = {0.6, 0.4, 0.4};
  c.max_steps = 30;

  std::vector<AblationRun> runs = ablate(ds, c, {"A", "S", "E"}, Rng(29, 0));
  REQUIRE(runs.size() == 4);
  CHECK(runs[0].name == "full");
  CHECK(runs[1].name == "w/o A");
  CHECK(runs[2].name == "w/o S");
  CHECK(runs[3].name == "w/o E");

  // Each ablation is exactly train() with that one weight zeroed.
  TrainConfig no_a = c;
  no_a.weights.alpha = 0;
  TrainResult direct = train(ds, no_a, Rng(29, 0));
  CHECK(same_history(runs[1].result.history, direct.history));
  CHECK(pack_params(runs[1].result.best_model) ==
        pack_params(direct.best_model));

  CHECK(ablate(ds, c, {}, Rng(29, 0)).size() == 1);
  CHECK_THROWS_AS(ablate(ds, c, {"A", "A"}, Rng(29, 0)), ConfigError);
  CHECK_THROWS_AS(ablate(ds, c, {"X"}, Rng(29, 0)), ConfigError);
}
