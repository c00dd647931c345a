// Unit tests for the model backbones: init, forward, dropout, critic,
// backward (against central differences), packing, and checkpoints.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "astrec/errors.hpp"
#include "astrec/finite_diff.hpp"
#include "astrec/model.hpp"
#include "astrec/parallel.hpp"
#include "astrec/rng.hpp"
#include "astrec/scalarfn.hpp"

using namespace astrec;

namespace {

// ||a-b|| / max(||b||, 1e-10): the gradient-exactness metric.
double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double dd = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dd += (a[i] - b[i]) * (a[i] - b[i]);
    nb += b[i] * b[i];
  }
  return std::sqrt(dd) / std::max(std::sqrt(nb), 1e-10);
}

Model small_model(Variant v, std::uint64_t seed, double dropout = 0.0) {
  Model m = init(v, 5, 4, 3, dropout, Rng(seed, 0), 6);
  // Init weights are ~1e-2; rescale to O(1) so gradients are well-sized.
  auto p = pack_params(m);
  Rng r(seed, 1);
  for (double& x : p) x = 0.5 * r.gaussian();
  unpack_params(m, p);
  return m;
}

}  // namespace

TEST_CASE("init: deterministic, shaped, rejects bad dims") {
  Model a = init(Variant::NCF, 10, 8, 4, 0.2, Rng(3, 0));
  Model b = init(Variant::NCF, 10, 8, 4, 0.2, Rng(3, 0));
  CHECK(pack_params(a) == pack_params(b));
  CHECK(a.mlp_w1.size() == 4u * 8u);
  CHECK(a.mlp_w2.size() == 16u);
  Model mf = init(Variant::MF, 10, 8, 8, 0.0, Rng(3, 0));
  auto t = forward(mf, 0, 0);
  CHECK(t.z.size() == 8u);
  CHECK_THROWS_AS(init(Variant::MF, 10, 8, 0, 0.0, Rng(1, 0)), ConfigError);
  CHECK_THROWS_AS(init(Variant::MF, 10, 8, 4, 1.0, Rng(1, 0)), ConfigError);
}

TEST_CASE("init: logits start near zero") {
  for (Variant v : {Variant::MF, Variant::NCF}) {
    Model m = init(v, 200, 100, 8, 0.0, Rng(17, 0));
    Rng pick(17, 1);
    double sum = 0.0;
    for (int t = 0; t < 1000; ++t) {
      int u = static_cast<int>(pick.uniform_int(200));
      int i = static_cast<int>(pick.uniform_int(100));
      sum += forward(m, u, i).logit;
    }
    CHECK(std::abs(sum / 1000.0) < 0.05);
  }
}

TEST_CASE("forward: zero MF embeddings leave only the head bias") {
  Model m = init(Variant::MF, 3, 3, 4, 0.0, Rng(1, 0));
  std::fill(m.user_emb.begin(), m.user_emb.end(), 0.0);
  std::fill(m.item_emb.begin(), m.item_emb.end(), 0.0);
  m.head_b = 0.37;
  m.version++;
  CHECK(forward(m, 1, 2).logit == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("forward: MF is the masked product run through the head") {
  Model m = init(Variant::MF, 2, 2, 4, 0.0, Rng(1, 0));
  for (int d = 0; d < 4; ++d) {
    m.user_emb[d] = 1.0;
    m.item_emb[d] = 0.25 * (d + 1);  // z sums to 2.5
    m.head_w[d] = 1.0;
  }
  m.head_b = 0.0;
  m.version++;
  CHECK(forward(m, 0, 0).logit == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("forward: Eval is deterministic and consumes no randomness") {
  Model m = init(Variant::NCF, 6, 6, 4, 0.5, Rng(9, 0));
  Rng r(4, 2);
  Rng before = r;
  auto t1 = forward(m, 2, 3, Mode::Eval, r);
  CHECK(r.state == before.state);
  auto t2 = forward(m, 2, 3);
  CHECK(t1.logit == t2.logit);
  CHECK(t1.mask_z.empty());
}

TEST_CASE("forward: inverted dropout is unbiased over mask draws") {
  Model m = small_model(Variant::NCF, 11, 0.4);
  auto ref = forward(m, 1, 2);
  Rng r(11, 5);
  std::vector<double> acc(m.k, 0.0);
  double logit_acc = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    auto t = forward(m, 1, 2, Mode::Train, r);
    logit_acc += t.logit;
    for (int d = 0; d < m.k; ++d) acc[d] += t.z[d];
  }
  // Dropout through tanh is not exactly unbiased in z (tanh is nonlinear in
  // h1), but the final masked stage must be: E[z] == E[z_clean] over masks,
  // and for MF z_clean is mask-free so E[z] == z_eval exactly.
  Model mf = small_model(Variant::MF, 12, 0.4);
  auto mf_ref = forward(mf, 1, 2);
  Rng r2(12, 5);
  std::vector<double> acc2(mf.k, 0.0);
  for (int s = 0; s < n; ++s) {
    auto t = forward(mf, 1, 2, Mode::Train, r2);
    for (int d = 0; d < mf.k; ++d) acc2[d] += t.z[d];
  }
  for (int d = 0; d < mf.k; ++d)
    CHECK(acc2[d] / n == doctest::Approx(mf_ref.z[d]).epsilon(0.12));
  CHECK(logit_acc / n == doctest::Approx(ref.logit).scale(1.0).epsilon(0.15));
  for (int d = 0; d < m.k; ++d)
    CHECK(std::abs(acc[d] / n - ref.z[d]) < 0.05);
}

TEST_CASE("critic: zero weights score zero, init scores stay finite") {
  Critic c;
  c.init(4, 6, Rng(2, 0));
  Critic zero = c;
  std::fill(zero.w1.begin(), zero.w1.end(), 0.0);
  std::fill(zero.b1.begin(), zero.b1.end(), 0.0);
  std::fill(zero.w2.begin(), zero.w2.end(), 0.0);
  zero.b2 = 0.0;
  for (double s : {-3.0, 0.0, 7.5}) {
    std::vector<double> z(4, s);
    CHECK(zero.forward(z.data()) == 0.0);
  }
  std::vector<double> big(4, 500.0);  // ||z|| = 1000
  CHECK(std::isfinite(c.forward(big.data())));
}

TEST_CASE("critic: weight and input gradients match central differences") {
  Critic c;
  c.init(3, 5, Rng(6, 0));
  std::vector<double> x = {0.4, -1.1, 0.7};
  // Flatten critic params for the oracle.
  auto flatten = [](const Critic& cr) {
    std::vector<double> p = cr.w1;
    p.insert(p.end(), cr.b1.begin(), cr.b1.end());
    p.insert(p.end(), cr.w2.begin(), cr.w2.end());
    p.push_back(cr.b2);
    return p;
  };
  auto rebuild = [&](const std::vector<double>& p) {
    Critic cr = c;
    std::size_t pos = 0;
    std::copy(p.begin() + pos, p.begin() + pos + cr.w1.size(), cr.w1.begin());
    pos += cr.w1.size();
    std::copy(p.begin() + pos, p.begin() + pos + cr.b1.size(), cr.b1.begin());
    pos += cr.b1.size();
    std::copy(p.begin() + pos, p.begin() + pos + cr.w2.size(), cr.w2.begin());
    pos += cr.w2.size();
    cr.b2 = p[pos];
    return cr;
  };
  auto loss = [&](const std::vector<double>& p) {
    return rebuild(p).forward(x.data());
  };
  auto fd = finite_diff_grad(loss, flatten(c));
  std::vector<double> h1;
  c.forward(x.data(), h1);
  CriticGrads g;
  g.resize(c);
  std::vector<double> dx(3, 0.0);
  critic_backward(c, x.data(), h1, 1.0, &g, dx.data());
  CriticGrads gc = g;
  std::vector<double> analytic = gc.w1;
  analytic.insert(analytic.end(), gc.b1.begin(), gc.b1.end());
  analytic.insert(analytic.end(), gc.w2.begin(), gc.w2.end());
  analytic.push_back(gc.b2);
  CHECK(rel_err(analytic, fd) < 1e-4);
  // Input gradient against the same oracle.
  auto loss_x = [&](const std::vector<double>& xx) { return c.forward(xx.data()); };
  auto fdx = finite_diff_grad(loss_x, x);
  CHECK(rel_err(dx, fdx) < 1e-4);
}

TEST_CASE("backward: freezing everything yields an all-zero accumulator") {
  Model m = small_model(Variant::NCF, 21);
  auto t = forward(m, 1, 2);
  critic_forward(m, t);
  TraceGrad tg;
  tg.dlogit = 1.0;
  tg.dz.assign(m.k, 0.5);
  tg.dscore = 2.0;
  Grads g;
  g.resize(m);
  backward(m, {t}, {tg}, {true, true, true}, g);
  for (double v : pack_grads(m, g)) CHECK(v == 0.0);
}

TEST_CASE("backward: per-component freeze zeroes exactly that block") {
  Model m = small_model(Variant::MF, 22);
  auto t = forward(m, 2, 1);
  critic_forward(m, t);
  TraceGrad tg;
  tg.dlogit = 0.7;
  tg.dscore = 0.3;
  Grads g;
  g.resize(m);
  backward(m, {t}, {tg}, {false, true, false}, g);  // psi frozen
  CHECK(g.head_b == 0.0);
  for (double v : g.head_w) CHECK(v == 0.0);
  REQUIRE(!g.user_rows.empty());  // phi still learns through psi's weights
  double mag = 0.0;
  for (double v : g.user_rows[0].second) mag += std::abs(v);
  CHECK(mag > 0.0);
  Grads g2;
  g2.resize(m);
  backward(m, {t}, {tg}, {true, false, false}, g2);  // phi frozen
  CHECK(g2.user_rows.empty());
  CHECK(g2.item_rows.empty());
  CHECK(std::abs(g2.head_b) > 0.0);
  Grads g3;
  g3.resize(m);
  backward(m, {t}, {tg}, {false, false, true}, g3);  // theta frozen
  for (double v : g3.critic.w1) CHECK(v == 0.0);
  CHECK(g3.critic.b2 == 0.0);
}

TEST_CASE("backward: log-loss gradients match central differences") {
  for (Variant v : {Variant::MF, Variant::NCF}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Model m = small_model(v, seed * 31);
      const int user = 1 + static_cast<int>(seed % 3);
      const int item = static_cast<int>(seed % 4);
      const double label = seed % 2 ? 1.0 : 0.0;
      auto base = pack_params(m);
      auto loss = [&](const std::vector<double>& p) {
        Model c = m;
        unpack_params(c, p);
        return log_loss(label, forward(c, user, item).logit);
      };
      auto fd = finite_diff_grad(loss, base);
      auto t = forward(m, user, item);
      TraceGrad tg;
      tg.dlogit = sigmoid(t.logit) - label;
      Grads g;
      g.resize(m);
      backward(m, {t}, {tg}, {}, g);
      CHECK(rel_err(pack_grads(m, g), fd) < 1e-4);
    }
  }
}

TEST_CASE("backward: critic-score channel reaches phi and theta exactly") {
  for (Variant v : {Variant::MF, Variant::NCF}) {
    Model m = small_model(v, 77);
    const int user = 3, item = 2;
    auto loss = [&](const std::vector<double>& p) {
      Model c = m;
      unpack_params(c, p);
      auto t = forward(c, user, item);
      return c.critic.forward(t.z_clean.data());
    };
    auto fd = finite_diff_grad(loss, pack_params(m));
    auto t = forward(m, user, item);
    critic_forward(m, t);
    TraceGrad tg;
    tg.dscore = 1.0;
    Grads g;
    g.resize(m);
    backward(m, {t}, {tg}, {}, g);
    CHECK(rel_err(pack_grads(m, g), fd) < 1e-4);
  }
}

TEST_CASE("backward: dropout-mode gradients match a fixed-mask oracle") {
  Model m = small_model(Variant::NCF, 55, 0.3);
  const int user = 0, item = 3;
  // Re-seeding makes every finite-difference evaluation draw the same masks.
  auto loss = [&](const std::vector<double>& p) {
    Model c = m;
    unpack_params(c, p);
    Rng r(123, 7);
    return log_loss(1.0, forward(c, user, item, Mode::Train, r).logit);
  };
  auto fd = finite_diff_grad(loss, pack_params(m));
  Rng r(123, 7);
  auto t = forward(m, user, item, Mode::Train, r);
  TraceGrad tg;
  tg.dlogit = sigmoid(t.logit) - 1.0;
  Grads g;
  g.resize(m);
  backward(m, {t}, {tg}, {}, g);
  CHECK(rel_err(pack_grads(m, g), fd) < 1e-4);
}

TEST_CASE("backward: batch gradient is the scaled sum of per-example ones") {
  Model m = small_model(Variant::NCF, 88);
  auto t1 = forward(m, 0, 1);
  auto t2 = forward(m, 4, 2);
  TraceGrad a, b;
  a.dlogit = 0.8;
  b.dlogit = -1.3;
  Grads g1;
  g1.resize(m);
  backward(m, {t1}, {a}, {}, g1);
  Grads g2;
  g2.resize(m);
  backward(m, {t2}, {b}, {}, g2);
  TraceGrad ah = a, bh = b;
  ah.dlogit *= 0.5;
  bh.dlogit *= 0.5;
  Grads gb;
  gb.resize(m);
  backward(m, {t1, t2}, {ah, bh}, {}, gb);
  auto f1 = pack_grads(m, g1), f2 = pack_grads(m, g2), fb = pack_grads(m, gb);
  for (std::size_t i = 0; i < fb.size(); ++i)
    CHECK(fb[i] == doctest::Approx(0.5 * (f1[i] + f2[i])).epsilon(1e-12));
}

TEST_CASE("backward: serial and parallel accumulation agree bit-for-bit") {
  Model m = small_model(Variant::NCF, 99);
  std::vector<ForwardTrace> traces;
  std::vector<TraceGrad> tgrads;
  Rng r(99, 3);
  for (int i = 0; i < 500; ++i) {
    auto t = forward(m, static_cast<int>(r.uniform_int(5)),
                     static_cast<int>(r.uniform_int(4)));
    critic_forward(m, t);
    TraceGrad tg;
    tg.dlogit = r.gaussian();
    tg.dscore = r.gaussian();
    traces.push_back(std::move(t));
    tgrads.push_back(tg);
  }
  set_parallel(false);
  Grads gs;
  gs.resize(m);
  backward(m, traces, tgrads, {}, gs);
  set_parallel(true);
  Grads gp;
  gp.resize(m);
  backward(m, traces, tgrads, {}, gp);
  CHECK(pack_grads(m, gs) == pack_grads(m, gp));
}

TEST_CASE("backward: stale traces are rejected") {
  Model m = small_model(Variant::MF, 13);
  auto t = forward(m, 0, 0);
  auto p = pack_params(m);
  p[0] += 1.0;
  unpack_params(m, p);  // bumps version
  Grads g;
  g.resize(m);
  CHECK_THROWS_AS(backward(m, {t}, {TraceGrad{}}, {}, g), TrainingError);
}

TEST_CASE("eval_logit agrees with the traced forward") {
  for (Variant v : {Variant::MF, Variant::NCF}) {
    Model m = small_model(v, 61);
    EvalScratch s;
    Rng r(61, 2);
    for (int t = 0; t < 50; ++t) {
      int u = static_cast<int>(r.uniform_int(5));
      int i = static_cast<int>(r.uniform_int(4));
      CHECK(eval_logit(m, u, i, s) == doctest::Approx(forward(m, u, i).logit).epsilon(1e-15));
    }
  }
}

TEST_CASE("checkpoint: round-trips parameters and logits bit-exactly") {
  for (Variant v : {Variant::MF, Variant::NCF}) {
    Model m = small_model(v, 29, 0.2);
    CheckpointMeta meta;
    meta.seed = 4242;
    meta.optimizer = "adam";
    const std::string path = "/tmp/astrec_test_ckpt.txt";
    save_checkpoint(path, m, meta);
    CheckpointMeta back;
    Model r = load_checkpoint(path, &back);
    CHECK(back.seed == 4242);
    CHECK(back.optimizer == "adam");
    CHECK(back.gaussian == "box-muller-cosine");
    CHECK(r.dropout_rate == m.dropout_rate);
    CHECK(pack_params(r) == pack_params(m));
    CHECK(forward(r, 1, 2).logit == forward(m, 1, 2).logit);
    std::remove(path.c_str());
  }
}

TEST_CASE("checkpoint: rejects foreign files") {
  const std::string path = "/tmp/astrec_test_badckpt.txt";
  {
    std::ofstream out(path);
    out << "NOTACKPT v9\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("/tmp/astrec_missing_ckpt"), DataError);
}
