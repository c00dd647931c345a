#include "astrec/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "astrec/errors.hpp"
#include "astrec/parallel.hpp"

namespace astrec {

namespace {

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

void fill_uniform(std::vector<double>& v, double bound, Rng rng) {
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
}

void fill_gaussian(std::vector<double>& v, double std_dev, Rng rng) {
  for (double& x : v) x = std_dev * rng.gaussian();
}

void add_vec(std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale_vec(std::vector<double>& a, double s) {
  for (double& x : a) x *= s;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "MF" || s == "mf") return Variant::MF;
  if (s == "NCF" || s == "ncf") return Variant::NCF;
  throw ConfigError("unknown model variant: " + s);
}

std::string to_string(Variant v) { return v == Variant::MF ? "MF" : "NCF"; }

void Critic::init(int in, int hid, Rng rng) {
  if (in <= 0 || hid <= 0) throw ConfigError("critic dims must be positive");
  in_dim = in;
  hidden = hid;
  w1.assign(static_cast<std::size_t>(hid) * in, 0.0);
  b1.assign(hid, 0.0);
  w2.assign(hid, 0.0);
  b2 = 0.0;
  fill_uniform(w1, glorot_bound(in, hid), rng.substream(0));
  fill_uniform(w2, glorot_bound(hid, 1), rng.substream(1));
}

double Critic::forward(const double* x, std::vector<double>& h1_out) const {
  h1_out.resize(hidden);
  double score = b2;
  for (int j = 0; j < hidden; ++j) {
    double a = b1[j];
    const double* row = w1.data() + static_cast<std::size_t>(j) * in_dim;
    for (int i = 0; i < in_dim; ++i) a += row[i] * x[i];
    h1_out[j] = std::tanh(a);
    score += w2[j] * h1_out[j];
  }
  return score;
}

double Critic::forward(const double* x) const {
  std::vector<double> h1;
  return forward(x, h1);
}

void CriticGrads::resize(const Critic& c) {
  w1.assign(c.w1.size(), 0.0);
  b1.assign(c.b1.size(), 0.0);
  w2.assign(c.w2.size(), 0.0);
  b2 = 0.0;
}

void CriticGrads::add(const CriticGrads& o) {
  add_vec(w1, o.w1);
  add_vec(b1, o.b1);
  add_vec(w2, o.w2);
  b2 += o.b2;
}

void CriticGrads::scale(double s) {
  scale_vec(w1, s);
  scale_vec(b1, s);
  scale_vec(w2, s);
  b2 *= s;
}

void critic_backward(const Critic& c, const double* x,
                     const std::vector<double>& h1, double dscore,
                     CriticGrads* g, double* dx) {
  if (g) g->b2 += dscore;
  for (int j = 0; j < c.hidden; ++j) {
    const double da = dscore * c.w2[j] * (1.0 - h1[j] * h1[j]);
    const double* row = c.w1.data() + static_cast<std::size_t>(j) * c.in_dim;
    if (g) {
      g->w2[j] += dscore * h1[j];
      g->b1[j] += da;
      double* grow = g->w1.data() + static_cast<std::size_t>(j) * c.in_dim;
      for (int i = 0; i < c.in_dim; ++i) grow[i] += da * x[i];
    }
    if (dx) {
      for (int i = 0; i < c.in_dim; ++i) dx[i] += da * row[i];
    }
  }
}

Model init(Variant variant, int n_users, int n_items, int k,
           double dropout_rate, Rng rng, int critic_hidden) {
  if (k <= 0) throw ConfigError("k must be positive");
  if (n_users <= 0 || n_items <= 0) throw ConfigError("init: empty id space");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0,1)");
  Model m;
  m.variant = variant;
  m.n_users = n_users;
  m.n_items = n_items;
  m.k = k;
  m.dropout_rate = dropout_rate;
  m.user_emb.resize(static_cast<std::size_t>(n_users) * k);
  m.item_emb.resize(static_cast<std::size_t>(n_items) * k);
  fill_gaussian(m.user_emb, 0.01, rng.substream(0));
  fill_gaussian(m.item_emb, 0.01, rng.substream(1));
  if (variant == Variant::NCF) {
    m.mlp_w1.resize(static_cast<std::size_t>(k) * 2 * k);
    m.mlp_b1.assign(k, 0.0);
    m.mlp_w2.resize(static_cast<std::size_t>(k) * k);
    m.mlp_b2.assign(k, 0.0);
    fill_uniform(m.mlp_w1, glorot_bound(2 * k, k), rng.substream(2));
    fill_uniform(m.mlp_w2, glorot_bound(k, k), rng.substream(3));
  }
  m.head_w.resize(k);
  fill_uniform(m.head_w, glorot_bound(k, 1), rng.substream(4));
  m.head_b = 0.0;
  m.critic.init(k, critic_hidden, rng.substream(5));
  return m;
}

ForwardTrace forward(const Model& m, int user, int item, Mode mode, Rng& rng) {
  ForwardTrace t;
  t.user = user;
  t.item = item;
  t.model_version = m.version;
  const int k = m.k;
  const double* u = m.user_emb.data() + static_cast<std::size_t>(user) * k;
  const double* v = m.item_emb.data() + static_cast<std::size_t>(item) * k;
  const bool drop = mode == Mode::Train && m.dropout_rate > 0.0;
  const double keep = 1.0 - m.dropout_rate;

  if (m.variant == Variant::MF) {
    t.z_clean.resize(k);
    for (int d = 0; d < k; ++d) t.z_clean[d] = u[d] * v[d];
  } else {
    t.t1.resize(k);
    for (int j = 0; j < k; ++j) {
      double a = m.mlp_b1[j];
      const double* row = m.mlp_w1.data() + static_cast<std::size_t>(j) * 2 * k;
      for (int d = 0; d < k; ++d) a += row[d] * u[d] + row[k + d] * v[d];
      t.t1[j] = std::tanh(a);
    }
    t.h1 = t.t1;
    if (drop) {
      t.mask_h1.resize(k);
      for (int j = 0; j < k; ++j) {
        t.mask_h1[j] = rng.uniform() < m.dropout_rate ? 0.0 : 1.0 / keep;
        t.h1[j] *= t.mask_h1[j];
      }
    }
    t.z_clean.resize(k);
    for (int j = 0; j < k; ++j) {
      double a = m.mlp_b2[j];
      const double* row = m.mlp_w2.data() + static_cast<std::size_t>(j) * k;
      for (int d = 0; d < k; ++d) a += row[d] * t.h1[d];
      t.z_clean[j] = std::tanh(a);
    }
  }

  t.z = t.z_clean;
  if (drop) {
    t.mask_z.resize(k);
    for (int d = 0; d < k; ++d) {
      t.mask_z[d] = rng.uniform() < m.dropout_rate ? 0.0 : 1.0 / keep;
      t.z[d] *= t.mask_z[d];
    }
  }
  t.logit = m.head_b;
  for (int d = 0; d < k; ++d) t.logit += m.head_w[d] * t.z[d];
  return t;
}

ForwardTrace forward(const Model& m, int user, int item) {
  Rng none(0, 0);
  return forward(m, user, item, Mode::Eval, none);
}

std::vector<ForwardTrace> forward_batch(const Model& m,
                                        const std::vector<std::pair<int, int>>& pairs,
                                        Mode mode, const Rng& rng) {
  std::vector<ForwardTrace> traces(pairs.size());
  for_chunks(pairs.size(), [&](int, std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      Rng r = rng.substream(j);
      traces[j] = forward(m, pairs[j].first, pairs[j].second, mode, r);
    }
  });
  return traces;
}

double eval_logit(const Model& m, int user, int item, EvalScratch& s) {
  const int k = m.k;
  const double* u = m.user_emb.data() + static_cast<std::size_t>(user) * k;
  const double* v = m.item_emb.data() + static_cast<std::size_t>(item) * k;
  if (m.variant == Variant::MF) {
    double logit = m.head_b;
    // Grouped as in forward() so both paths agree bitwise.
    for (int d = 0; d < k; ++d) logit += m.head_w[d] * (u[d] * v[d]);
    return logit;
  }
  s.a.resize(k);
  s.b.resize(k);
  for (int j = 0; j < k; ++j) {
    double a = m.mlp_b1[j];
    const double* row = m.mlp_w1.data() + static_cast<std::size_t>(j) * 2 * k;
    for (int d = 0; d < k; ++d) a += row[d] * u[d] + row[k + d] * v[d];
    s.a[j] = std::tanh(a);
  }
  double logit = m.head_b;
  for (int j = 0; j < k; ++j) {
    double a = m.mlp_b2[j];
    const double* row = m.mlp_w2.data() + static_cast<std::size_t>(j) * k;
    for (int d = 0; d < k; ++d) a += row[d] * s.a[d];
    logit += m.head_w[j] * std::tanh(a);
  }
  return logit;
}

double critic_forward(const Model& m, ForwardTrace& t) {
  t.critic_score = m.critic.forward(t.z_clean.data(), t.critic_h1);
  t.has_critic = true;
  return t.critic_score;
}

void Grads::resize(const Model& m) {
  user_rows.clear();
  item_rows.clear();
  mlp_w1.assign(m.mlp_w1.size(), 0.0);
  mlp_b1.assign(m.mlp_b1.size(), 0.0);
  mlp_w2.assign(m.mlp_w2.size(), 0.0);
  mlp_b2.assign(m.mlp_b2.size(), 0.0);
  head_w.assign(m.head_w.size(), 0.0);
  head_b = 0.0;
  critic.resize(m.critic);
}

void Grads::add(const Grads& o) {
  user_rows.insert(user_rows.end(), o.user_rows.begin(), o.user_rows.end());
  item_rows.insert(item_rows.end(), o.item_rows.begin(), o.item_rows.end());
  add_vec(mlp_w1, o.mlp_w1);
  add_vec(mlp_b1, o.mlp_b1);
  add_vec(mlp_w2, o.mlp_w2);
  add_vec(mlp_b2, o.mlp_b2);
  add_vec(head_w, o.head_w);
  head_b += o.head_b;
  critic.add(o.critic);
}

void Grads::scale(double s) {
  for (auto& [row, g] : user_rows) scale_vec(g, s);
  for (auto& [row, g] : item_rows) scale_vec(g, s);
  scale_vec(mlp_w1, s);
  scale_vec(mlp_b1, s);
  scale_vec(mlp_w2, s);
  scale_vec(mlp_b2, s);
  scale_vec(head_w, s);
  head_b *= s;
  critic.scale(s);
}

namespace {

// Single-trace backward into a chunk-private accumulator.
void backward_one(const Model& m, const ForwardTrace& t, const TraceGrad& tg,
                  const FreezeSet& freeze, Grads& out) {
  const int k = m.k;
  std::vector<double> dz_clean(k, 0.0);

  if (tg.dlogit != 0.0) {
    if (!freeze.psi) {
      for (int d = 0; d < k; ++d) out.head_w[d] += tg.dlogit * t.z[d];
      out.head_b += tg.dlogit;
    }
    // The chain through psi's weights stays alive even when psi is frozen.
    for (int d = 0; d < k; ++d) {
      const double mask = t.mask_z.empty() ? 1.0 : t.mask_z[d];
      dz_clean[d] += tg.dlogit * m.head_w[d] * mask;
    }
  }
  if (!tg.dz.empty()) {
    for (int d = 0; d < k; ++d) dz_clean[d] += tg.dz[d];
  }
  if (tg.dscore != 0.0 && t.has_critic) {
    critic_backward(m.critic, t.z_clean.data(), t.critic_h1, tg.dscore,
                    freeze.theta ? nullptr : &out.critic,
                    freeze.phi ? nullptr : dz_clean.data());
  }
  if (freeze.phi) return;

  const double* u = m.user_emb.data() + static_cast<std::size_t>(t.user) * k;
  const double* v = m.item_emb.data() + static_cast<std::size_t>(t.item) * k;
  std::vector<double> du(k, 0.0), dv(k, 0.0);
  if (m.variant == Variant::MF) {
    for (int d = 0; d < k; ++d) {
      du[d] = dz_clean[d] * v[d];
      dv[d] = dz_clean[d] * u[d];
    }
  } else {
    std::vector<double> dpre2(k), dh1(k, 0.0);
    for (int j = 0; j < k; ++j)
      dpre2[j] = dz_clean[j] * (1.0 - t.z_clean[j] * t.z_clean[j]);
    for (int j = 0; j < k; ++j) {
      const double* row = m.mlp_w2.data() + static_cast<std::size_t>(j) * k;
      double* grow = out.mlp_w2.data() + static_cast<std::size_t>(j) * k;
      for (int d = 0; d < k; ++d) {
        grow[d] += dpre2[j] * t.h1[d];
        dh1[d] += dpre2[j] * row[d];
      }
      out.mlp_b2[j] += dpre2[j];
    }
    for (int j = 0; j < k; ++j) {
      const double mask = t.mask_h1.empty() ? 1.0 : t.mask_h1[j];
      const double dpre1 = dh1[j] * mask * (1.0 - t.t1[j] * t.t1[j]);
      const double* row = m.mlp_w1.data() + static_cast<std::size_t>(j) * 2 * k;
      double* grow = out.mlp_w1.data() + static_cast<std::size_t>(j) * 2 * k;
      for (int d = 0; d < k; ++d) {
        grow[d] += dpre1 * u[d];
        grow[k + d] += dpre1 * v[d];
        du[d] += dpre1 * row[d];
        dv[d] += dpre1 * row[k + d];
      }
      out.mlp_b1[j] += dpre1;
    }
  }
  out.user_rows.emplace_back(t.user, std::move(du));
  out.item_rows.emplace_back(t.item, std::move(dv));
}

}  // namespace

void backward(const Model& m, const std::vector<ForwardTrace>& traces,
              const std::vector<TraceGrad>& tgrads, const FreezeSet& freeze,
              Grads& out) {
  if (traces.size() != tgrads.size())
    throw ConfigError("backward: traces and partials disagree in length");
  for (const ForwardTrace& t : traces) {
    if (t.model_version != m.version)
      throw TrainingError("backward: stale trace, model updated since forward");
  }
  std::vector<Grads> parts(kChunkCount);
  for (auto& p : parts) p.resize(m);
  for_chunks(traces.size(), [&](int c, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      backward_one(m, traces[i], tgrads[i], freeze, parts[c]);
  });
  for (const auto& p : parts) out.add(p);
}

std::vector<double> pack_params(const Model& m) {
  std::vector<double> flat;
  auto put = [&](const std::vector<double>& v) {
    flat.insert(flat.end(), v.begin(), v.end());
  };
  put(m.user_emb);
  put(m.item_emb);
  put(m.mlp_w1);
  put(m.mlp_b1);
  put(m.mlp_w2);
  put(m.mlp_b2);
  put(m.head_w);
  flat.push_back(m.head_b);
  put(m.critic.w1);
  put(m.critic.b1);
  put(m.critic.w2);
  flat.push_back(m.critic.b2);
  return flat;
}

void unpack_params(Model& m, const std::vector<double>& flat) {
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& v) {
    if (pos + v.size() > flat.size())
      throw ConfigError("unpack_params: flat vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.begin());
    pos += v.size();
  };
  take(m.user_emb);
  take(m.item_emb);
  take(m.mlp_w1);
  take(m.mlp_b1);
  take(m.mlp_w2);
  take(m.mlp_b2);
  take(m.head_w);
  if (pos >= flat.size()) throw ConfigError("unpack_params: flat vector too short");
  m.head_b = flat[pos++];
  take(m.critic.w1);
  take(m.critic.b1);
  take(m.critic.w2);
  if (pos >= flat.size()) throw ConfigError("unpack_params: flat vector too short");
  m.critic.b2 = flat[pos++];
  if (pos != flat.size())
    throw ConfigError("unpack_params: flat vector too long");
  m.version += 1;
}

std::vector<double> pack_grads(const Model& m, const Grads& g) {
  std::vector<double> flat;
  std::vector<double> emb(m.user_emb.size(), 0.0);
  for (const auto& [row, vec] : g.user_rows)
    for (int d = 0; d < m.k; ++d) emb[static_cast<std::size_t>(row) * m.k + d] += vec[d];
  flat.insert(flat.end(), emb.begin(), emb.end());
  emb.assign(m.item_emb.size(), 0.0);
  for (const auto& [row, vec] : g.item_rows)
    for (int d = 0; d < m.k; ++d) emb[static_cast<std::size_t>(row) * m.k + d] += vec[d];
  flat.insert(flat.end(), emb.begin(), emb.end());
  auto put = [&](const std::vector<double>& v) {
    flat.insert(flat.end(), v.begin(), v.end());
  };
  put(g.mlp_w1);
  put(g.mlp_b1);
  put(g.mlp_w2);
  put(g.mlp_b2);
  put(g.head_w);
  flat.push_back(g.head_b);
  put(g.critic.w1);
  put(g.critic.b1);
  put(g.critic.w2);
  flat.push_back(g.critic.b2);
  return flat;
}

namespace {

void write_tensor(std::ofstream& out, const std::string& name,
                  std::size_t rows, std::size_t cols,
                  const double* data) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data[r * cols + c]);
      out << buf << (c + 1 < cols ? ' ' : '\n');
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m,
                     const CheckpointMeta& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << "ASTCKPT v1\n";
  out << "variant " << to_string(m.variant) << '\n';
  out << "n_users " << m.n_users << '\n';
  out << "n_items " << m.n_items << '\n';
  out << "k " << m.k << '\n';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", m.dropout_rate);
  out << "dropout_rate " << buf << '\n';
  out << "critic_hidden " << m.critic.hidden << '\n';
  out << "seed " << meta.seed << '\n';
  out << "optimizer " << meta.optimizer << '\n';
  out << "gaussian " << meta.gaussian << '\n';
  write_tensor(out, "user_embeddings", m.n_users, m.k, m.user_emb.data());
  write_tensor(out, "item_embeddings", m.n_items, m.k, m.item_emb.data());
  if (m.variant == Variant::NCF) {
    write_tensor(out, "mlp_w1", m.k, 2 * m.k, m.mlp_w1.data());
    write_tensor(out, "mlp_b1", 1, m.k, m.mlp_b1.data());
    write_tensor(out, "mlp_w2", m.k, m.k, m.mlp_w2.data());
    write_tensor(out, "mlp_b2", 1, m.k, m.mlp_b2.data());
  }
  write_tensor(out, "head_weight", 1, m.k, m.head_w.data());
  write_tensor(out, "head_bias", 1, 1, &m.head_b);
  write_tensor(out, "critic_w1", m.critic.hidden, m.critic.in_dim,
               m.critic.w1.data());
  write_tensor(out, "critic_b1", 1, m.critic.hidden, m.critic.b1.data());
  write_tensor(out, "critic_w2", 1, m.critic.hidden, m.critic.w2.data());
  write_tensor(out, "critic_b2", 1, 1, &m.critic.b2);
  out << "end\n";
  if (!out) throw DataError("write failed: " + path);
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ASTCKPT v1")
    throw DataError(path + ": not an ASTCKPT v1 checkpoint");
  Model m;
  CheckpointMeta mt;
  int critic_hidden = 16;
  std::string key;
  while (in >> key) {
    if (key == "end") break;
    if (key == "tensor") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      if (!(in >> name >> rows >> cols))
        throw DataError(path + ": malformed tensor header");
      std::vector<double> data(rows * cols);
      for (double& x : data)
        if (!(in >> x)) throw DataError(path + ": truncated tensor " + name);
      auto expect = [&](std::size_t want, const char* what) {
        if (data.size() != want)
          throw DataError(path + ": tensor " + name + " has wrong shape for " + what);
      };
      if (name == "user_embeddings") {
        expect(static_cast<std::size_t>(m.n_users) * m.k, "user_embeddings");
        m.user_emb = std::move(data);
      } else if (name == "item_embeddings") {
        expect(static_cast<std::size_t>(m.n_items) * m.k, "item_embeddings");
        m.item_emb = std::move(data);
      } else if (name == "mlp_w1") {
        m.mlp_w1 = std::move(data);
      } else if (name == "mlp_b1") {
        m.mlp_b1 = std::move(data);
      } else if (name == "mlp_w2") {
        m.mlp_w2 = std::move(data);
      } else if (name == "mlp_b2") {
        m.mlp_b2 = std::move(data);
      } else if (name == "head_weight") {
        expect(static_cast<std::size_t>(m.k), "head_weight");
        m.head_w = std::move(data);
      } else if (name == "head_bias") {
        expect(1, "head_bias");
        m.head_b = data[0];
      } else if (name == "critic_w1") {
        m.critic.w1 = std::move(data);
      } else if (name == "critic_b1") {
        m.critic.b1 = std::move(data);
      } else if (name == "critic_w2") {
        m.critic.w2 = std::move(data);
      } else if (name == "critic_b2") {
        m.critic.b2 = data[0];
      } else {
        throw DataError(path + ": unknown tensor " + name);
      }
      continue;
    }
    std::string value;
    if (!(in >> value)) throw DataError(path + ": missing value for " + key);
    if (key == "variant") m.variant = variant_from_string(value);
    else if (key == "n_users") m.n_users = std::stoi(value);
    else if (key == "n_items") m.n_items = std::stoi(value);
    else if (key == "k") m.k = std::stoi(value);
    else if (key == "dropout_rate") m.dropout_rate = std::stod(value);
    else if (key == "critic_hidden") critic_hidden = std::stoi(value);
    else if (key == "seed") mt.seed = std::stoull(value);
    else if (key == "optimizer") mt.optimizer = value;
    else if (key == "gaussian") mt.gaussian = value;
    else throw DataError(path + ": unknown checkpoint key " + key);
  }
  m.critic.in_dim = m.k;
  m.critic.hidden = critic_hidden;
  if (m.user_emb.empty() || m.item_emb.empty() || m.head_w.empty() ||
      m.critic.w1.empty())
    throw DataError(path + ": checkpoint missing required tensors");
  if (m.variant == Variant::NCF &&
      (m.mlp_w1.size() != static_cast<std::size_t>(m.k) * 2 * m.k ||
       m.mlp_w2.size() != static_cast<std::size_t>(m.k) * m.k))
    throw DataError(path + ": NCF checkpoint missing MLP tensors");
  if (m.critic.w1.size() != static_cast<std::size_t>(critic_hidden) * m.k ||
      m.critic.b1.size() != static_cast<std::size_t>(critic_hidden) ||
      m.critic.w2.size() != static_cast<std::size_t>(critic_hidden))
    throw DataError(path + ": critic tensors have inconsistent shapes");
  if (meta) *meta = mt;
  return m;
}

}  // namespace astrec
