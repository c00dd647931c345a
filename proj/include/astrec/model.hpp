#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "astrec/rng.hpp"

namespace astrec {

enum class Variant { MF, NCF };
enum class Mode { Train, Eval };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Two-layer tanh perceptron scoring a feature vector; standalone so the
// same code serves the model's critic head and raw-vector KL estimation.
struct Critic {
  int in_dim = 0;
  int hidden = 16;
  std::vector<double> w1;  // hidden x in_dim, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  void init(int in, int hid, Rng rng);
  // Score; h1_out (size hidden) records the tanh activations for backward.
  double forward(const double* x, std::vector<double>& h1_out) const;
  double forward(const double* x) const;
};

struct CriticGrads {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
  void resize(const Critic& c);
  void add(const CriticGrads& o);
  void scale(double s);
};

// Accumulates dscore * d(score)/d(weights) into g and, when dx is non-null,
// dscore * d(score)/d(input) into dx. Either output may be omitted.
void critic_backward(const Critic& c, const double* x,
                     const std::vector<double>& h1, double dscore,
                     CriticGrads* g, double* dx);

// f = psi(phi(u,i)): phi is an elementwise embedding product (MF) or a
// [2k -> k -> k] tanh MLP on concatenated embeddings (NCF); psi is linear.
struct Model {
  Variant variant = Variant::MF;
  int n_users = 0;
  int n_items = 0;
  int k = 0;
  double dropout_rate = 0.0;
  std::vector<double> user_emb;  // n_users x k
  std::vector<double> item_emb;  // n_items x k
  std::vector<double> mlp_w1;    // k x 2k (NCF only)
  std::vector<double> mlp_b1;    // k
  std::vector<double> mlp_w2;    // k x k
  std::vector<double> mlp_b2;    // k
  std::vector<double> head_w;    // k
  double head_b = 0.0;
  Critic critic;                 // in_dim = k
  std::uint64_t version = 0;     // bumped on every parameter change
};

Model init(Variant variant, int n_users, int n_items, int k,
           double dropout_rate, Rng rng, int critic_hidden = 16);

// Everything backward needs: clean z feeds the critic, masked z the head.
struct ForwardTrace {
  int user = 0;
  int item = 0;
  std::vector<double> z;        // post-dropout features (head input)
  std::vector<double> z_clean;  // pre-dropout features (critic input)
  double logit = 0.0;
  std::vector<double> t1;       // NCF layer-1 tanh outputs
  std::vector<double> h1;       // t1 after dropout
  std::vector<double> mask_h1;  // inverted-dropout factors, empty in Eval
  std::vector<double> mask_z;
  std::vector<double> critic_h1;  // filled by critic_forward
  double critic_score = 0.0;
  bool has_critic = false;
  std::uint64_t model_version = 0;
};

// Train mode draws inverted-dropout masks from rng; Eval consumes none.
ForwardTrace forward(const Model& m, int user, int item, Mode mode, Rng& rng);
ForwardTrace forward(const Model& m, int user, int item);  // Eval shorthand

// Chunk-parallel batched forward; trace j draws its masks from
// rng.substream(j), so results are independent of the thread count.
std::vector<ForwardTrace> forward_batch(const Model& m,
                                        const std::vector<std::pair<int, int>>& pairs,
                                        Mode mode, const Rng& rng);

// Allocation-free Eval logit for ranking loops.
struct EvalScratch {
  std::vector<double> x, a, b;
};
double eval_logit(const Model& m, int user, int item, EvalScratch& s);

// Critic score on the trace's clean features, recorded for backward.
double critic_forward(const Model& m, ForwardTrace& t);

// Per-trace loss partials; dz is w.r.t. z_clean and may be empty.
struct TraceGrad {
  double dlogit = 0.0;
  std::vector<double> dz;
  double dscore = 0.0;  // through the critic evaluated on this trace
};

struct FreezeSet {
  bool phi = false;
  bool psi = false;
  bool theta = false;
};

struct Grads {
  std::vector<std::pair<int, std::vector<double>>> user_rows, item_rows;
  std::vector<double> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::vector<double> head_w;
  double head_b = 0.0;
  CriticGrads critic;
  void resize(const Model& m);
  void add(const Grads& o);
  void scale(double s);
};

// Accumulates exact analytic gradients for all traces into `out`. Frozen
// components receive zero gradient but the chain still passes through their
// weights (freezing psi keeps d logit/dz = head_w alive). Chunk-parallel
// with a fixed reduction order, so results do not depend on thread count.
void backward(const Model& m, const std::vector<ForwardTrace>& traces,
              const std::vector<TraceGrad>& tgrads, const FreezeSet& freeze,
              Grads& out);

// Flat row-major parameter order: user_emb, item_emb, mlp (NCF), head,
// critic. Used by checkpoints, finite-difference oracles, and tests.
std::vector<double> pack_params(const Model& m);
void unpack_params(Model& m, const std::vector<double>& flat);
std::vector<double> pack_grads(const Model& m, const Grads& g);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  std::string gaussian = "box-muller-cosine";
};

void save_checkpoint(const std::string& path, const Model& m,
                     const CheckpointMeta& meta);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace astrec
