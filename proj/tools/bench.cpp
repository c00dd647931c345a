// Benchmark of the chunk-parallel kernels against their serial reference
// path. Both paths decompose work into the same fixed chunks, so outputs
// must match bitwise; this tool verifies that while timing the difference.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "astrec/losses.hpp"
#include "astrec/metrics.hpp"
#include "astrec/model.hpp"
#include "astrec/parallel.hpp"
#include "astrec/rng.hpp"
#include "astrec/synth.hpp"

using namespace astrec;

namespace {

double best_ms(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

struct Workload {
  std::string name;
  // Runs the kernel and returns a full fingerprint of its output.
  std::function<std::vector<double>()> run;
};

int g_failures = 0;

void bench(const Workload& w, int reps) {
  set_parallel(false);
  const std::vector<double> serial_out = w.run();
  const double serial = best_ms([&] { w.run(); }, reps);
  set_parallel(true);
  const std::vector<double> parallel_out = w.run();
  const double parallel = best_ms([&] { w.run(); }, reps);
  const bool exact = serial_out == parallel_out;
  if (!exact) ++g_failures;
  std::printf("%-24s %10.2f ms %10.2f ms %7.2fx   %s\n", w.name.c_str(), serial,
              parallel, serial / parallel, exact ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
  // One mid-size confounded world feeds every workload.
  SynthConfig sc;
  sc.n_users = 400;
  sc.n_items = 250;
  sc.k = 8;
  sc.lambda_conf = 0.6;
  sc.target_density = 0.1;
  sc.seed = 5;
  Rng wr(sc.seed, 0);
  const SynthWorld world = build_world(sc, wr);
  const std::vector<Interaction> logged = sample_logged(world, Rng(sc.seed, 1));
  const std::vector<Interaction> test = sample_uniform(world, 30000, Rng(sc.seed, 2));

  Model m = init(Variant::NCF, sc.n_users, sc.n_items, 32, 0.0, Rng(9, 0), 16);
  Model teacher = m;

  std::vector<std::pair<int, int>> pairs;
  std::vector<Interaction> batch_d;
  Rng br(11, 0);
  for (int i = 0; i < 20000; ++i) {
    const Interaction& it = logged[br.uniform_int(logged.size())];
    pairs.push_back({it.user, it.item});
    batch_d.push_back(it);
  }
  std::vector<std::pair<int, int>> batch_q;
  for (int i = 0; i < 20000; ++i)
    batch_q.push_back({static_cast<int>(br.uniform_int(sc.n_users)),
                       static_cast<int>(br.uniform_int(sc.n_items))});

  const std::vector<ForwardTrace> traces =
      forward_batch(m, pairs, Mode::Eval, Rng(0, 0));
  std::vector<TraceGrad> partials(traces.size());
  for (std::size_t i = 0; i < partials.size(); ++i)
    partials[i].dlogit = 1.0 / static_cast<double>(partials.size());

  std::vector<Workload> workloads;
  workloads.push_back({"forward_batch", [&] {
    std::vector<double> out;
    for (const ForwardTrace& tr : forward_batch(m, pairs, Mode::Train, Rng(1, 2)))
      out.push_back(tr.logit);
    return out;
  }});
  workloads.push_back({"backward", [&] {
    Grads g;
    g.resize(m);
    backward(m, traces, partials, {}, g);
    return pack_grads(m, g);
  }});
  workloads.push_back({"loss_total", [&] {
    LossWeights w{0.6, 0.4, 0.4};
    TotalLoss tl = loss_total(m, &teacher, batch_d, batch_q, w, Mode::Train,
                              Rng(2, 3));
    std::vector<double> out = pack_grads(m, tl.grads);
    out.insert(out.end(), {tl.value, tl.loss_d, tl.loss_a, tl.loss_s, tl.loss_e});
    return out;
  }});
  workloads.push_back({"evaluate", [&] {
    MetricsReport rep = evaluate(m, test, 5);
    return std::vector<double>{rep.hr, rep.ndcg,
                               static_cast<double>(rep.n_users_evaluated)};
  }});
  workloads.push_back({"oracle_g", [&] {
    return std::vector<double>{oracle_g(world, 3, 7, 200000, Rng(4, 4))};
  }});
  workloads.push_back({"labeling_distance", [&] {
    LabelingDistance ld = labeling_distance(world, 400, 400, Rng(5, 5));
    return std::vector<double>{ld.q_branch, ld.p_branch};
  }});

  std::printf("%-24s %13s %13s %9s   %s\n", "kernel", "serial", "openmp",
              "speedup", "check");
  std::printf("%d worker threads\n", (set_parallel(true), worker_threads()));
  for (const Workload& w : workloads) bench(w, 3);
  return g_failures == 0 ? 0 : 1;
}
