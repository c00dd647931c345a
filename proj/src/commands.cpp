#include "astrec/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include "astrec/errors.hpp"
#include "astrec/losses.hpp"
#include "astrec/metrics.hpp"
#include "astrec/model.hpp"
#include "astrec/trainer.hpp"
#include "json.hpp"

namespace astrec {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Progress goes to stderr; stdout carries results only.
void logln(const std::string& s) { std::cerr << s << std::endl; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

std::string path_join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t fnv1a_str(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

json synth_config_json(const SynthConfig& s) {
  return {{"n_users", s.n_users},
          {"n_items", s.n_items},
          {"k", s.k},
          {"sigma_factor", s.sigma_factor},
          {"sigma_r", s.sigma_r},
          {"sigma_o", s.sigma_o},
          {"lambda_conf", s.lambda_conf},
          {"target_density", s.target_density},
          {"uniform_test_pairs", s.uniform_test_pairs},
          {"seed", s.seed}};
}

void write_manifest(const std::string& dir, const std::string& kind,
                    const RunConfig& rc, int n_users, int n_items,
                    const std::vector<std::pair<std::string, std::size_t>>& counts) {
  json m;
  m["kind"] = kind;
  m["seed"] = rc.seed;
  m["n_users"] = n_users;
  m["n_items"] = n_items;
  json cnt = json::object(), hash = json::object();
  for (const auto& [name, n] : counts) {
    cnt[name] = n;
    hash[name] = hex64(fnv1a_file(path_join(dir, name)));
  }
  m["counts"] = cnt;
  m["hash"] = hash;
  m["config"] = json::parse(run_config_json(rc));
  write_text(path_join(dir, "manifest.json"), m.dump(2) + "\n");
}

std::vector<Interaction> load_processed_file(const std::string& path, Source src,
                                             int threshold, bool required) {
  if (!fs::exists(path)) {
    if (required) throw DataError("missing data file: " + path);
    return {};
  }
  std::vector<Interaction> out;
  for (const RawTriple& r : read_triples_raw(path, '\t', false)) {
    Interaction it;
    it.user = static_cast<int>(r.user);
    it.item = static_cast<int>(r.item);
    it.raw_rating = r.rating;
    it.label = binarize(r.rating, threshold);
    it.source = src;
    out.push_back(it);
  }
  return out;
}

// One training run with all its artifacts under `out`.
struct RunOutcome {
  TrainResult result;
  MetricsReport test_rep;
};

std::string history_csv(const std::vector<EvalRow>& history) {
  std::string csv = "step,loss_D,loss_A,loss_S,loss_E,loss_total,val_ndcg5\n";
  for (const EvalRow& r : history) {
    csv += std::to_string(r.step) + "," + csv_double(r.loss_d) + "," +
           csv_double(r.loss_a) + "," + csv_double(r.loss_s) + "," +
           csv_double(r.loss_e) + "," + csv_double(r.loss_total) + "," +
           csv_double(r.val_ndcg) + "\n";
  }
  return csv;
}

RunOutcome run_training(const RunConfig& c, const Dataset& ds,
                        const std::string& out) {
  ensure_dir(out);
  TrainConfig tc = c.trainer;
  tc.seed = c.seed;
  logln("train: objective=" + std::string(objective_name(tc.objective)) +
        " seed=" + std::to_string(c.seed) + " -> " + out);
  TrainResult res = train(ds, tc, Rng(c.seed, 0));

  CheckpointMeta meta;
  meta.seed = c.seed;
  save_checkpoint(path_join(out, "best.ckpt"), res.best_model, meta);
  write_text(path_join(out, "history.csv"), history_csv(res.history));

  MetricsReport rep = evaluate(res.best_model, ds.test, c.eval_k,
                               hr_mode_from_string(c.hr_mode));
  json s;
  s["best_step"] = res.best_step;
  s["best_val_ndcg5"] = res.best_val_ndcg;
  s["steps_run"] = res.steps_run;
  s["stop_reason"] = stop_reason_name(res.stop_reason);
  s["test_ndcg5"] = rep.ndcg;
  s["test_hr5"] = rep.hr;
  s["hr_mode"] = c.hr_mode;
  s["eval_k"] = c.eval_k;
  write_text(path_join(out, "summary.json"), s.dump(2) + "\n");
  save_run_config(path_join(out, "resolved_config.json"), c);
  return {std::move(res), rep};
}

}  // namespace

std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;  // %.17g always round-trips
}

Dataset load_prepared_dataset(const std::string& dir, int threshold) {
  if (dir.empty()) throw ConfigError("data.dir is required");
  if (!fs::exists(dir)) throw DataError("missing data directory: " + dir);
  Dataset ds;
  ds.biased_train = load_processed_file(path_join(dir, "biased_train.tsv"),
                                        Source::Logged, threshold, true);
  ds.uniform_train = load_processed_file(path_join(dir, "uniform_train.tsv"),
                                         Source::Uniform, threshold, false);
  ds.validation = load_processed_file(path_join(dir, "validation.tsv"),
                                      Source::Uniform, threshold, true);
  ds.test = load_processed_file(path_join(dir, "test.tsv"), Source::Uniform,
                                threshold, true);
  const std::string man = path_join(dir, "manifest.json");
  if (fs::exists(man)) {
    try {
      const json m = json::parse(read_text(man));
      ds.n_users = m.at("n_users").get<int>();
      ds.n_items = m.at("n_items").get<int>();
    } catch (const json::exception& e) {
      throw DataError("bad manifest '" + man + "': " + e.what());
    }
  } else {
    for (const auto* split :
         {&ds.biased_train, &ds.uniform_train, &ds.validation, &ds.test})
      for (const Interaction& it : *split) {
        ds.n_users = std::max(ds.n_users, it.user + 1);
        ds.n_items = std::max(ds.n_items, it.item + 1);
      }
  }
  check_dataset(ds);
  return ds;
}

void save_world(const std::string& path, const SynthWorld& w) {
  json j;
  j["config"] = synth_config_json(w.config);
  j["user_factors"] = w.user_factors;
  j["item_factors"] = w.item_factors;
  j["exposure_user_factors"] = w.exposure_user_factors;
  j["exposure_item_factors"] = w.exposure_item_factors;
  j["item_popularity_bias"] = w.item_popularity_bias;
  j["exposure_scale_offset"] = w.exposure_scale_offset;
  write_text(path, j.dump() + "\n");
}

SynthWorld load_world(const std::string& path) {
  SynthWorld w;
  try {
    const json j = json::parse(read_text(path));
    const json& c = j.at("config");
    w.config.n_users = c.at("n_users").get<int>();
    w.config.n_items = c.at("n_items").get<int>();
    w.config.k = c.at("k").get<int>();
    w.config.sigma_factor = c.at("sigma_factor").get<double>();
    w.config.sigma_r = c.at("sigma_r").get<double>();
    w.config.sigma_o = c.at("sigma_o").get<double>();
    w.config.lambda_conf = c.at("lambda_conf").get<double>();
    w.config.target_density = c.at("target_density").get<double>();
    w.config.uniform_test_pairs = c.at("uniform_test_pairs").get<long long>();
    w.config.seed = c.at("seed").get<std::uint64_t>();
    j.at("user_factors").get_to(w.user_factors);
    j.at("item_factors").get_to(w.item_factors);
    j.at("exposure_user_factors").get_to(w.exposure_user_factors);
    j.at("exposure_item_factors").get_to(w.exposure_item_factors);
    j.at("item_popularity_bias").get_to(w.item_popularity_bias);
    w.exposure_scale_offset = j.at("exposure_scale_offset").get<double>();
  } catch (const json::exception& e) {
    throw DataError("bad world file '" + path + "': " + e.what());
  }
  const std::size_t uk = static_cast<std::size_t>(w.config.n_users) * w.config.k;
  const std::size_t ik = static_cast<std::size_t>(w.config.n_items) * w.config.k;
  if (w.user_factors.size() != uk || w.item_factors.size() != ik ||
      w.exposure_user_factors.size() != uk ||
      w.exposure_item_factors.size() != ik ||
      w.item_popularity_bias.size() != static_cast<std::size_t>(w.config.n_items))
    throw DataError("bad world file '" + path + "': array sizes disagree");
  return w;
}

void cmd_synth(const RunConfig& c) {
  ensure_dir(c.out_dir);
  const SynthConfig& sc = c.synth;
  logln("synth: building " + std::to_string(sc.n_users) + "x" +
        std::to_string(sc.n_items) + " world, lambda_conf=" +
        csv_double(sc.lambda_conf));
  Rng wr(sc.seed, 0);
  SynthWorld world = build_world(sc, wr);
  std::vector<Interaction> logged = sample_logged(world, Rng(sc.seed, 1));
  std::vector<Interaction> uniform =
      dedupe_pairs(sample_uniform(world, sc.uniform_test_pairs, Rng(sc.seed, 2)));
  Rng sr(sc.seed, 3);
  UniformSplit us =
      split_uniform(uniform, c.split_train, c.split_val, c.split_test, sr);

  write_triples(path_join(c.out_dir, "biased_train.tsv"), logged);
  write_triples(path_join(c.out_dir, "uniform_train.tsv"), us.train);
  write_triples(path_join(c.out_dir, "validation.tsv"), us.validation);
  write_triples(path_join(c.out_dir, "test.tsv"), us.test);
  save_world(path_join(c.out_dir, "world.json"), world);
  write_manifest(c.out_dir, "synth", c, sc.n_users, sc.n_items,
                 {{"biased_train.tsv", logged.size()},
                  {"uniform_train.tsv", us.train.size()},
                  {"validation.tsv", us.validation.size()},
                  {"test.tsv", us.test.size()},
                  {"world.json", 0}});
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  std::cout << "synth: " << c.out_dir << ": " << logged.size() << " biased, "
            << us.train.size() << "/" << us.validation.size() << "/"
            << us.test.size() << " uniform train/val/test, seed " << sc.seed
            << "\n";
}

void cmd_prepare(const RunConfig& c) {
  if (c.biased_path.empty())
    throw ConfigError("prepare: data.biased_path is required");
  ensure_dir(c.out_dir);
  std::vector<Interaction> biased, uniform;
  int n_users = 0, n_items = 0;
  if (c.format == "triples") {
    const char sep = sep_char(c.sep);
    std::vector<RawTriple> braw =
        read_triples_raw(c.biased_path, sep, c.one_based);
    std::vector<RawTriple> uraw;
    if (!c.uniform_path.empty())
      uraw = read_triples_raw(c.uniform_path, sep, c.one_based);
    IdMap map = build_id_map({&braw, &uraw});
    biased = to_interactions(braw, map, c.binarize_threshold, Source::Logged);
    uniform = to_interactions(uraw, map, c.binarize_threshold, Source::Uniform);
    n_users = static_cast<int>(map.users.size());
    n_items = static_cast<int>(map.items.size());
    save_id_map(path_join(c.out_dir, "id_map.txt"), map);
  } else if (c.format == "matrix") {
    LoadedTriples lb =
        load_matrix_ascii(c.biased_path, c.binarize_threshold, Source::Logged);
    biased = std::move(lb.interactions);
    n_users = lb.n_users;
    n_items = lb.n_items;
    if (!c.uniform_path.empty()) {
      LoadedTriples lu = load_matrix_ascii(c.uniform_path, c.binarize_threshold,
                                           Source::Uniform);
      uniform = std::move(lu.interactions);
      n_users = std::max(n_users, lu.n_users);
      n_items = std::max(n_items, lu.n_items);
    }
  } else {
    throw ConfigError("prepare: data.format must be triples or matrix, got '" +
                      c.format + "'");
  }
  uniform = dedupe_pairs(uniform);
  Rng sr(c.seed, 3);
  UniformSplit us =
      split_uniform(uniform, c.split_train, c.split_val, c.split_test, sr);

  Dataset ds;
  ds.n_users = n_users;
  ds.n_items = n_items;
  ds.biased_train = biased;
  ds.uniform_train = us.train;
  ds.validation = us.validation;
  ds.test = us.test;
  check_dataset(ds);

  write_triples(path_join(c.out_dir, "biased_train.tsv"), ds.biased_train);
  write_triples(path_join(c.out_dir, "uniform_train.tsv"), ds.uniform_train);
  write_triples(path_join(c.out_dir, "validation.tsv"), ds.validation);
  write_triples(path_join(c.out_dir, "test.tsv"), ds.test);
  write_manifest(c.out_dir, "prepare", c, n_users, n_items,
                 {{"biased_train.tsv", ds.biased_train.size()},
                  {"uniform_train.tsv", ds.uniform_train.size()},
                  {"validation.tsv", ds.validation.size()},
                  {"test.tsv", ds.test.size()}});
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  std::cout << "prepare: " << c.out_dir << ": " << ds.biased_train.size()
            << " biased, " << ds.uniform_train.size() << "/"
            << ds.validation.size() << "/" << ds.test.size()
            << " uniform train/val/test, " << n_users << " users x " << n_items
            << " items\n";
}

void cmd_train(const RunConfig& c, int n_seeds) {
  if (n_seeds < 1) throw ConfigError("train: --seeds must be >= 1");
  Dataset ds = load_prepared_dataset(c.data_dir, c.binarize_threshold);
  if (n_seeds == 1) {
    RunOutcome o = run_training(c, ds, c.out_dir);
    std::cout << "train: best_step=" << o.result.best_step << " best_val_ndcg5="
              << csv_double(o.result.best_val_ndcg)
              << " test_ndcg5=" << csv_double(o.test_rep.ndcg)
              << " test_hr5=" << csv_double(o.test_rep.hr)
              << " stop=" << stop_reason_name(o.result.stop_reason) << "\n";
    return;
  }
  ensure_dir(c.out_dir);
  std::vector<double> vals, ndcgs, hrs;
  std::string csv = "seed,best_step,best_val_ndcg5,test_ndcg5,test_hr5,stop_reason\n";
  for (int s = 0; s < n_seeds; ++s) {
    RunConfig cs = c;
    cs.seed = static_cast<std::uint64_t>(s);
    cs.out_dir = path_join(c.out_dir, "seed_" + std::to_string(s));
    RunOutcome o = run_training(cs, ds, cs.out_dir);
    csv += std::to_string(s) + "," + std::to_string(o.result.best_step) + "," +
           csv_double(o.result.best_val_ndcg) + "," +
           csv_double(o.test_rep.ndcg) + "," + csv_double(o.test_rep.hr) + "," +
           stop_reason_name(o.result.stop_reason) + "\n";
    vals.push_back(o.result.best_val_ndcg);
    ndcgs.push_back(o.test_rep.ndcg);
    hrs.push_back(o.test_rep.hr);
  }
  csv += "mean,," + csv_double(mean_of(vals)) + "," + csv_double(mean_of(ndcgs)) +
         "," + csv_double(mean_of(hrs)) + ",\n";
  csv += "stderr,," + csv_double(stderr_of(vals)) + "," +
         csv_double(stderr_of(ndcgs)) + "," + csv_double(stderr_of(hrs)) + ",\n";
  write_text(path_join(c.out_dir, "seeds_summary.csv"), csv);
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  std::cout << "train: " << n_seeds << " seeds: val_ndcg5=" <<
      csv_double(mean_of(vals)) << "+-" << csv_double(stderr_of(vals))
            << " test_ndcg5=" << csv_double(mean_of(ndcgs)) << "+-"
            << csv_double(stderr_of(ndcgs)) << "\n";
}

namespace {

struct DiagRow {
  double a_dist = 0.0;
  double cond = 0.0;
  double kl = 0.0;
  bool has_labeling = false;
  LabelingDistance labeling;
};

DiagRow compute_diagnostics(const Model& m, const Dataset& ds,
                            const RunConfig& c) {
  if (ds.biased_train.empty())
    throw DataError("diagnose: biased_train is empty");
  const int n = c.diag_samples;
  Rng root(c.seed, 17);  // dedicated diagnostics stream

  Rng rp = root.substream(0);
  std::vector<std::pair<int, int>> pairs_p(n);
  std::vector<int> labels_p(n);
  for (int i = 0; i < n; ++i) {
    const Interaction& it = ds.biased_train[rp.uniform_int(ds.biased_train.size())];
    pairs_p[i] = {it.user, it.item};
    labels_p[i] = it.label;
  }
  Rng rq = root.substream(1);
  std::vector<std::pair<int, int>> pairs_q(n);
  for (auto& [u, i] : pairs_q) {
    u = static_cast<int>(rq.uniform_int(ds.n_users));
    i = static_cast<int>(rq.uniform_int(ds.n_items));
  }
  auto rows_of = [&](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::vector<double>> rows;
    rows.reserve(pairs.size());
    for (const ForwardTrace& tr : forward_batch(m, pairs, Mode::Eval, Rng(0, 0)))
      rows.push_back(tr.z_clean);
    return rows;
  };
  const std::vector<std::vector<double>> zp = rows_of(pairs_p);
  const std::vector<std::vector<double>> zq = rows_of(pairs_q);

  // Labeled uniform rows for the conditional-shift proxy.
  std::vector<const Interaction*> labeled_q;
  for (const auto* split : {&ds.uniform_train, &ds.validation, &ds.test})
    for (const Interaction& it : *split) labeled_q.push_back(&it);
  if (labeled_q.empty())
    throw DataError("diagnose: no labeled uniform interactions");
  Rng rl = root.substream(2);
  std::vector<std::pair<int, int>> pairs_ql(n);
  std::vector<int> labels_q(n);
  for (int i = 0; i < n; ++i) {
    const Interaction& it = *labeled_q[rl.uniform_int(labeled_q.size())];
    pairs_ql[i] = {it.user, it.item};
    labels_q[i] = it.label;
  }

  DiagRow out;
  out.a_dist = a_distance(zp, zq);
  out.cond = cond_shift(zp, labels_p, rows_of(pairs_ql), labels_q);
  out.kl = kl_estimate(m, pairs_p, pairs_q);
  const std::string world_path = path_join(c.data_dir, "world.json");
  if (fs::exists(world_path)) {
    SynthWorld world = load_world(world_path);
    out.labeling = labeling_distance(world, c.diag_pair_sample, c.diag_mc_draws,
                                     root.substream(3));
    out.has_labeling = true;
  }
  return out;
}

void emit_report(const RunConfig& c, bool with_diag, const char* filename,
                 const char* label) {
  if (c.checkpoint.empty())
    throw ConfigError(std::string(label) + ": eval.checkpoint is required");
  Dataset ds = load_prepared_dataset(c.data_dir, c.binarize_threshold);
  Model m = load_checkpoint(c.checkpoint);
  if (m.n_users != ds.n_users || m.n_items != ds.n_items)
    throw DataError(std::string(label) + ": checkpoint dimensions (" +
                    std::to_string(m.n_users) + "x" + std::to_string(m.n_items) +
                    ") do not match dataset (" + std::to_string(ds.n_users) +
                    "x" + std::to_string(ds.n_items) + ")");
  MetricsReport rep =
      evaluate(m, ds.test, c.eval_k, hr_mode_from_string(c.hr_mode));

  std::string header = "hr_at_k,ndcg_at_k,k,hr_mode,n_users_evaluated,n_users_skipped";
  std::string row = csv_double(rep.hr) + "," + csv_double(rep.ndcg) + "," +
                    std::to_string(rep.k) + "," + c.hr_mode + "," +
                    std::to_string(rep.n_users_evaluated) + "," +
                    std::to_string(rep.n_users_skipped);
  if (with_diag) {
    DiagRow d = compute_diagnostics(m, ds, c);
    header += ",a_distance,cond_shift,kl_estimate,labeling_q,labeling_p";
    row += "," + csv_double(d.a_dist) + "," + csv_double(d.cond) + "," +
           csv_double(d.kl) + ",";
    if (d.has_labeling)
      row += csv_double(d.labeling.q_branch) + "," +
             csv_double(d.labeling.p_branch);
    else
      row += ",";  // no oracle without a synthetic world sidecar
    std::cout << label << ": a_distance=" << csv_double(d.a_dist)
              << " cond_shift=" << csv_double(d.cond)
              << " kl_estimate=" << csv_double(d.kl);
    if (d.has_labeling)
      std::cout << " labeling_q=" << csv_double(d.labeling.q_branch)
                << " labeling_p=" << csv_double(d.labeling.p_branch);
    std::cout << "\n";
  }
  header += ",seed,config_hash";
  // The hash identifies the computation, not its destination: rerunning the
  // resolved config into another directory must reproduce this row exactly.
  RunConfig hashed = c;
  hashed.out_dir.clear();
  row += "," + std::to_string(c.seed) + "," +
         hex64(fnv1a_str(run_config_json(hashed)));

  ensure_dir(c.out_dir);
  write_text(path_join(c.out_dir, filename), header + "\n" + row + "\n");
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  std::cout << label << ": ndcg@" << rep.k << "=" << csv_double(rep.ndcg)
            << " hr@" << rep.k << "=" << csv_double(rep.hr) << " (" << c.hr_mode
            << ", " << rep.n_users_evaluated << " users, "
            << rep.n_users_skipped << " skipped)\n";
}

}  // namespace

void cmd_evaluate(const RunConfig& c) {
  emit_report(c, c.diagnostics, "metrics.csv", "evaluate");
}

void cmd_diagnose(const RunConfig& c) {
  emit_report(c, true, "diagnostics.csv", "diagnose");
}

void cmd_ablate(const RunConfig& c, const std::vector<std::string>& components,
                int n_seeds) {
  if (n_seeds < 1) throw ConfigError("ablate: --seeds must be >= 1");
  Dataset ds = load_prepared_dataset(c.data_dir, c.binarize_threshold);
  const HrMode mode = hr_mode_from_string(c.hr_mode);
  ensure_dir(c.out_dir);

  struct Cell {
    std::string name;
    std::vector<double> val, test_ndcg, test_hr;
  };
  std::vector<Cell> cells;
  std::string per_seed =
      "name,seed,best_step,best_val_ndcg5,test_ndcg5,test_hr5,stop_reason\n";
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = n_seeds == 1 ? c.seed : static_cast<std::uint64_t>(s);
    TrainConfig tc = c.trainer;
    tc.seed = seed;
    logln("ablate: seed=" + std::to_string(seed));
    std::vector<AblationRun> runs = ablate(ds, tc, components, Rng(seed, 0));
    if (cells.empty()) {
      cells.resize(runs.size());
      for (std::size_t i = 0; i < runs.size(); ++i) cells[i].name = runs[i].name;
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      MetricsReport rep =
          evaluate(runs[i].result.best_model, ds.test, c.eval_k, mode);
      cells[i].val.push_back(runs[i].result.best_val_ndcg);
      cells[i].test_ndcg.push_back(rep.ndcg);
      cells[i].test_hr.push_back(rep.hr);
      per_seed += runs[i].name + "," + std::to_string(seed) + "," +
                  std::to_string(runs[i].result.best_step) + "," +
                  csv_double(runs[i].result.best_val_ndcg) + "," +
                  csv_double(rep.ndcg) + "," + csv_double(rep.hr) + "," +
                  stop_reason_name(runs[i].result.stop_reason) + "\n";
    }
  }

  std::string csv =
      "name,seeds,best_val_ndcg5,val_stderr,test_ndcg5,test_stderr,test_hr5\n";
  for (const Cell& cell : cells)
    csv += cell.name + "," + std::to_string(n_seeds) + "," +
           csv_double(mean_of(cell.val)) + "," + csv_double(stderr_of(cell.val)) +
           "," + csv_double(mean_of(cell.test_ndcg)) + "," +
           csv_double(stderr_of(cell.test_ndcg)) + "," +
           csv_double(mean_of(cell.test_hr)) + "\n";
  write_text(path_join(c.out_dir, "ablation.csv"), csv);
  if (n_seeds > 1)
    write_text(path_join(c.out_dir, "ablation_seeds.csv"), per_seed);
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  for (const Cell& cell : cells)
    std::cout << "ablate: " << cell.name << " val_ndcg5=" <<
        csv_double(mean_of(cell.val)) << "+-" << csv_double(stderr_of(cell.val))
              << " test_ndcg5=" << csv_double(mean_of(cell.test_ndcg)) << "\n";
}

void cmd_sweep(const RunConfig& c, const std::vector<std::string>& grid) {
  Dataset ds = load_prepared_dataset(c.data_dir, c.binarize_threshold);
  // Parse "path=v1,v2,..." axes. Only training knobs make sense per cell.
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const std::string& spec : grid) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("sweep: grid axis must look like path=v1,v2, got '" +
                        spec + "'");
    const std::string path = spec.substr(0, eq);
    if (path != "seed" && path.rfind("trainer.", 0) != 0 &&
        path.rfind("weights.", 0) != 0)
      throw ConfigError("sweep: only trainer.*, weights.* and seed are sweepable, got '" +
                        path + "'");
    std::vector<std::string> values;
    std::stringstream ss(spec.substr(eq + 1));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) values.push_back(tok);
    if (values.empty())
      throw ConfigError("sweep: axis '" + path + "' has no values");
    axes.push_back({path, values});
  }

  std::size_t n_cells = 1;
  for (const auto& [path, values] : axes) n_cells *= values.size();
  ensure_dir(c.out_dir);

  std::string header = "cell";
  for (const auto& [path, values] : axes) header += "," + path;
  header += ",best_step,best_val_ndcg5,test_ndcg5,test_hr5,best\n";
  struct Row {
    std::string cells_text;
    double val = 0;
  };
  std::vector<Row> rows;
  std::size_t best_cell = 0;
  double best_val = -1.0;
  for (std::size_t idx = 0; idx < n_cells; ++idx) {
    RunConfig cc = c;
    std::string cell_text;
    std::size_t rest = idx;
    for (const auto& [path, values] : axes) {
      const std::string& v = values[rest % values.size()];
      rest /= values.size();
      apply_override(cc, path + "=" + v);
      cell_text += "," + v;
    }
    char cell_name[32];
    std::snprintf(cell_name, sizeof cell_name, "cell_%03zu", idx);
    cc.out_dir = path_join(c.out_dir, cell_name);
    logln("sweep: " + std::string(cell_name) + cell_text);
    RunOutcome o = run_training(cc, ds, cc.out_dir);
    rows.push_back({std::to_string(idx) + cell_text + "," +
                        std::to_string(o.result.best_step) + "," +
                        csv_double(o.result.best_val_ndcg) + "," +
                        csv_double(o.test_rep.ndcg) + "," +
                        csv_double(o.test_rep.hr),
                    o.result.best_val_ndcg});
    if (o.result.best_val_ndcg > best_val) {
      best_val = o.result.best_val_ndcg;
      best_cell = idx;
    }
  }
  std::string csv = header;
  for (std::size_t idx = 0; idx < rows.size(); ++idx)
    csv += rows[idx].cells_text + "," + (idx == best_cell ? "1" : "0") + "\n";
  write_text(path_join(c.out_dir, "sweep.csv"), csv);
  save_run_config(path_join(c.out_dir, "resolved_config.json"), c);
  std::cout << "sweep: " << n_cells << " cells, best cell_" << best_cell
            << " val_ndcg5=" << csv_double(best_val) << "\n";
}

}  // namespace astrec
