#include "astrec/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "astrec/errors.hpp"
#include "astrec/model.hpp"
#include "json.hpp"

namespace astrec {

namespace {

using nlohmann::json;

json weights_json(const LossWeights& w) {
  return {{"alpha", w.alpha},         {"beta", w.beta},
          {"gamma", w.gamma},         {"rho", w.rho},
          {"ips_clip", w.ips_clip},   {"entropy_updates_head",
                                       w.entropy_updates_head}};
}

json to_json(const RunConfig& c) {
  json j;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["data"] = {{"dir", c.data_dir},
               {"biased_path", c.biased_path},
               {"uniform_path", c.uniform_path},
               {"format", c.format},
               {"sep", c.sep},
               {"one_based", c.one_based},
               {"binarize_threshold", c.binarize_threshold},
               {"split_train", c.split_train},
               {"split_val", c.split_val},
               {"split_test", c.split_test}};
  const SynthConfig& s = c.synth;
  j["synth"] = {{"n_users", s.n_users},
                {"n_items", s.n_items},
                {"k", s.k},
                {"sigma_factor", s.sigma_factor},
                {"sigma_r", s.sigma_r},
                {"sigma_o", s.sigma_o},
                {"lambda_conf", s.lambda_conf},
                {"target_density", s.target_density},
                {"uniform_test_pairs", s.uniform_test_pairs},
                {"seed", s.seed}};
  const TrainConfig& t = c.trainer;
  j["trainer"] = {{"objective", objective_name(t.objective)},
                  {"variant", to_string(t.variant)},
                  {"lr", t.lr},
                  {"critic_lr", t.critic_lr},
                  {"critic_steps", t.critic_steps},
                  {"weight_decay", t.weight_decay},
                  {"max_steps", t.max_steps},
                  {"batch_size_d", t.batch_size_d},
                  {"batch_size_q", t.batch_size_q},
                  {"teacher_refresh", t.teacher_refresh},
                  {"eval_every", t.eval_every},
                  {"patience", t.patience},
                  {"k", t.k},
                  {"dropout_rate", t.dropout_rate},
                  {"critic_hidden", t.critic_hidden},
                  {"implicit_negatives", t.implicit_negatives},
                  {"neg_ratio", t.neg_ratio},
                  {"eval_k", t.eval_k},
                  {"propensity_tau", t.propensity_tau}};
  j["weights"] = weights_json(t.weights);
  j["eval"] = {{"checkpoint", c.checkpoint},
               {"k", c.eval_k},
               {"hr_mode", c.hr_mode},
               {"diagnostics", c.diagnostics}};
  j["diag"] = {{"samples", c.diag_samples},
               {"pair_sample", c.diag_pair_sample},
               {"mc_draws", c.diag_mc_draws}};
  return j;
}

// Overlay src onto dst, insisting every key already exists in the default
// skeleton: unknown keys are configuration errors, not silent no-ops.
void merge_checked(json& dst, const json& src, const std::string& path) {
  if (!src.is_object())
    throw ConfigError("config: expected an object at '" +
                      (path.empty() ? "<root>" : path) + "'");
  for (const auto& [key, value] : src.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!dst.contains(key))
      throw ConfigError("config: unknown key '" + here + "'");
    if (dst[key].is_object()) {
      merge_checked(dst[key], value, here);
    } else if (value.is_object() || value.is_array()) {
      throw ConfigError("config: '" + here + "' takes a scalar value");
    } else {
      dst[key] = value;
    }
  }
}

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + where + "': " + j.dump());
  }
}

RunConfig from_merged(const json& j) {
  RunConfig c;
  c.out_dir = get_as<std::string>(j["out_dir"], "out_dir");
  c.seed = get_as<std::uint64_t>(j["seed"], "seed");
  const json& d = j["data"];
  c.data_dir = get_as<std::string>(d["dir"], "data.dir");
  c.biased_path = get_as<std::string>(d["biased_path"], "data.biased_path");
  c.uniform_path = get_as<std::string>(d["uniform_path"], "data.uniform_path");
  c.format = get_as<std::string>(d["format"], "data.format");
  c.sep = get_as<std::string>(d["sep"], "data.sep");
  c.one_based = get_as<bool>(d["one_based"], "data.one_based");
  c.binarize_threshold =
      get_as<int>(d["binarize_threshold"], "data.binarize_threshold");
  c.split_train = get_as<double>(d["split_train"], "data.split_train");
  c.split_val = get_as<double>(d["split_val"], "data.split_val");
  c.split_test = get_as<double>(d["split_test"], "data.split_test");
  const json& s = j["synth"];
  c.synth.n_users = get_as<int>(s["n_users"], "synth.n_users");
  c.synth.n_items = get_as<int>(s["n_items"], "synth.n_items");
  c.synth.k = get_as<int>(s["k"], "synth.k");
  c.synth.sigma_factor = get_as<double>(s["sigma_factor"], "synth.sigma_factor");
  c.synth.sigma_r = get_as<double>(s["sigma_r"], "synth.sigma_r");
  c.synth.sigma_o = get_as<double>(s["sigma_o"], "synth.sigma_o");
  c.synth.lambda_conf = get_as<double>(s["lambda_conf"], "synth.lambda_conf");
  c.synth.target_density =
      get_as<double>(s["target_density"], "synth.target_density");
  c.synth.uniform_test_pairs =
      get_as<long long>(s["uniform_test_pairs"], "synth.uniform_test_pairs");
  c.synth.seed = get_as<std::uint64_t>(s["seed"], "synth.seed");
  const json& t = j["trainer"];
  c.trainer.objective =
      objective_from_string(get_as<std::string>(t["objective"], "trainer.objective"));
  c.trainer.variant =
      variant_from_string(get_as<std::string>(t["variant"], "trainer.variant"));
  c.trainer.lr = get_as<double>(t["lr"], "trainer.lr");
  c.trainer.critic_lr = get_as<double>(t["critic_lr"], "trainer.critic_lr");
  c.trainer.critic_steps = get_as<int>(t["critic_steps"], "trainer.critic_steps");
  c.trainer.weight_decay =
      get_as<double>(t["weight_decay"], "trainer.weight_decay");
  c.trainer.max_steps = get_as<long long>(t["max_steps"], "trainer.max_steps");
  c.trainer.batch_size_d = get_as<int>(t["batch_size_d"], "trainer.batch_size_d");
  c.trainer.batch_size_q = get_as<int>(t["batch_size_q"], "trainer.batch_size_q");
  c.trainer.teacher_refresh =
      get_as<int>(t["teacher_refresh"], "trainer.teacher_refresh");
  c.trainer.eval_every = get_as<int>(t["eval_every"], "trainer.eval_every");
  c.trainer.patience = get_as<int>(t["patience"], "trainer.patience");
  c.trainer.k = get_as<int>(t["k"], "trainer.k");
  c.trainer.dropout_rate = get_as<double>(t["dropout_rate"], "trainer.dropout_rate");
  c.trainer.critic_hidden = get_as<int>(t["critic_hidden"], "trainer.critic_hidden");
  c.trainer.implicit_negatives =
      get_as<bool>(t["implicit_negatives"], "trainer.implicit_negatives");
  c.trainer.neg_ratio = get_as<int>(t["neg_ratio"], "trainer.neg_ratio");
  c.trainer.eval_k = get_as<int>(t["eval_k"], "trainer.eval_k");
  c.trainer.propensity_tau =
      get_as<double>(t["propensity_tau"], "trainer.propensity_tau");
  const json& w = j["weights"];
  c.trainer.weights.alpha = get_as<double>(w["alpha"], "weights.alpha");
  c.trainer.weights.beta = get_as<double>(w["beta"], "weights.beta");
  c.trainer.weights.gamma = get_as<double>(w["gamma"], "weights.gamma");
  c.trainer.weights.rho = get_as<double>(w["rho"], "weights.rho");
  c.trainer.weights.ips_clip = get_as<double>(w["ips_clip"], "weights.ips_clip");
  c.trainer.weights.entropy_updates_head =
      get_as<bool>(w["entropy_updates_head"], "weights.entropy_updates_head");
  const json& e = j["eval"];
  c.checkpoint = get_as<std::string>(e["checkpoint"], "eval.checkpoint");
  c.eval_k = get_as<int>(e["k"], "eval.k");
  c.hr_mode = get_as<std::string>(e["hr_mode"], "eval.hr_mode");
  c.diagnostics = get_as<bool>(e["diagnostics"], "eval.diagnostics");
  const json& g = j["diag"];
  c.diag_samples = get_as<int>(g["samples"], "diag.samples");
  c.diag_pair_sample = get_as<int>(g["pair_sample"], "diag.pair_sample");
  c.diag_mc_draws = get_as<int>(g["mc_draws"], "diag.mc_draws");
  c.trainer.seed = c.seed;
  hr_mode_from_string(c.hr_mode);  // validate early
  return c;
}

RunConfig overlay(const RunConfig& base, const json& patch) {
  json j = to_json(base);
  merge_checked(j, patch, "");
  return from_merged(j);
}

}  // namespace

std::string run_config_json(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return overlay(RunConfig{}, patch);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw DataError("config: cannot write '" + path + "'");
  out << run_config_json(c);
  if (!out) throw DataError("config: write failed for '" + path + "'");
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must look like section.key=value, got '" +
                      assignment + "'");
  const std::string dotted = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
    if (value.is_object() || value.is_array())
      value = raw;  // structured overrides stay plain strings
  } catch (const json::exception&) {
    value = raw;  // bare word: treat as a string
  }
  // Build the nested single-key patch along the dotted path.
  json patch = value;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(dotted.substr(start));
      break;
    }
    parts.push_back(dotted.substr(start, dot - start));
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty())
      throw ConfigError("config: empty path segment in '" + dotted + "'");
    patch = json{{*it, patch}};
  }
  c = overlay(c, patch);
}

HrMode hr_mode_from_string(const std::string& s) {
  if (s == "recall") return HrMode::Recall;
  if (s == "anyhit") return HrMode::AnyHit;
  throw ConfigError("config: hr_mode must be recall or anyhit, got '" + s + "'");
}

char sep_char(const std::string& sep) {
  if (sep == "\\t" || sep == "tab" || sep == "\t") return '\t';
  if (sep.size() != 1)
    throw ConfigError("config: separator must be one character, got '" + sep + "'");
  return sep[0];
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash: cannot open '" + path + "'");
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace astrec
