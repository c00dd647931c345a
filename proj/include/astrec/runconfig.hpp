#pragma once

#include <cstdint>
#include <string>

#include "astrec/metrics.hpp"
#include "astrec/synth.hpp"
#include "astrec/trainer.hpp"

namespace astrec {

// Union of everything a run needs, loaded from one JSON file with dotted
// command-line overrides. Every command writes the resolved form next to its
// outputs so a run is reproducible from that snapshot alone.
struct RunConfig {
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  // Data: a prepared directory (synth/prepare output) or raw source files.
  std::string data_dir;
  std::string biased_path;
  std::string uniform_path;
  std::string format = "triples";  // triples | matrix
  std::string sep = "\t";
  bool one_based = false;
  int binarize_threshold = 3;
  double split_train = 0.05;
  double split_val = 0.05;
  double split_test = 0.90;

  SynthConfig synth;
  TrainConfig trainer;  // carries LossWeights under the "weights" section

  // evaluate / diagnose inputs.
  std::string checkpoint;
  int eval_k = 5;
  std::string hr_mode = "recall";  // recall | anyhit
  bool diagnostics = false;
  int diag_samples = 2000;
  int diag_pair_sample = 500;
  int diag_mc_draws = 2000;
};

// JSON round trip. Unknown keys are rejected so typos cannot silently load.
std::string run_config_json(const RunConfig& c);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& c);

// "section.key=value" (value parsed as a JSON literal, else a bare string).
void apply_override(RunConfig& c, const std::string& assignment);

HrMode hr_mode_from_string(const std::string& s);
char sep_char(const std::string& sep);  // "\t"/"tab" -> '\t', else first char

// FNV-1a content hash of a file, as fixed-width hex.
std::uint64_t fnv1a_file(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace astrec
