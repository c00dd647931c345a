#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "astrec/commands.hpp"
#include "astrec/errors.hpp"
#include "astrec/runconfig.hpp"

namespace {

struct CliArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out, data, checkpoint;
  std::string hr_mode;
  bool diagnostics = false;
  int n_seeds = 1;
  std::string components = "A,S,E";
  std::vector<std::string> grid;
};

// Shared option block; each subcommand reuses the same resolution order:
// config file, then --set overrides in order, then direct convenience flags.
void add_common(CLI::App* sub, CliArgs& a) {
  sub->add_option("-c,--config", a.config, "JSON configuration file");
  sub->add_option("-s,--set", a.sets,
                  "dotted override, e.g. trainer.lr=0.005 (repeatable)");
  sub->add_option("-o,--out", a.out, "output directory (out_dir)");
  sub->add_option("-d,--data", a.data, "prepared data directory (data.dir)");
}

astrec::RunConfig resolve(const CliArgs& a) {
  astrec::RunConfig c =
      a.config.empty() ? astrec::RunConfig{} : astrec::load_run_config(a.config);
  for (const std::string& s : a.sets) astrec::apply_override(c, s);
  if (!a.out.empty()) c.out_dir = a.out;
  if (!a.data.empty()) c.data_dir = a.data;
  if (!a.checkpoint.empty()) c.checkpoint = a.checkpoint;
  if (!a.hr_mode.empty()) c.hr_mode = a.hr_mode;
  if (a.diagnostics) c.diagnostics = true;
  astrec::hr_mode_from_string(c.hr_mode);  // validate
  return c;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string tok = s.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"astrec: debiased recommendation training and evaluation"};
  app.require_subcommand(1);

  CliArgs a;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  CLI::App* prepare =
      app.add_subcommand("prepare", "ingest raw rating files into splits");
  CLI::App* train = app.add_subcommand("train", "train one objective");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "rank the test split from a checkpoint");
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "distribution-shift diagnostics");
  CLI::App* ablate =
      app.add_subcommand("ablate", "full run plus single-component ablations");
  CLI::App* sweep = app.add_subcommand("sweep", "Cartesian hyperparameter grid");
  for (CLI::App* sub : {synth, prepare, train, evaluate, diagnose, ablate, sweep})
    add_common(sub, a);
  for (CLI::App* sub : {evaluate, diagnose})
    sub->add_option("--checkpoint", a.checkpoint, "ASTCKPT checkpoint path");
  for (CLI::App* sub : {train, evaluate, diagnose, ablate})
    sub->add_option("--hr-mode", a.hr_mode, "recall | anyhit");
  evaluate->add_flag("--diagnostics", a.diagnostics,
                     "append shift diagnostics to the metrics row");
  for (CLI::App* sub : {train, ablate})
    sub->add_option("--seeds", a.n_seeds,
                    "run seeds 0..N-1 and report mean +- stderr");
  ablate->add_option("--components", a.components,
                     "comma list from {A,S,E} (default all)");
  sweep->add_option("-g,--grid", a.grid,
                    "axis spec path=v1,v2 (repeatable, Cartesian product)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are configuration errors
  }

  try {
    const astrec::RunConfig c = resolve(a);
    if (synth->parsed()) astrec::cmd_synth(c);
    if (prepare->parsed()) astrec::cmd_prepare(c);
    if (train->parsed()) astrec::cmd_train(c, a.n_seeds);
    if (evaluate->parsed()) astrec::cmd_evaluate(c);
    if (diagnose->parsed()) astrec::cmd_diagnose(c);
    if (ablate->parsed()) astrec::cmd_ablate(c, split_csv(a.components), a.n_seeds);
    if (sweep->parsed()) astrec::cmd_sweep(c, a.grid);
    return 0;
  } catch (const astrec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const astrec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const astrec::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const astrec::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
