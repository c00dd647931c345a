#pragma once

#include <string>
#include <vector>

#include "astrec/data.hpp"
#include "astrec/runconfig.hpp"
#include "astrec/synth.hpp"

namespace astrec {

// Subcommand bodies. Each throws the error taxonomy (tools/main.cpp maps it
// to exit codes), writes results under c.out_dir plus a resolved-config
// snapshot, prints a result summary to stdout and progress to stderr.

void cmd_synth(const RunConfig& c);
void cmd_prepare(const RunConfig& c);
void cmd_train(const RunConfig& c, int n_seeds = 1);
void cmd_evaluate(const RunConfig& c);
void cmd_diagnose(const RunConfig& c);
void cmd_ablate(const RunConfig& c, const std::vector<std::string>& components,
                int n_seeds = 1);
void cmd_sweep(const RunConfig& c, const std::vector<std::string>& grid);

// Shared plumbing, exposed for tests.
Dataset load_prepared_dataset(const std::string& dir, int threshold = 3);
void save_world(const std::string& path, const SynthWorld& w);
SynthWorld load_world(const std::string& path);
std::string csv_double(double v);  // shortest exact decimal, round-trips

}  // namespace astrec
