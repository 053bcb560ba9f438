#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "tfn/ensemble.hpp"
#include "tfn/model.hpp"
#include "tfn/training.hpp"

namespace tfn::cli {

// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kIo = 4,
  kFormat = 5,
};

// Everything a config file may set: model, training and fusion keys.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  FusionParams fusion;
};

const std::set<std::string> &run_config_keys();

// Parses `file` (may be empty for defaults), then applies `overrides`
// ("key=value", later wins). Unknown keys and invalid values are ConfigErrors.
RunConfig load_run_config(const std::string &file, const std::vector<std::string> &overrides);

// Inserts ".s<seed>" before the extension: model.tfn -> model.s3.tfn.
std::string seed_suffixed(const std::string &path, std::uint64_t seed);

// Entry point of the `tfn` tool; returns the process exit code.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace tfn::cli
