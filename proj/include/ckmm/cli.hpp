#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "ckmm/mixture.hpp"

namespace ckmm {

/// Options of every subcommand; a `--config` JSON object overrides the flags
/// using the flag names with '-' written as '_'.
struct ExperimentConfig {
  std::string command;
  std::string scenario;
  std::size_t times = 20;
  std::size_t subjects = 100;
  std::size_t count = 1;
  std::string data;
  std::string manifest;
  std::string fits;
  std::string truth;
  std::string out;
  std::string config_file;
  std::size_t clusters = 2;
  std::size_t g_min = 1;
  std::size_t g_max = 5;
  bool difference = false;
  bool standardize = false;
  bool timing = false;
  FitConfig fit;

  /// Throws config on inconsistent or missing options for `command`.
  void validate() const;
};

/// `ckmm simulate|fit|select|evaluate`. Returns the exit status; failures
/// print one line `error: <code>: <message>` to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ckmm
