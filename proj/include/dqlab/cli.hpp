#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace dqlab {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;   // bad config, missing input, load failure
inline constexpr int kExitNumeric = 3;  // non-finite loss or gradient

struct CliOptions {
  std::string config;      // train
  std::string checkpoint;  // eval, grid, sample
  std::string out;         // output directory override
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k_eval;
  std::size_t n = 1000;  // sample count
  std::optional<std::size_t> resolution;
  std::optional<double> lo, hi;
};

// Each command reports progress on `log`, errors on `err`, and returns an exit code.
int cmd_train(const CliOptions& opts, std::ostream& log, std::ostream& err);
int cmd_eval(const CliOptions& opts, std::ostream& log, std::ostream& err);
int cmd_grid(const CliOptions& opts, std::ostream& log, std::ostream& err);
int cmd_sample(const CliOptions& opts, std::ostream& log, std::ostream& err);

/// Full command line: `dqlab <train|eval|grid|sample> [flags]`.
int run_cli(int argc, char** argv);

}  // namespace dqlab
