// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_CLI_HPP_
#define IDLMA_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "idlma/signal_io.hpp"

namespace idlma::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidation = 2,
  kNumerical = 3,
  kIo = 4,
};

/// Entry point behind the `idlma` executable. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// {"type": "gain", "rows": [[..], ..]} or
/// {"type": "rir", "rows": [[[taps], ..], ..]}.
MixingSpec parse_mixing_spec(const std::string& text);
MixingSpec load_mixing_spec(const std::filesystem::path& path);
std::string format_mixing_spec(const MixingSpec& spec);

/// Milliseconds to samples, rounded to the nearest even count.
std::size_t ms_to_even_samples(double ms, double sample_rate);

}  // namespace idlma::cli

#endif  // IDLMA_CLI_HPP_
