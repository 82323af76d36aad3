// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_SIGNAL_IO_HPP_
#define IDLMA_SIGNAL_IO_HPP_

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "idlma/grid.hpp"

namespace idlma {

/// Time-domain signal with M equal-length channels.
struct MultichannelSignal {
  std::vector<std::vector<double>> samples;  // [channel][sample]
  double sample_rate = 0.0;

  std::size_t channels() const { return samples.size(); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }

  /// Throws std::invalid_argument if channels are ragged, empty, or the rate
  /// is not positive.
  void validate() const;

  static MultichannelSignal mono(std::vector<double> x, double rate);
};

// Instantaneous mixing: gain(m, n) applied to source n for channel m.
struct GainMixing {
  Grid<double> gain;  // M x N
};

// Convolutive mixing: taps(m, n) is the impulse response from source n to
// microphone m.
struct RirMixing {
  Grid<std::vector<double>> taps;  // M x N
};

using MixingSpec = std::variant<GainMixing, RirMixing>;

std::size_t mixing_channels(const MixingSpec& spec);
std::size_t mixing_sources(const MixingSpec& spec);

/// Checks that every row carries at least one nonzero coefficient.
void validate_mixing(const MixingSpec& spec);

enum class WavEncoding { kPcm16, kFloat32 };

class WavReadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedEncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WavWriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by simulate_mixture for shape/rate inconsistencies.
class MixingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

MultichannelSignal read_wav(const std::filesystem::path& path);

struct WavWriteReport {
  std::size_t clipped = 0;  // samples saturated to [-1, 1]
};

WavWriteReport write_wav(const std::filesystem::path& path,
                         const MultichannelSignal& signal,
                         WavEncoding encoding = WavEncoding::kPcm16);

/// Mixes single-channel sources. Convolutive output is trimmed to the source
/// length so it stays sample-aligned with the references.
MultichannelSignal simulate_mixture(const std::vector<MultichannelSignal>& sources,
                                    const MixingSpec& spec);

}  // namespace idlma

#endif  // IDLMA_SIGNAL_IO_HPP_
