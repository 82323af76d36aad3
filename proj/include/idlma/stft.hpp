// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_STFT_HPP_
#define IDLMA_STFT_HPP_

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "idlma/grid.hpp"

namespace idlma {

using Complex = std::complex<double>;

/// Hamming-windowed STFT framing. window_len must be even and hop in
/// (0, window_len].
struct StftConfig {
  std::size_t window_len = 512;
  std::size_t hop = 256;

  void validate() const;
  std::size_t bins() const { return window_len / 2 + 1; }
  /// ceil((length - window_len) / hop) + 1; the last frame is zero-padded.
  std::size_t frame_count(std::size_t length) const;

  bool operator==(const StftConfig&) const = default;
};

class StftError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One-sided spectrogram: values(i, j) is bin i of frame j.
struct ComplexSpectrogram {
  StftConfig config;
  Grid<Complex> values;

  std::size_t bins() const { return values.rows(); }
  std::size_t frames() const { return values.cols(); }
  Complex& operator()(std::size_t i, std::size_t j) { return values(i, j); }
  const Complex& operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Periodic (DFT-even) Hamming window 0.54 - 0.46 cos(2 pi n / L).
std::vector<double> hamming_window(std::size_t length);

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& config);

/// Weighted overlap-add inverse. Overlapping frames are summed with the
/// analysis window applied again and divided by the summed squared window
/// (floored at 1e-10).
std::vector<double> istft(const ComplexSpectrogram& spec, const StftConfig& config,
                          std::size_t out_length);

}  // namespace idlma

#endif  // IDLMA_STFT_HPP_
