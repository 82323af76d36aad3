// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

namespace idlma {

namespace {

// FFTW planning is not thread-safe; execution on a finished plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        time_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        freq_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_.get(), freq_.get(),
                                    FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_.get(), time_.get(),
                                    FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* time() { return time_.get(); }
  fftw_complex* freq() { return freq_.get(); }
  void forward() { fftw_execute(forward_); }
  // Unnormalized: the caller divides by n.
  void inverse() { fftw_execute(inverse_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwFree> time_;
  std::unique_ptr<fftw_complex, FftwFree> freq_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace

void StftConfig::validate() const {
  if (window_len < 2 || window_len % 2 != 0)
    throw StftError("window length must be even and at least 2");
  if (hop == 0 || hop > window_len) throw StftError("hop must be in (0, window_len]");
}

std::size_t StftConfig::frame_count(std::size_t length) const {
  if (length < window_len) return 0;
  return (length - window_len + hop - 1) / hop + 1;
}

std::vector<double> hamming_window(std::size_t length) {
  std::vector<double> w(length, 1.0);
  const double denom = static_cast<double>(length);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
  return w;
}

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& config) {
  config.validate();
  if (signal.size() < config.window_len)
    throw StftError("signal of " + std::to_string(signal.size()) +
                    " samples is shorter than the window (" +
                    std::to_string(config.window_len) + ")");
  const std::size_t frames = config.frame_count(signal.size());
  const std::size_t bins = config.bins();
  const auto window = hamming_window(config.window_len);

  ComplexSpectrogram spec{config, Grid<Complex>(bins, frames)};
  RealFft fft(config.window_len);
  for (std::size_t j = 0; j < frames; ++j) {
    const std::size_t start = j * config.hop;
    for (std::size_t n = 0; n < config.window_len; ++n) {
      const std::size_t t = start + n;
      fft.time()[n] = t < signal.size() ? signal[t] * window[n] : 0.0;
    }
    fft.forward();
    for (std::size_t i = 0; i < bins; ++i)
      spec(i, j) = Complex(fft.freq()[i][0], fft.freq()[i][1]);
  }
  return spec;
}

std::vector<double> istft(const ComplexSpectrogram& spec, const StftConfig& config,
                          std::size_t out_length) {
  config.validate();
  if (!(spec.config == config)) throw StftError("spectrogram was built with another config");
  if (spec.bins() != config.bins())
    throw StftError("spectrogram has " + std::to_string(spec.bins()) + " bins, expected " +
                    std::to_string(config.bins()));
  if (config.frame_count(out_length) != spec.frames())
    throw StftError("output length " + std::to_string(out_length) + " implies " +
                    std::to_string(config.frame_count(out_length)) + " frames, spectrogram has " +
                    std::to_string(spec.frames()));

  const std::size_t len = config.window_len;
  const auto window = hamming_window(len);
  const std::size_t span = (spec.frames() - 1) * config.hop + len;
  std::vector<double> acc(span, 0.0);
  std::vector<double> norm(span, 0.0);

  RealFft fft(len);
  const double scale = 1.0 / static_cast<double>(len);
  for (std::size_t j = 0; j < spec.frames(); ++j) {
    for (std::size_t i = 0; i < spec.bins(); ++i) {
      fft.freq()[i][0] = spec(i, j).real();
      fft.freq()[i][1] = spec(i, j).imag();
    }
    fft.inverse();
    const std::size_t start = j * config.hop;
    for (std::size_t n = 0; n < len; ++n) {
      acc[start + n] += fft.time()[n] * scale * window[n];
      norm[start + n] += window[n] * window[n];
    }
  }

  std::vector<double> out(out_length);
  for (std::size_t t = 0; t < out_length; ++t) out[t] = acc[t] / std::max(norm[t], 1e-10);
  return out;
}

}  // namespace idlma
