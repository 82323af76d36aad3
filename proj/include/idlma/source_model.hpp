// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_SOURCE_MODEL_HPP_
#define IDLMA_SOURCE_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>

#include "idlma/grid.hpp"
#include "idlma/mlp.hpp"
#include "idlma/stft.hpp"

namespace idlma {

/// Source amplitude model sigma(i, j) of one source; amplitude, not power.
struct VarianceMatrix {
  Grid<double> sigma;
  double epsilon = 0.0;  // floor that was applied

  std::size_t bins() const { return sigma.rows(); }
  std::size_t frames() const { return sigma.cols(); }
};

/// Lower clamp on sigma. Relative mode resolves
/// eps = value * mean(pre-floor output); fixed mode uses value directly.
struct FloorPolicy {
  enum class Mode { kFixed, kRelative };
  Mode mode = Mode::kRelative;
  double value = 0.1;

  static FloorPolicy fixed(double eps) { return {Mode::kFixed, eps}; }
  static FloorPolicy relative(double coefficient = 0.1) { return {Mode::kRelative, coefficient}; }
};

// Absolute lower bound on any resolved floor, so sigma stays strictly positive
// even for an all-zero model output.
inline constexpr double kMinimumFloor = 1e-12;

double resolve_floor(const Grid<double>& pre_floor, const FloorPolicy& policy);

/// sigma <- max(sigma, eps) elementwise.
VarianceMatrix apply_floor(Grid<double> pre_floor, double epsilon);

class ShapeMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SourceModel {
 public:
  virtual ~SourceModel() = default;
  /// Pre-floor amplitude estimate for the current source estimate y.
  virtual Grid<double> magnitudes(const ComplexSpectrogram& y) const = 0;
};

VarianceMatrix estimate_variance(const SourceModel& model, const ComplexSpectrogram& y,
                                 const FloorPolicy& floor);

/// Returns |reference| regardless of the estimate it is given.
class OracleModel final : public SourceModel {
 public:
  explicit OracleModel(ComplexSpectrogram reference);
  Grid<double> magnitudes(const ComplexSpectrogram& y) const override;

 private:
  Grid<double> magnitude_;
};

/// Per-frame network inference on |y| with context stacking.
class DnnModel final : public SourceModel {
 public:
  explicit DnnModel(MlpNetwork network, unsigned threads = 1);
  Grid<double> magnitudes(const ComplexSpectrogram& y) const override;
  const MlpNetwork& network() const { return net_; }

 private:
  MlpNetwork net_;
  unsigned threads_;
};

std::unique_ptr<SourceModel> oracle_model(ComplexSpectrogram reference);
std::unique_ptr<SourceModel> dnn_model(MlpNetwork network, unsigned threads = 1);

Grid<double> magnitude(const ComplexSpectrogram& y);

// ---------------------------------------------------------------------------
// Low-rank (NMF) model for the blind ILRMA baseline: sigma^p = T V.

class UnsupportedConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kNmfFloor = 1e-12;

struct NmfFactors {
  Grid<double> bases;        // T, I x K
  Grid<double> activations;  // V, K x J
  int domain = 2;            // p

  std::size_t rank() const { return bases.cols(); }
};

/// Uniform (0, 1] entries drawn from a seeded mt19937_64.
NmfFactors nmf_init(std::size_t bins, std::size_t frames, std::size_t rank, std::uint64_t seed);

/// T V, i.e. sigma^2 for the Gaussian model.
Grid<double> nmf_power(const NmfFactors& factors);
VarianceMatrix nmf_variance(const NmfFactors& factors);

/// One multiplicative pass (bases, then activations) that does not increase
/// sum |y|^2 / sigma^2 + 2 log sigma. Only p = 2 is supported.
NmfFactors nmf_model_update(NmfFactors factors, const ComplexSpectrogram& y);

/// sum |y|^2 / (TV) + log(TV).
double nmf_objective(const NmfFactors& factors, const ComplexSpectrogram& y);

}  // namespace idlma

#endif  // IDLMA_SOURCE_MODEL_HPP_
