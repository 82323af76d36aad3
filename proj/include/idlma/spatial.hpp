// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_SPATIAL_HPP_
#define IDLMA_SPATIAL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "idlma/complex_linalg.hpp"
#include "idlma/source_model.hpp"
#include "idlma/stft.hpp"

namespace idlma {

/// Degrees of freedom value selecting the Gaussian source model exactly.
inline constexpr double kGaussianNu = std::numeric_limits<double>::infinity();

inline bool is_gaussian(double nu) { return nu == kGaussianNu; }

/// Per-bin demixing matrices. Row n of W_i holds w_in^H, so
/// y_ijn = sum_m W_i(n, m) x_ijm.
struct DemixingStack {
  std::vector<ComplexMatrix> matrices;

  static DemixingStack identity(std::size_t bins, std::size_t sources);
  std::size_t bins() const { return matrices.size(); }
  ComplexMatrix& operator[](std::size_t i) { return matrices[i]; }
  const ComplexMatrix& operator[](std::size_t i) const { return matrices[i]; }
};

struct SeparationState {
  std::vector<ComplexSpectrogram> x;   // M observed channels
  std::vector<ComplexSpectrogram> y;   // N demixed estimates, y = W x
  std::vector<VarianceMatrix> sigma;   // N source models
  DemixingStack w;
  double nu = kGaussianNu;
  std::size_t ref_channel = 0;         // zero-based m_ref

  std::size_t bins() const { return x.front().bins(); }
  std::size_t frames() const { return x.front().frames(); }
  std::size_t sources() const { return y.size(); }

  /// Identity demixing, y = x, sigma unset.
  static SeparationState from_mixture(std::vector<ComplexSpectrogram> x, double nu,
                                      std::size_t ref_channel = 0);
  /// Shape/consistency checks; throws std::invalid_argument.
  void validate() const;
};

/// Singular demixing or weighted covariance during an update, with the
/// location where it happened.
class SeparationError : public std::runtime_error {
 public:
  SeparationError(const std::string& what, std::size_t round, std::size_t sweep, std::size_t bin,
                  std::size_t source)
      : std::runtime_error(what), round_(round), sweep_(sweep), bin_(bin), source_(source) {}
  std::size_t round() const { return round_; }
  std::size_t sweep() const { return sweep_; }
  std::size_t bin() const { return bin_; }
  std::size_t source() const { return source_; }

 private:
  std::size_t round_, sweep_, bin_, source_;
};

/// sum_{ijn} [|y|^2/sigma^2 + 2 log sigma] - 2J sum_i log|det W_i|.
double cost_gauss(const SeparationState& state);

/// sum_{ijn} [(1 + nu/2) log(1 + (2/nu)|y|^2/sigma^2) + 2 log sigma]
///   - 2J sum_i log|det W_i|.
double cost_t(const SeparationState& state);

/// cost_gauss for the Gaussian sentinel, cost_t otherwise.
double cost(const SeparationState& state);

/// Tangent-line upper bound of cost_t for auxiliary alpha (I x J per source).
double majorizer_t(const SeparationState& state, std::span<const Grid<double>> alpha);

/// alpha = 1 + (2/nu)|y|^2/sigma^2, the point where the majorizer touches cost_t.
std::vector<Grid<double>> tight_auxiliary(const SeparationState& state);

/// c = nu/(nu+2) sigma^2 + 2/(nu+2) |y|^2; sigma^2 in the Gaussian case.
double weighting(double sigma, double y_abs2, double nu);

/// U_in = (1/J) sum_j x_ij x_ij^H / c_ijn.
ComplexMatrix weighted_covariance(std::size_t bin, std::size_t source,
                                  const SeparationState& state);

/// Replaces row `source` of W_bin by the IP solution and refreshes y for that
/// (bin, source). Throws SingularMatrixError.
void ip_update(std::size_t bin, std::size_t source, SeparationState& state);

/// One pass of ip_update over all bins (ascending) and sources (ascending).
/// Bins run on up to `threads` workers; the result does not depend on it.
void ip_sweep(SeparationState& state, unsigned threads = 1);

/// y_ijn <- [W_i^{-1} (e_n o y_ij)]_{m_ref}, i.e. each estimate's image at
/// the reference microphone. Does not modify the state.
std::vector<ComplexSpectrogram> back_project(const SeparationState& state);

struct TraceRecord {
  std::size_t round = 0;
  std::size_t sweep = 0;
  double cost = 0.0;
  double wall_ms = 0.0;
};

/// JSON object per line: {"round":..,"sweep":..,"cost":..,"wall_ms":..}.
/// With include_timing=false wall_ms is written as null so traces of
/// identical runs are byte-identical.
std::string format_trace_record(const TraceRecord& r, bool include_timing);

using TraceSink = std::function<void(const TraceRecord&)>;

struct IdlmaConfig {
  double nu = kGaussianNu;
  std::size_t outer_rounds = 5;
  std::size_t inner_spatial_iters = 10;
  FloorPolicy floor = FloorPolicy::relative();
  std::size_t ref_channel = 0;
  unsigned threads = 1;
  TraceSink on_sweep;  // optional, called after every sweep
};

struct SeparationResult {
  std::vector<ComplexSpectrogram> y;  // back-projected estimates
  DemixingStack w;
  std::vector<TraceRecord> trace;
};

/// Alternates source-model estimation and IP sweeps, back-projecting at the
/// end of every round. models.size() must equal the channel count.
SeparationResult run_idlma(std::vector<ComplexSpectrogram> x,
                           std::span<const SourceModel* const> models,
                           const IdlmaConfig& config);

struct IlrmaConfig {
  std::size_t bases = 20;
  std::size_t iterations = 100;
  std::uint64_t seed = 0;
  std::size_t ref_channel = 0;
  unsigned threads = 1;
  TraceSink on_sweep;
};

/// Gaussian ILRMA: every sweep updates each source's NMF factors once and
/// then runs one IP sweep. Estimates are back-projected once at the end.
SeparationResult run_ilrma(std::vector<ComplexSpectrogram> x, const IlrmaConfig& config);

}  // namespace idlma

#endif  // IDLMA_SPATIAL_HPP_
