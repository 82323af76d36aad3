// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_METRICS_HPP_
#define IDLMA_METRICS_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace idlma {

// SI-SDR values saturate at +/- this many dB.
inline constexpr double kSiSdrCap = 300.0;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Scale-invariant SDR in dB: 10 log10(|a s|^2 / |a s - e|^2) with
/// a = <e, s> / |s|^2.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

struct EvalReport {
  std::vector<double> si_sdr;       // per reference source
  std::vector<double> improvement;  // si_sdr minus the mixture's SI-SDR
  /// permutation[n] is the estimate index assigned to reference n.
  std::vector<std::size_t> permutation;
  double elapsed_ms = 0.0;

  double mean_si_sdr() const;
  double mean_improvement() const;
};

inline constexpr std::size_t kMaxEvalSources = 8;

/// Exhaustive search over assignments; keeps the one with the highest mean
/// SI-SDR (first in lexicographic order on ties).
EvalReport evaluate(const std::vector<std::vector<double>>& estimates,
                    const std::vector<std::vector<double>>& references,
                    std::span<const double> mixture_ref_channel);

/// One JSON line per source followed by a summary line. Indices are 1-based.
std::string format_report(const EvalReport& report);

}  // namespace idlma

#endif  // IDLMA_METRICS_HPP_
