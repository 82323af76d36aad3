// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace idlma {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw MetricError("estimate and reference lengths differ (" +
                      std::to_string(estimate.size()) + " vs " +
                      std::to_string(reference.size()) + ")");
  double ref_energy = 0.0, cross = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    ref_energy += reference[t] * reference[t];
    cross += estimate[t] * reference[t];
  }
  if (ref_energy == 0.0) throw MetricError("reference signal is all zeros");
  const double alpha = cross / ref_energy;
  double target = 0.0, error = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double s = alpha * reference[t];
    target += s * s;
    const double d = s - estimate[t];
    error += d * d;
  }
  if (target == 0.0) return -kSiSdrCap;
  if (error == 0.0) return kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / error), -kSiSdrCap, kSiSdrCap);
}

double EvalReport::mean_si_sdr() const {
  return si_sdr.empty() ? 0.0
                        : std::accumulate(si_sdr.begin(), si_sdr.end(), 0.0) /
                              static_cast<double>(si_sdr.size());
}

double EvalReport::mean_improvement() const {
  return improvement.empty() ? 0.0
                             : std::accumulate(improvement.begin(), improvement.end(), 0.0) /
                                   static_cast<double>(improvement.size());
}

EvalReport evaluate(const std::vector<std::vector<double>>& estimates,
                    const std::vector<std::vector<double>>& references,
                    std::span<const double> mixture_ref_channel) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = references.size();
  if (n == 0) throw MetricError("no reference signals");
  if (n > kMaxEvalSources)
    throw MetricError("at most " + std::to_string(kMaxEvalSources) + " sources are supported");
  if (estimates.size() != n)
    throw MetricError(std::to_string(estimates.size()) + " estimates for " + std::to_string(n) +
                      " references");

  // scores[r][e]: SI-SDR of estimate e against reference r.
  std::vector<std::vector<double>> scores(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t e = 0; e < n; ++e) scores[r][e] = si_sdr(estimates[e], references[r]);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += scores[r][perm[r]];
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport report;
  report.permutation = best;
  for (std::size_t r = 0; r < n; ++r) {
    const double score = scores[r][best[r]];
    report.si_sdr.push_back(score);
    report.improvement.push_back(score - si_sdr(mixture_ref_channel, references[r]));
  }
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  std::vector<std::size_t> one_based;
  for (std::size_t r = 0; r < report.si_sdr.size(); ++r) {
    nlohmann::ordered_json line;
    line["source"] = r + 1;
    line["estimate"] = report.permutation[r] + 1;
    line["si_sdr_db"] = report.si_sdr[r];
    line["si_sdr_improvement_db"] = report.improvement[r];
    out += line.dump() + "\n";
    one_based.push_back(report.permutation[r] + 1);
  }
  nlohmann::ordered_json summary;
  summary["permutation"] = one_based;
  summary["mean_si_sdr_db"] = report.mean_si_sdr();
  summary["mean_si_sdr_improvement_db"] = report.mean_improvement();
  summary["elapsed_ms"] = report.elapsed_ms;
  out += summary.dump() + "\n";
  return out;
}

}  // namespace idlma
