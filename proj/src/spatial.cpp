// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/spatial.hpp"

#include <chrono>
#include <cmath>
#include "json.hpp"

#include "idlma/parallel.hpp"

namespace idlma {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Sum of -2J log|det W_i| over bins.
long double log_det_term(const SeparationState& s) {
  long double total = 0.0L;
  const double frames = static_cast<double>(s.frames());
  for (std::size_t i = 0; i < s.bins(); ++i) total -= 2.0 * frames * log_abs_det(s.w[i]);
  return total;
}

template <class Term>
double source_cost(const SeparationState& s, Term&& term) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < s.bins(); ++i) {
    long double bin = 0.0L;
    for (std::size_t n = 0; n < s.sources(); ++n) {
      const auto sigma = s.sigma[n].sigma.row(i);
      const auto y = s.y[n].values.row(i);
      for (std::size_t j = 0; j < s.frames(); ++j) bin += term(sigma[j], std::norm(y[j]));
    }
    total += bin;
  }
  return static_cast<double>(total + log_det_term(s));
}

void require_sigma(const SeparationState& s) {
  if (s.sigma.size() != s.sources()) throw std::invalid_argument("source models not estimated");
  for (const auto& v : s.sigma)
    if (v.bins() != s.bins() || v.frames() != s.frames())
      throw std::invalid_argument("variance matrix shape mismatch");
}

void refresh_row(std::size_t bin, std::size_t source, SeparationState& s) {
  const std::size_t channels = s.x.size();
  const ComplexMatrix& w = s.w[bin];
  auto y = s.y[source].values.row(bin);
  for (std::size_t j = 0; j < s.frames(); ++j) {
    Complex acc = 0.0;
    for (std::size_t m = 0; m < channels; ++m) acc += w(source, m) * s.x[m](bin, j);
    y[j] = acc;
  }
}

SeparationError with_context(const SeparationError& e, std::size_t round, std::size_t sweep) {
  return SeparationError(e.what(), round, sweep, e.bin(), e.source());
}

}  // namespace

DemixingStack DemixingStack::identity(std::size_t bins, std::size_t sources) {
  return {std::vector<ComplexMatrix>(bins, ComplexMatrix::identity(sources))};
}

SeparationState SeparationState::from_mixture(std::vector<ComplexSpectrogram> x, double nu,
                                              std::size_t ref_channel) {
  SeparationState s;
  if (x.empty()) throw std::invalid_argument("mixture has no channels");
  s.w = DemixingStack::identity(x.front().bins(), x.size());
  s.y = x;
  s.x = std::move(x);
  s.nu = nu;
  s.ref_channel = ref_channel;
  s.validate();
  return s;
}

void SeparationState::validate() const {
  if (x.empty()) throw std::invalid_argument("mixture has no channels");
  if (y.size() != x.size())
    throw std::invalid_argument("determined separation needs as many sources as channels");
  for (const auto* group : {&x, &y})
    for (const auto& spec : *group)
      if (spec.bins() != bins() || spec.frames() != frames())
        throw std::invalid_argument("spectrogram shapes differ");
  if (w.bins() != bins()) throw std::invalid_argument("demixing stack has wrong bin count");
  for (const auto& m : w.matrices)
    if (m.size() != x.size()) throw std::invalid_argument("demixing matrix has wrong size");
  if (ref_channel >= x.size()) throw std::invalid_argument("reference channel out of range");
  if (!(nu > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
}

double weighting(double sigma, double y_abs2, double nu) {
  const double s2 = sigma * sigma;
  if (is_gaussian(nu)) return s2;
  return nu / (nu + 2.0) * s2 + 2.0 / (nu + 2.0) * y_abs2;
}

double cost_gauss(const SeparationState& state) {
  require_sigma(state);
  return source_cost(state, [](double sigma, double y2) {
    return y2 / (sigma * sigma) + 2.0 * std::log(sigma);
  });
}

double cost_t(const SeparationState& state) {
  require_sigma(state);
  const double nu = state.nu;
  if (is_gaussian(nu)) return cost_gauss(state);
  return source_cost(state, [nu](double sigma, double y2) {
    return (1.0 + nu / 2.0) * std::log1p(2.0 / nu * y2 / (sigma * sigma)) + 2.0 * std::log(sigma);
  });
}

double cost(const SeparationState& state) {
  return is_gaussian(state.nu) ? cost_gauss(state) : cost_t(state);
}

std::vector<Grid<double>> tight_auxiliary(const SeparationState& state) {
  require_sigma(state);
  std::vector<Grid<double>> alpha;
  for (std::size_t n = 0; n < state.sources(); ++n) {
    Grid<double> a(state.bins(), state.frames());
    for (std::size_t i = 0; i < state.bins(); ++i)
      for (std::size_t j = 0; j < state.frames(); ++j) {
        const double sigma = state.sigma[n].sigma(i, j);
        a(i, j) = 1.0 + 2.0 / state.nu * std::norm(state.y[n](i, j)) / (sigma * sigma);
      }
    alpha.push_back(std::move(a));
  }
  return alpha;
}

double majorizer_t(const SeparationState& state, std::span<const Grid<double>> alpha) {
  require_sigma(state);
  if (is_gaussian(state.nu)) throw std::invalid_argument("majorizer needs finite nu");
  if (alpha.size() != state.sources()) throw std::invalid_argument("one alpha grid per source");
  const double nu = state.nu;
  const double weight = 1.0 + nu / 2.0;
  long double total = 0.0L;
  for (std::size_t i = 0; i < state.bins(); ++i) {
    long double bin = 0.0L;
    for (std::size_t n = 0; n < state.sources(); ++n)
      for (std::size_t j = 0; j < state.frames(); ++j) {
        const double sigma = state.sigma[n].sigma(i, j);
        const double a = alpha[n](i, j);
        const double z = 1.0 + 2.0 / nu * std::norm(state.y[n](i, j)) / (sigma * sigma);
        bin += weight / a * (z - a) + weight * std::log(a) + 2.0 * std::log(sigma);
      }
    total += bin;
  }
  return static_cast<double>(total + log_det_term(state));
}

ComplexMatrix weighted_covariance(std::size_t bin, std::size_t source,
                                  const SeparationState& state) {
  const std::size_t channels = state.x.size();
  const std::size_t frames = state.frames();
  const auto sigma = state.sigma[source].sigma.row(bin);
  const auto y = state.y[source].values.row(bin);
  ComplexMatrix u(channels);
  ComplexVector x(channels);
  for (std::size_t j = 0; j < frames; ++j) {
    for (std::size_t m = 0; m < channels; ++m) x[m] = state.x[m](bin, j);
    const double inv_c = 1.0 / weighting(sigma[j], std::norm(y[j]), state.nu);
    for (std::size_t r = 0; r < channels; ++r) {
      const Complex xr = x[r] * inv_c;
      for (std::size_t c = r; c < channels; ++c) u(r, c) += xr * std::conj(x[c]);
    }
  }
  const double scale = 1.0 / static_cast<double>(frames);
  for (std::size_t r = 0; r < channels; ++r) {
    u(r, r) = Complex(u(r, r).real() * scale, 0.0);
    for (std::size_t c = r + 1; c < channels; ++c) {
      u(r, c) *= scale;
      u(c, r) = std::conj(u(r, c));
    }
  }
  return u;
}

void ip_update(std::size_t bin, std::size_t source, SeparationState& state) {
  const std::size_t channels = state.x.size();
  const ComplexMatrix u = weighted_covariance(bin, source, state);
  ComplexMatrix& w = state.w[bin];

  ComplexVector e(channels);
  e[source] = 1.0;
  ComplexVector filter = solve(w * u, e);
  const double q = hermitian_quadratic(filter, u);
  if (!(q > 0.0) || !std::isfinite(q))
    throw SingularMatrixError("weighted covariance is not positive definite", q);
  const double norm = 1.0 / std::sqrt(q);
  for (std::size_t m = 0; m < channels; ++m) w(source, m) = std::conj(filter[m] * norm);
  refresh_row(bin, source, state);
}

void ip_sweep(SeparationState& state, unsigned threads) {
  require_sigma(state);
  parallel_for(state.bins(), threads, [&](std::size_t i) {
    for (std::size_t n = 0; n < state.sources(); ++n) {
      try {
        ip_update(i, n, state);
      } catch (const SingularMatrixError& e) {
        throw SeparationError(std::string("IP update failed: ") + e.what(), 0, 0, i, n);
      }
    }
  });
}

std::vector<ComplexSpectrogram> back_project(const SeparationState& state) {
  std::vector<ComplexSpectrogram> out = state.y;
  for (std::size_t i = 0; i < state.bins(); ++i) {
    ComplexMatrix inv;
    try {
      inv = inverse(state.w[i]);
    } catch (const SingularMatrixError& e) {
      throw SeparationError(std::string("back-projection failed: ") + e.what(), 0, 0, i, 0);
    }
    for (std::size_t n = 0; n < state.sources(); ++n) {
      const Complex gain = inv(state.ref_channel, n);
      for (auto& v : out[n].values.row(i)) v *= gain;
    }
  }
  return out;
}

std::string format_trace_record(const TraceRecord& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["sweep"] = r.sweep;
  j["cost"] = r.cost;
  if (include_timing)
    j["wall_ms"] = r.wall_ms;
  else
    j["wall_ms"] = nullptr;
  return j.dump();
}

SeparationResult run_idlma(std::vector<ComplexSpectrogram> x,
                           std::span<const SourceModel* const> models,
                           const IdlmaConfig& config) {
  if (models.size() != x.size())
    throw std::invalid_argument("need one source model per channel (" +
                                std::to_string(x.size()) + "), got " +
                                std::to_string(models.size()));
  SeparationState state = SeparationState::from_mixture(std::move(x), config.nu,
                                                        config.ref_channel);
  SeparationResult result;
  std::vector<ComplexSpectrogram> estimates = state.y;

  for (std::size_t round = 0; round < config.outer_rounds; ++round) {
    state.sigma.clear();
    for (std::size_t n = 0; n < state.sources(); ++n)
      state.sigma.push_back(estimate_variance(*models[n], estimates[n], config.floor));
    for (std::size_t sweep = 0; sweep < config.inner_spatial_iters; ++sweep) {
      const auto start = Clock::now();
      try {
        ip_sweep(state, config.threads);
      } catch (const SeparationError& e) {
        throw with_context(e, round, sweep);
      }
      TraceRecord rec{round, sweep, cost(state), elapsed_ms(start)};
      result.trace.push_back(rec);
      if (config.on_sweep) config.on_sweep(rec);
    }
    try {
      estimates = back_project(state);
    } catch (const SeparationError& e) {
      throw with_context(e, round, config.inner_spatial_iters);
    }
  }
  result.y = std::move(estimates);
  result.w = std::move(state.w);
  return result;
}

SeparationResult run_ilrma(std::vector<ComplexSpectrogram> x, const IlrmaConfig& config) {
  SeparationState state =
      SeparationState::from_mixture(std::move(x), kGaussianNu, config.ref_channel);
  std::vector<NmfFactors> factors;
  for (std::size_t n = 0; n < state.sources(); ++n)
    factors.push_back(nmf_init(state.bins(), state.frames(), config.bases, config.seed + n));
  state.sigma.resize(state.sources());

  SeparationResult result;
  for (std::size_t sweep = 0; sweep < config.iterations; ++sweep) {
    const auto start = Clock::now();
    for (std::size_t n = 0; n < state.sources(); ++n) {
      factors[n] = nmf_model_update(std::move(factors[n]), state.y[n]);
      state.sigma[n] = nmf_variance(factors[n]);
    }
    try {
      ip_sweep(state, config.threads);
    } catch (const SeparationError& e) {
      throw with_context(e, 0, sweep);
    }
    TraceRecord rec{0, sweep, cost_gauss(state), elapsed_ms(start)};
    result.trace.push_back(rec);
    if (config.on_sweep) config.on_sweep(rec);
  }
  try {
    result.y = back_project(state);
  } catch (const SeparationError& e) {
    throw with_context(e, 0, config.iterations);
  }
  result.w = std::move(state.w);
  return result;
}

}  // namespace idlma
