// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "idlma/parallel.hpp"

namespace idlma {

namespace {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

Grid<double> magnitude(const ComplexSpectrogram& y) {
  Grid<double> m(y.bins(), y.frames());
  auto out = m.data();
  auto in = y.values.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::abs(in[k]);
  return m;
}

double resolve_floor(const Grid<double>& pre_floor, const FloorPolicy& policy) {
  if (!(policy.value >= 0.0) || !std::isfinite(policy.value))
    throw std::invalid_argument("floor value must be finite and nonnegative");
  double eps = policy.value;
  if (policy.mode == FloorPolicy::Mode::kRelative) {
    double sum = 0.0;
    for (double v : pre_floor.data()) sum += v;
    const double mean = pre_floor.size() ? sum / static_cast<double>(pre_floor.size()) : 0.0;
    eps = policy.value * mean;
  }
  return std::max(eps, kMinimumFloor);
}

VarianceMatrix apply_floor(Grid<double> pre_floor, double epsilon) {
  for (double& v : pre_floor.data()) {
    if (!std::isfinite(v)) throw std::domain_error("source model produced a non-finite value");
    v = std::max(v, epsilon);
  }
  return {std::move(pre_floor), epsilon};
}

VarianceMatrix estimate_variance(const SourceModel& model, const ComplexSpectrogram& y,
                                 const FloorPolicy& floor) {
  Grid<double> raw = model.magnitudes(y);
  if (raw.rows() != y.bins() || raw.cols() != y.frames())
    throw ShapeMismatchError("model output " + shape_string(raw.rows(), raw.cols()) +
                             " does not match spectrogram " + shape_string(y.bins(), y.frames()));
  const double eps = resolve_floor(raw, floor);
  return apply_floor(std::move(raw), eps);
}

OracleModel::OracleModel(ComplexSpectrogram reference) : magnitude_(magnitude(reference)) {}

Grid<double> OracleModel::magnitudes(const ComplexSpectrogram& y) const {
  if (magnitude_.rows() != y.bins() || magnitude_.cols() != y.frames())
    throw ShapeMismatchError("oracle reference " +
                             shape_string(magnitude_.rows(), magnitude_.cols()) +
                             " does not match spectrogram " + shape_string(y.bins(), y.frames()));
  return magnitude_;
}

DnnModel::DnnModel(MlpNetwork network, unsigned threads)
    : net_(std::move(network)), threads_(threads) {
  net_.validate();
}

Grid<double> DnnModel::magnitudes(const ComplexSpectrogram& y) const {
  if (y.bins() != net_.meta.freq_bins)
    throw ShapeMismatchError("network expects " + std::to_string(net_.meta.freq_bins) +
                             " bins, spectrogram has " + std::to_string(y.bins()));
  const Grid<double> mag = magnitude(y);
  Grid<double> out(y.bins(), y.frames());
  // Each frame writes only its own column.
  parallel_for(y.frames(), threads_, [&](std::size_t j) {
    const auto v = assemble_context(mag, j, net_.meta.context, net_.meta.delta2);
    const auto col = forward(net_, v);
    for (std::size_t i = 0; i < col.size(); ++i) out(i, j) = col[i];
  });
  return out;
}

std::unique_ptr<SourceModel> oracle_model(ComplexSpectrogram reference) {
  return std::make_unique<OracleModel>(std::move(reference));
}

std::unique_ptr<SourceModel> dnn_model(MlpNetwork network, unsigned threads) {
  return std::make_unique<DnnModel>(std::move(network), threads);
}

NmfFactors nmf_init(std::size_t bins, std::size_t frames, std::size_t rank, std::uint64_t seed) {
  if (rank == 0) throw UnsupportedConfigurationError("NMF rank must be positive");
  std::mt19937_64 rng(seed);
  // (0, 1]: 1 - U[0, 1)
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  NmfFactors f{Grid<double>(bins, rank), Grid<double>(rank, frames), 2};
  for (double& t : f.bases.data()) t = std::max(1.0 - uniform(rng), kNmfFloor);
  for (double& v : f.activations.data()) v = std::max(1.0 - uniform(rng), kNmfFloor);
  return f;
}

Grid<double> nmf_power(const NmfFactors& f) {
  const std::size_t bins = f.bases.rows();
  const std::size_t frames = f.activations.cols();
  Grid<double> p(bins, frames, 0.0);
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t k = 0; k < f.rank(); ++k) {
      const double t = f.bases(i, k);
      const auto v = f.activations.row(k);
      auto out = p.row(i);
      for (std::size_t j = 0; j < frames; ++j) out[j] += t * v[j];
    }
  return p;
}

VarianceMatrix nmf_variance(const NmfFactors& f) {
  Grid<double> s = nmf_power(f);
  for (double& v : s.data()) v = std::sqrt(v);
  return {std::move(s), 0.0};
}

NmfFactors nmf_model_update(NmfFactors f, const ComplexSpectrogram& y) {
  if (f.domain != 2)
    throw UnsupportedConfigurationError("only the p = 2 Gaussian NMF model is supported");
  const std::size_t bins = f.bases.rows();
  const std::size_t frames = f.activations.cols();
  const std::size_t rank = f.rank();
  if (y.bins() != bins || y.frames() != frames)
    throw ShapeMismatchError("NMF factors " + shape_string(bins, frames) +
                             " do not match spectrogram " + shape_string(y.bins(), y.frames()));

  Grid<double> power(bins, frames);
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t j = 0; j < frames; ++j) power(i, j) = std::norm(y(i, j));

  Grid<double> model = nmf_power(f);
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t k = 0; k < rank; ++k) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < frames; ++j) {
        const double inv = 1.0 / model(i, j);
        const double v = f.activations(k, j);
        num += power(i, j) * v * inv * inv;
        den += v * inv;
      }
      f.bases(i, k) = std::max(f.bases(i, k) * std::sqrt(num / den), kNmfFloor);
    }

  model = nmf_power(f);
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < frames; ++j) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < bins; ++i) {
        const double inv = 1.0 / model(i, j);
        const double t = f.bases(i, k);
        num += power(i, j) * t * inv * inv;
        den += t * inv;
      }
      f.activations(k, j) = std::max(f.activations(k, j) * std::sqrt(num / den), kNmfFloor);
    }
  return f;
}

double nmf_objective(const NmfFactors& f, const ComplexSpectrogram& y) {
  const Grid<double> model = nmf_power(f);
  double total = 0.0;
  for (std::size_t i = 0; i < model.rows(); ++i)
    for (std::size_t j = 0; j < model.cols(); ++j)
      total += std::norm(y(i, j)) / model(i, j) + std::log(model(i, j));
  return total;
}

}  // namespace idlma
