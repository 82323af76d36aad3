// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "idlma/source_model.hpp"
#include "support/synth.hpp"

using namespace idlma;
using idlma::testing::random_spectrogram;

namespace {

class ConstantModel final : public SourceModel {
 public:
  explicit ConstantModel(Grid<double> g) : g_(std::move(g)) {}
  Grid<double> magnitudes(const ComplexSpectrogram&) const override { return g_; }

 private:
  Grid<double> g_;
};

double is_divergence(const Grid<double>& p, const Grid<double>& m) {
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double r = p.data()[k] / m.data()[k];
    d += r - std::log(r) - 1.0;
  }
  return d;
}

// Center-frame passthrough: a single I x 3I layer with an identity block in
// the middle (context c = 1).
MlpNetwork passthrough(std::size_t bins) {
  MlpNetwork net;
  net.meta = {static_cast<std::uint32_t>(bins), 1, 1e-5f};
  DenseLayer layer{bins, 3 * bins, std::vector<float>(3 * bins * bins, 0.0f),
                   std::vector<float>(bins, 0.0f)};
  for (std::size_t i = 0; i < bins; ++i) layer.weights[i * 3 * bins + bins + i] = 1.0f;
  net.layers.push_back(std::move(layer));
  return net;
}

}  // namespace

TEST_CASE("oracle model returns |reference| floored") {
  std::mt19937_64 rng(31);
  const auto s = random_spectrogram(9, 20, rng);
  const auto v = estimate_variance(OracleModel(s), s, FloorPolicy::fixed(0.3));
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 20; ++j) CHECK(v.sigma(i, j) == std::max(std::abs(s(i, j)), 0.3));
  CHECK(v.epsilon == 0.3);
}

TEST_CASE("oracle pre-floor output is exactly |Y| and scales linearly") {
  std::mt19937_64 rng(32);
  const auto y = random_spectrogram(5, 11, rng);
  const Grid<double> m = OracleModel(y).magnitudes(y);
  ComplexSpectrogram doubled = y;
  for (auto& v : doubled.values.data()) v *= 2.0;
  const Grid<double> m2 = OracleModel(doubled).magnitudes(y);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 11; ++j) {
      CHECK(m(i, j) == std::abs(y(i, j)));
      CHECK(m2(i, j) == 2.0 * m(i, j));
    }
}

TEST_CASE("zero reference gives the floor everywhere") {
  ComplexSpectrogram zero{StftConfig{8, 4}, Grid<Complex>(5, 6)};
  const auto fixed = estimate_variance(OracleModel(zero), zero, FloorPolicy::fixed(1e-3));
  for (double v : fixed.sigma.data()) CHECK(v == 1e-3);
  const auto rel = estimate_variance(OracleModel(zero), zero, FloorPolicy::relative());
  for (double v : rel.sigma.data()) CHECK(v == kMinimumFloor);
}

TEST_CASE("relative floor is 0.1 times the mean pre-floor magnitude") {
  Grid<double> g(2, 2);
  g(0, 0) = 1.9;
  g(0, 1) = 0.04;
  g(1, 0) = 0.0;
  g(1, 1) = 0.06;  // mean 0.5
  ComplexSpectrogram y{StftConfig{2, 1}, Grid<Complex>(2, 2)};
  const auto v = estimate_variance(ConstantModel(g), y, FloorPolicy::relative(0.1));
  CHECK(v.epsilon == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(v.sigma(0, 0) == 1.9);
  CHECK(v.sigma(0, 1) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(v.sigma(1, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(v.sigma(1, 1) == 0.06);
}

TEST_CASE("flooring is idempotent") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& policy : {FloorPolicy::fixed(0.2), FloorPolicy::relative(0.5)}) {
    Grid<double> g(7, 13);
    for (double& v : g.data()) v = u(rng);
    const double eps = resolve_floor(g, policy);
    const auto once = apply_floor(g, eps);
    const auto twice = apply_floor(once.sigma, eps);
    CHECK(once.sigma == twice.sigma);
  }
}

TEST_CASE("model/spectrogram shape mismatch is reported") {
  std::mt19937_64 rng(34);
  const auto ref = random_spectrogram(5, 10, rng);
  const auto other = random_spectrogram(5, 12, rng);
  CHECK_THROWS_AS(estimate_variance(OracleModel(ref), other, FloorPolicy::relative()),
                  ShapeMismatchError);
  CHECK_THROWS_AS(estimate_variance(ConstantModel(Grid<double>(4, 12)), other, FloorPolicy::relative()),
                  ShapeMismatchError);
}

TEST_CASE("dnn model: passthrough network reproduces |Y|") {
  std::mt19937_64 rng(35);
  const auto y = random_spectrogram(6, 15, rng);
  const DnnModel model(passthrough(6));
  const Grid<double> m = model.magnitudes(y);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 15; ++j)
      CHECK(m(i, j) == doctest::Approx(std::abs(y(i, j))).epsilon(1e-12));
}

TEST_CASE("dnn model: zero weights give the floor; outputs are never negative") {
  std::mt19937_64 rng(36);
  const auto y = random_spectrogram(4, 9, rng);
  MlpNetwork zero;
  zero.meta = {4, 2, 1e-5f};
  zero.layers.push_back({8, 20, std::vector<float>(160, 0.0f), std::vector<float>(8, 0.0f)});
  zero.layers.push_back({4, 8, std::vector<float>(32, 0.0f), std::vector<float>(4, 0.0f)});
  const auto v = estimate_variance(DnnModel(zero), y, FloorPolicy::fixed(1e-3));
  for (double s : v.sigma.data()) CHECK(s == 1e-3);

  std::normal_distribution<float> g(0.0f, 1.0f);
  for (auto& layer : zero.layers) {
    for (float& w : layer.weights) w = g(rng);
    for (float& b : layer.bias) b = g(rng);
  }
  const Grid<double> m = DnnModel(zero).magnitudes(y);
  for (double s : m.data()) CHECK(s >= 0.0);
}

TEST_CASE("dnn model: parallel frames equal sequential frames") {
  std::mt19937_64 rng(37);
  const auto y = random_spectrogram(6, 31, rng);
  MlpNetwork net = passthrough(6);
  std::normal_distribution<float> g(0.0f, 0.5f);
  for (float& w : net.layers[0].weights) w += g(rng);
  CHECK(DnnModel(net, 1).magnitudes(y) == DnnModel(net, 4).magnitudes(y));
}

TEST_CASE("dnn model rejects a spectrogram with the wrong bin count") {
  std::mt19937_64 rng(38);
  CHECK_THROWS_AS(DnnModel(passthrough(6)).magnitudes(random_spectrogram(7, 4, rng)),
                  ShapeMismatchError);
}

TEST_CASE("nmf: rank-1 exact fit is a fixed point") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  NmfFactors f{Grid<double>(8, 1), Grid<double>(1, 12), 2};
  for (double& t : f.bases.data()) t = u(rng);
  for (double& v : f.activations.data()) v = u(rng);
  ComplexSpectrogram y{StftConfig{14, 7}, Grid<Complex>(8, 12)};
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      y(i, j) = std::polar(std::sqrt(f.bases(i, 0) * f.activations(0, j)), u(rng));
  const auto next = nmf_model_update(f, y);
  for (std::size_t k = 0; k < f.bases.size(); ++k)
    CHECK(std::abs(next.bases.data()[k] - f.bases.data()[k]) < 1e-10);
  for (std::size_t k = 0; k < f.activations.size(); ++k)
    CHECK(std::abs(next.activations.data()[k] - f.activations.data()[k]) < 1e-10);
}

TEST_CASE("nmf: Itakura-Saito divergence to a rank-1 power spectrogram never increases") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<double> spectral(16), temporal(24);
  for (double& v : spectral) v = u(rng);
  for (double& v : temporal) v = u(rng);
  ComplexSpectrogram y{StftConfig{30, 15}, Grid<Complex>(16, 24)};
  Grid<double> power(16, 24);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 24; ++j) {
      power(i, j) = spectral[i] * temporal[j];
      y(i, j) = std::polar(std::sqrt(power(i, j)), u(rng));
    }
  NmfFactors f = nmf_init(16, 24, 3, 7);
  double prev = is_divergence(power, nmf_power(f));
  const double start = prev;
  for (int it = 0; it < 500; ++it) {
    f = nmf_model_update(std::move(f), y);
    const double d = is_divergence(power, nmf_power(f));
    CHECK(d <= prev + 1e-9);
    prev = d;
  }
  CHECK(prev < 1e-2 * start);
}

TEST_CASE("nmf: objective is non-increasing on 100 random instances") {
  std::mt19937_64 rng(43);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t bins = 3 + trial % 7, frames = 4 + trial % 11, rank = 1 + trial % 4;
    const auto y = random_spectrogram(bins, frames, rng);
    NmfFactors f = nmf_init(bins, frames, rank, static_cast<std::uint64_t>(trial));
    double prev = nmf_objective(f, y);
    for (int it = 0; it < 30; ++it) {
      f = nmf_model_update(std::move(f), y);
      const double obj = nmf_objective(f, y);
      if (obj > prev + 1e-9) ++violations;
      prev = obj;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("nmf: zero input collapses factors to the floor") {
  ComplexSpectrogram zero{StftConfig{8, 4}, Grid<Complex>(5, 6)};
  NmfFactors f = nmf_init(5, 6, 2, 1);
  f = nmf_model_update(std::move(f), zero);
  for (double t : f.bases.data()) CHECK(t == kNmfFloor);
  for (double v : f.activations.data()) CHECK(v == kNmfFloor);
}

TEST_CASE("nmf: init is seeded and in (0, 1]; only p = 2 is supported") {
  const auto a = nmf_init(4, 5, 3, 99);
  const auto b = nmf_init(4, 5, 3, 99);
  CHECK(a.bases == b.bases);
  CHECK(a.activations == b.activations);
  for (double t : a.bases.data()) CHECK((t > 0.0 && t <= 1.0));
  NmfFactors p1 = a;
  p1.domain = 1;
  ComplexSpectrogram y{StftConfig{6, 3}, Grid<Complex>(4, 5, Complex(1.0, 0.0))};
  CHECK_THROWS_AS(nmf_model_update(p1, y), UnsupportedConfigurationError);
}
