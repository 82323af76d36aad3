// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "idlma/complex_linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace idlma {

ComplexMatrix::ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows)
    : n_(rows.size()), a_() {
  a_.reserve(n_ * n_);
  for (const auto& r : rows) {
    if (r.size() != n_) throw std::invalid_argument("ComplexMatrix must be square");
    a_.insert(a_.end(), r.begin(), r.end());
  }
}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n);
  for (std::size_t k = 0; k < n; ++k) m(k, k) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::diagonal(std::span<const Complex> d) {
  ComplexMatrix m(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) m(k, k) = d[k];
  return m;
}

ComplexMatrix ComplexMatrix::adjoint() const {
  ComplexMatrix h(n_);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t c = 0; c < n_; ++c) h(c, r) = std::conj((*this)(r, c));
  return h;
}

double ComplexMatrix::max_abs() const {
  double m = 0.0;
  for (const auto& v : a_) m = std::max(m, std::abs(v));
  return m;
}

double ComplexMatrix::norm_inf() const {
  double m = 0.0;
  for (std::size_t r = 0; r < n_; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n_; ++c) s += std::abs((*this)(r, c));
    m = std::max(m, s);
  }
  return m;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  ComplexMatrix c(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      const Complex v = a(r, k);
      for (std::size_t col = 0; col < n; ++col) c(r, col) += v * b(k, col);
    }
  return c;
}

ComplexVector operator*(const ComplexMatrix& a, std::span<const Complex> x) {
  assert(a.size() == x.size());
  ComplexVector y(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    Complex s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += a(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

LuFactorization::LuFactorization(const ComplexMatrix& m) : lu_(m), perm_(m.size()) {
  const std::size_t n = m.size();
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  const double scale = m.max_abs();
  for (const auto& v : m.data())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw SingularMatrixError("matrix has non-finite entries",
                                std::numeric_limits<double>::quiet_NaN());
  const double threshold = kPivotThreshold * scale;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = k;
    double best_abs = std::abs(lu_(k, k));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(lu_(r, k));
      if (v > best_abs) {
        best = r;
        best_abs = v;
      }
    }
    if (!(best_abs >= threshold) || best_abs == 0.0)
      throw SingularMatrixError("matrix is singular to working precision (pivot " +
                                    std::to_string(best_abs) + " at column " +
                                    std::to_string(k) + ")",
                                best_abs);
    if (best != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(best, c));
      std::swap(perm_[k], perm_[best]);
    }
    const Complex pivot = lu_(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const Complex f = lu_(r, k) / pivot;
      lu_(r, k) = f;
      for (std::size_t c = k + 1; c < n; ++c) lu_(r, c) -= f * lu_(k, c);
    }
  }
}

ComplexVector LuFactorization::solve(std::span<const Complex> b) const {
  const std::size_t n = lu_.size();
  if (b.size() != n) throw std::invalid_argument("right-hand side length mismatch");
  ComplexVector x(n);
  for (std::size_t r = 0; r < n; ++r) {
    Complex s = b[perm_[r]];
    for (std::size_t c = 0; c < r; ++c) s -= lu_(r, c) * x[c];
    x[r] = s;
  }
  for (std::size_t r = n; r-- > 0;) {
    Complex s = x[r];
    for (std::size_t c = r + 1; c < n; ++c) s -= lu_(r, c) * x[c];
    x[r] = s / lu_(r, r);
  }
  return x;
}

ComplexMatrix LuFactorization::inverse() const {
  const std::size_t n = lu_.size();
  ComplexMatrix inv(n);
  ComplexVector e(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), Complex{});
    e[c] = 1.0;
    const auto col = solve(e);
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  return inv;
}

double LuFactorization::log_abs_det() const {
  double s = 0.0;
  for (std::size_t k = 0; k < lu_.size(); ++k) s += std::log(std::abs(lu_(k, k)));
  return s;
}

ComplexVector solve(const ComplexMatrix& m, std::span<const Complex> b) {
  return LuFactorization(m).solve(b);
}

ComplexMatrix inverse(const ComplexMatrix& m) { return LuFactorization(m).inverse(); }

double log_abs_det(const ComplexMatrix& m) { return LuFactorization(m).log_abs_det(); }

double hermitian_quadratic(std::span<const Complex> w, const ComplexMatrix& u) {
  const std::size_t n = u.size();
  if (w.size() != n) throw std::invalid_argument("vector length mismatch");
  const double tol = 1e-10 * u.max_abs();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r; c < n; ++c)
      if (std::abs(u(r, c) - std::conj(u(c, r))) > tol)
        throw NonHermitianError("matrix is not Hermitian at (" + std::to_string(r) + ", " +
                                std::to_string(c) + ")");

  Complex s = 0.0;
  double magnitude = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const Complex term = std::conj(w[r]) * u(r, c) * w[c];
      s += term;
      magnitude += std::abs(term);
    }
  // Imaginary residue must be rounding-sized; the magnitude term covers
  // cancellation when Re(w^H U w) is near zero.
  if (std::abs(s.imag()) > 1e-10 * std::max(std::abs(s.real()), magnitude))
    throw NonHermitianError("quadratic form has a non-negligible imaginary part");
  return s.real();
}

}  // namespace idlma
