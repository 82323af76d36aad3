// Copyright 2026 The IDLMA Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef IDLMA_COMPLEX_LINALG_HPP_
#define IDLMA_COMPLEX_LINALG_HPP_

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace idlma {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

/// Small square complex matrix, row-major. Sized for N <= 8 demixing work.
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  explicit ComplexMatrix(std::size_t n) : n_(n), a_(n * n) {}
  ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows);

  static ComplexMatrix identity(std::size_t n);
  static ComplexMatrix diagonal(std::span<const Complex> d);

  std::size_t size() const { return n_; }
  Complex& operator()(std::size_t r, std::size_t c) { return a_[r * n_ + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const { return a_[r * n_ + c]; }
  std::span<const Complex> data() const { return a_; }

  ComplexMatrix adjoint() const;
  double max_abs() const;
  double norm_inf() const;  // max absolute row sum

  bool operator==(const ComplexMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Complex> a_;
};

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexVector operator*(const ComplexMatrix& a, std::span<const Complex> x);

/// Raised when a pivot falls below 1e-12 times the largest input entry.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  double pivot() const { return pivot_; }

 private:
  double pivot_;
};

class NonHermitianError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kPivotThreshold = 1e-12;

/// LU factorization with partial pivoting, PA = LU.
class LuFactorization {
 public:
  explicit LuFactorization(const ComplexMatrix& m);

  ComplexVector solve(std::span<const Complex> b) const;
  ComplexMatrix inverse() const;
  double log_abs_det() const;

 private:
  ComplexMatrix lu_;
  std::vector<std::size_t> perm_;
};

ComplexVector solve(const ComplexMatrix& m, std::span<const Complex> b);
ComplexMatrix inverse(const ComplexMatrix& m);

/// Re(w^H U w). U must be Hermitian to 1e-10 relative to its largest entry.
double hermitian_quadratic(std::span<const Complex> w, const ComplexMatrix& u);

double log_abs_det(const ComplexMatrix& m);

}  // namespace idlma

#endif  // IDLMA_COMPLEX_LINALG_HPP_
