#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/tensor.hpp"

namespace meta_rdre::numgrad {

// Lower-triangular L with A = L Lᵀ, or nullopt when A is not numerically
// positive definite. Only the lower triangle of A is read.
inline std::optional<Tensor> cholesky_lower(const Tensor& a) {
  const std::size_t n = a.rows();
  if (a.rank() != 2 || a.cols() != n) throw ShapeError("cholesky of non-square " + shape_string(a.shape()));
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      const auto li = l.row(i);
      const auto lj = l.row(j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// Solves L Lᵀ x = b.
inline Tensor cholesky_solve(const Tensor& l, const Tensor& b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw ShapeError("cholesky_solve rhs length mismatch");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * y[k];
    y[i] = s / l(i, i);
  }
  return Tensor::vector(std::move(y));
}

// Factor of A = sym(K) + lambda I, retrying once with a trace-scaled jitter
// of 1e-10 * trace(K) / T on the diagonal.
inline Tensor factor_regularized(const Tensor& k_mat, double lambda) {
  const std::size_t n = k_mat.rows();
  if (k_mat.rank() != 2 || k_mat.cols() != n) {
    throw ShapeError("ridge system matrix must be square, got " + shape_string(k_mat.shape()));
  }
  if (!(lambda > 0.0)) throw NumericalError("ridge regularizer must be positive");
  Tensor a({n, n});
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    trace += k_mat(i, i);
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (k_mat(i, j) + k_mat(j, i));
    a(i, i) += lambda;
  }
  if (auto l = cholesky_lower(a)) return *std::move(l);
  const double jitter = 1e-10 * std::abs(trace) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += jitter;
  if (auto l = cholesky_lower(a)) return *std::move(l);
  throw NumericalError("Cholesky factorization of K + lambda I failed after jitter retry (ill-conditioned task)");
}

// Value-level (K + lambda I)^-1 k.
inline Tensor solve_regularized(const Tensor& k_mat, const Tensor& k_vec, double lambda) {
  if (k_vec.size() != k_mat.rows()) throw ShapeError("ridge rhs length does not match system size");
  return cholesky_solve(factor_regularized(k_mat, lambda), k_vec);
}

}  // namespace meta_rdre::numgrad
