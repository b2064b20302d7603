#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>

#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/linalg.hpp"
#include "meta_rdre/numgrad/tape.hpp"
#include "meta_rdre/numgrad/tensor.hpp"

// Differentiable primitives. Every op checks shapes, records its output on
// the tape of its first argument and registers the adjoint.
namespace meta_rdre::numgrad {

namespace detail {

inline Tape& tape_of(Var v) {
  if (v.tape == nullptr) throw Error("operation on a detached Var");
  return *v.tape;
}

inline void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error("operands recorded on different tapes");
}

inline void require_matrix(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": " + what + " must be a matrix, got " + shape_string(t.shape()));
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

// y = x W + b with the bias broadcast over rows. A rank-1 x is one row and
// yields a rank-1 result.
inline Var affine(Var x, Var w, Var b) {
  detail::require_same_tape(x, w);
  detail::require_same_tape(x, b);
  Tape& tape = detail::tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  detail::require_matrix(wv, "affine", "weight");
  if (xv.cols() != wv.rows() || bv.rank() != 1 || bv.size() != wv.cols() || xv.rank() == 0) {
    throw ShapeError("affine: cannot apply " + shape_string(wv.shape()) + " weight and " +
                     shape_string(bv.shape()) + " bias to input " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.rows();
  Tensor out = xv.rank() == 1 ? Tensor({wv.cols()}) : Tensor({n, wv.cols()});
  auto y = as_matrix(out);
  y.noalias() = as_matrix(xv) * as_matrix(wv);
  y.rowwise() += as_matrix(bv).row(0);
  return tape.record("affine", std::move(out), {x, w, b}, [x, w, b](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);
    if (t.requires_grad(x)) as_matrix(t.grad_slot(x)).noalias() += gm * as_matrix(t.value(w)).transpose();
    if (t.requires_grad(w)) as_matrix(t.grad_slot(w)).noalias() += as_matrix(t.value(x)).transpose() * gm;
    if (t.requires_grad(b)) as_matrix(t.grad_slot(b)) += gm.colwise().sum();
  });
}

// max(0, x); the subgradient at 0 is 0.
inline Var relu(Var x) {
  Tape& tape = detail::tape_of(x);
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record("relu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

// Elementwise max(0, x), used on solved weights. Same adjoint as relu.
inline Var clamp_nonnegative(Var x) { return relu(x); }

// ln(1 + e^x), evaluated as max(x, 0) + ln(1 + e^-|x|).
inline Var softplus(Var x) {
  Tape& tape = detail::tape_of(x);
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = detail::softplus_value(v);
  return tape.record("softplus", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * detail::sigmoid(xv[i]);
  });
}

inline Var exp(Var x) {
  Tape& tape = detail::tape_of(x);
  Tensor out = tape.value(x);
  for (double& v : out.data()) v = std::exp(v);
  // The adjoint reads the input again rather than capturing the output.
  return tape.record("exp", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * std::exp(xv[i]);
  });
}

// Column means of an n x a matrix, as a length-a vector. Rows are summed in
// index order.
inline Var mean_rows(Var x) {
  Tape& tape = detail::tape_of(x);
  const Tensor& xv = tape.value(x);
  const std::size_t n = xv.rows();
  const std::size_t a = xv.cols();
  if (xv.empty() || n == 0) throw ShapeError("mean_rows of an empty set");
  Tensor out({a});
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row(r);
    for (std::size_t c = 0; c < a; ++c) out[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out.data()) v *= inv;
  return tape.record("mean_rows", std::move(out), {x}, [x, n, a, inv](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = gx.row(r);
      for (std::size_t c = 0; c < a; ++c) row[c] += g[c] * inv;
    }
  });
}

inline Var scale(Var x, double c) {
  Tape& tape = detail::tape_of(x);
  Tensor out = tape.value(x);
  for (double& v : out.data()) v *= c;
  return tape.record("scale", std::move(out), {x}, [x, c](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_tape(a, b);
  Tape& tape = detail::tape_of(a);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: shape " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor& gv = t.grad_slot(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

inline Var sum(Var x) {
  Tape& tape = detail::tape_of(x);
  double total = 0.0;
  for (double v : tape.value(x).data()) total += v;
  return tape.record("sum", Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    for (double& v : t.grad_slot(x).data()) v += g[0];
  });
}

inline Var sum_squares(Var x) {
  Tape& tape = detail::tape_of(x);
  double total = 0.0;
  for (double v : tape.value(x).data()) total += v * v;
  return tape.record("sum_squares", Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_slot(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * g[0];
  });
}

// r = Phi w for Phi of shape n x T and w of length T.
inline Var matvec(Var phi, Var w) {
  detail::require_same_tape(phi, w);
  Tape& tape = detail::tape_of(phi);
  const Tensor& pv = tape.value(phi);
  const Tensor& wv = tape.value(w);
  detail::require_matrix(pv, "matvec", "matrix");
  if (wv.rank() != 1 || wv.size() != pv.cols()) {
    throw ShapeError("matvec: " + shape_string(pv.shape()) + " times " + shape_string(wv.shape()));
  }
  Tensor out({pv.rows()});
  as_matrix(out).noalias() = (as_matrix(pv) * as_matrix(wv).transpose()).transpose();
  return tape.record("matvec", std::move(out), {phi, w}, [phi, w](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);  // 1 x n
    if (t.requires_grad(phi)) as_matrix(t.grad_slot(phi)).noalias() += gm.transpose() * as_matrix(t.value(w));
    if (t.requires_grad(w)) as_matrix(t.grad_slot(w)).noalias() += gm * as_matrix(t.value(phi));
  });
}

// c * Phiᵀ Phi for Phi of shape n x T.
inline Var gram(Var phi, double c) {
  Tape& tape = detail::tape_of(phi);
  const Tensor& pv = tape.value(phi);
  detail::require_matrix(pv, "gram", "matrix");
  const std::size_t dim = pv.cols();
  Tensor out({dim, dim});
  as_matrix(out).noalias() = c * (as_matrix(pv).transpose() * as_matrix(pv));
  return tape.record("gram", std::move(out), {phi}, [phi, c](Tape& t, const Tensor& g) {
    const auto gm = as_matrix(g);
    as_matrix(t.grad_slot(phi)).noalias() += c * (as_matrix(t.value(phi)) * (gm + gm.transpose()));
  });
}

// Row-wise concatenation [x_i, z_nu, z_de] with both latents broadcast over
// the n rows of x.
inline Var concat_latents(Var x, Var z_nu, Var z_de) {
  detail::require_same_tape(x, z_nu);
  detail::require_same_tape(x, z_de);
  Tape& tape = detail::tape_of(x);
  const Tensor& xv = tape.value(x);
  const Tensor& a = tape.value(z_nu);
  const Tensor& b = tape.value(z_de);
  detail::require_matrix(xv, "concat_latents", "instances");
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
    throw ShapeError("concat_latents: latent shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t n = xv.rows();
  const std::size_t m = xv.cols();
  const std::size_t k = a.size();
  Tensor out({n, m + 2 * k});
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = out.row(r);
    const auto src = xv.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    std::copy(a.data().begin(), a.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(m));
    std::copy(b.data().begin(), b.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(m + k));
  }
  return tape.record("concat_latents", std::move(out), {x, z_nu, z_de},
                     [x, z_nu, z_de, n, m, k](Tape& t, const Tensor& g) {
                       const bool gx = t.requires_grad(x);
                       const bool ga = t.requires_grad(z_nu);
                       const bool gb = t.requires_grad(z_de);
                       for (std::size_t r = 0; r < n; ++r) {
                         const auto row = g.row(r);
                         if (gx) {
                           auto dst = t.grad_slot(x).row(r);
                           for (std::size_t c = 0; c < m; ++c) dst[c] += row[c];
                         }
                         if (ga) {
                           Tensor& da = t.grad_slot(z_nu);
                           for (std::size_t c = 0; c < k; ++c) da[c] += row[m + c];
                         }
                         if (gb) {
                           Tensor& db = t.grad_slot(z_de);
                           for (std::size_t c = 0; c < k; ++c) db[c] += row[m + k + c];
                         }
                       }
                     });
}

// w = (K + lambda I)^-1 k via Cholesky, where K is read as (K + Kᵀ)/2 and
// lambda is a one-element tensor. With A = K + lambda I and s = A^-1 ḡ the
// adjoints are dk = s, dK = -(s wᵀ + w sᵀ)/2 and dlambda = -sᵀ w.
inline Var ridge_solve(Var k_mat, Var k_vec, Var lambda) {
  detail::require_same_tape(k_mat, k_vec);
  detail::require_same_tape(k_mat, lambda);
  Tape& tape = detail::tape_of(k_mat);
  const Tensor& kv = tape.value(k_vec);
  const Tensor& lv = tape.value(lambda);
  if (lv.size() != 1) throw ShapeError("ridge_solve: lambda must be a scalar");
  const Tensor& km = tape.value(k_mat);
  if (km.rank() != 2 || km.rows() != km.cols() || kv.size() != km.rows()) {
    throw ShapeError("ridge_solve: system " + shape_string(km.shape()) + " with rhs " + shape_string(kv.shape()));
  }
  auto factor = std::make_shared<const Tensor>(factor_regularized(km, lv[0]));
  Tensor w = cholesky_solve(*factor, kv);
  auto solution = std::make_shared<const Tensor>(w);
  return tape.record("ridge_solve", std::move(w), {k_mat, k_vec, lambda},
                     [k_mat, k_vec, lambda, factor, solution](Tape& t, const Tensor& g) {
                       const Tensor s = cholesky_solve(*factor, g);
                       const Tensor& w = *solution;
                       const std::size_t n = w.size();
                       if (t.requires_grad(k_vec)) {
                         Tensor& dk = t.grad_slot(k_vec);
                         for (std::size_t i = 0; i < n; ++i) dk[i] += s[i];
                       }
                       if (t.requires_grad(k_mat)) {
                         Tensor& dk = t.grad_slot(k_mat);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < n; ++j) dk(i, j) -= 0.5 * (s[i] * w[j] + w[i] * s[j]);
                         }
                       }
                       if (t.requires_grad(lambda)) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i) dot += s[i] * w[i];
                         t.grad_slot(lambda)[0] -= dot;
                       }
                     });
}

}  // namespace meta_rdre::numgrad
