#pragma once

#include <concepts>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>

#include "meta_rdre/error.hpp"
#include "meta_rdre/model.hpp"
#include "meta_rdre/numgrad/ops.hpp"

namespace meta_rdre {

// Support-set adaptation recorded on a tape, so that a query loss built on
// top of it can be differentiated back into every model parameter.
struct TapedAdaptation {
  Var z_nu;
  Var z_de;
  Var w_tilde;  // (K + lambda I)^-1 k
  Var w_hat;    // max(0, w_tilde)
  double alpha = 0.5;
};

struct QuadraticVars {
  Var gram;    // K
  Var linear;  // k
};

// k = mean of numerator embeddings,
// K = alpha/N_nu Phi_nuᵀ Phi_nu + (1 - alpha)/N_de Phi_deᵀ Phi_de.
inline QuadraticVars build_quadratic(Var phi_nu, Var phi_de, double alpha) {
  const Tensor& a = phi_nu.tape->value(phi_nu);
  const Tensor& b = phi_de.tape->value(phi_de);
  if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
    throw DataError("build_quadratic needs non-empty numerator and denominator embeddings");
  }
  if (a.cols() != b.cols()) throw ShapeError("build_quadratic: embedding widths differ");
  const double n_nu = static_cast<double>(a.rows());
  const double n_de = static_cast<double>(b.rows());
  Var k_mat = numgrad::add(numgrad::gram(phi_nu, alpha / n_nu), numgrad::gram(phi_de, (1.0 - alpha) / n_de));
  return {k_mat, numgrad::mean_rows(phi_nu)};
}

inline std::pair<Tensor, Tensor> build_quadratic(const Tensor& phi_nu, const Tensor& phi_de, double alpha) {
  Tape tape;
  QuadraticVars q = build_quadratic(tape.constant_ref(phi_nu), tape.constant_ref(phi_de), alpha);
  return {tape.value(q.gram), tape.value(q.linear)};
}

inline TapedAdaptation adapt_to_support(const BoundModel& model, Var support_nu, Var support_de) {
  TapedAdaptation out;
  out.alpha = model.params->alpha;
  out.z_nu = encode_set(model, support_nu);
  out.z_de = encode_set(model, support_de);
  Var phi_nu = embed(model, support_nu, out.z_nu, out.z_de);
  Var phi_de = embed(model, support_de, out.z_nu, out.z_de);
  QuadraticVars q = build_quadratic(phi_nu, phi_de, out.alpha);
  out.w_tilde = numgrad::ridge_solve(q.gram, q.linear, numgrad::exp(model.rho));
  out.w_hat = numgrad::clamp_nonnegative(out.w_tilde);
  return out;
}

// r(x) = w_hatᵀ h([x, z_nu, z_de]) for every row of x.
inline Var estimate_ratio(const BoundModel& model, const TapedAdaptation& adapted, Var x) {
  return numgrad::matvec(embed(model, x, adapted.z_nu, adapted.z_de), adapted.w_hat);
}

// alpha/(2|Q_nu|) sum r² + (1 - alpha)/(2|Q_de|) sum r² - 1/|Q_nu| sum r over
// ratio values on the numerator and denominator query sets.
inline Var query_objective(Var r_nu, Var r_de, double alpha) {
  const double n_nu = static_cast<double>(r_nu.tape->value(r_nu).size());
  const double n_de = static_cast<double>(r_de.tape->value(r_de).size());
  if (n_nu == 0 || n_de == 0) throw DataError("query loss needs non-empty query sets");
  Var quad_nu = numgrad::scale(numgrad::sum_squares(r_nu), alpha / (2.0 * n_nu));
  Var quad_de = numgrad::scale(numgrad::sum_squares(r_de), (1.0 - alpha) / (2.0 * n_de));
  Var lin = numgrad::scale(numgrad::sum(r_nu), -1.0 / n_nu);
  return numgrad::add(numgrad::add(quad_nu, quad_de), lin);
}

inline Var query_loss(const BoundModel& model, const TapedAdaptation& adapted, Var query_nu, Var query_de) {
  return query_objective(estimate_ratio(model, adapted, query_nu), estimate_ratio(model, adapted, query_de),
                         adapted.alpha);
}

inline double query_objective(std::span<const double> r_nu, std::span<const double> r_de, double alpha) {
  if (r_nu.empty() || r_de.empty()) throw DataError("query loss needs non-empty query sets");
  double sq_nu = 0.0, lin_nu = 0.0, sq_de = 0.0;
  for (double r : r_nu) {
    sq_nu += r * r;
    lin_nu += r;
  }
  for (double r : r_de) sq_de += r * r;
  const double n_nu = static_cast<double>(r_nu.size());
  const double n_de = static_cast<double>(r_de.size());
  return alpha / (2.0 * n_nu) * sq_nu + (1.0 - alpha) / (2.0 * n_de) * sq_de - lin_nu / n_nu;
}

// Relative Pearson divergence estimate from a query objective value. The
// offset makes a perfect estimate on identical distributions score 0.
inline double pe_from_objective(double objective) { return -objective - 0.5; }

// Frozen, gradient-free result of adapting to a support pair.
struct AdaptedRatio {
  LatentPair latents;
  Tensor w_hat;
  Tensor w_tilde;
  double alpha = 0.5;
  std::shared_ptr<const ModelParams> params;
};

inline AdaptedRatio adapt_to_support(const Tensor& support_nu, const Tensor& support_de,
                                     std::shared_ptr<const ModelParams> params) {
  if (!params) throw Error("adapt_to_support without parameters");
  Tape tape;
  BoundModel model = bind(tape, *params, false);
  TapedAdaptation a = adapt_to_support(model, tape.constant_ref(support_nu), tape.constant_ref(support_de));
  AdaptedRatio out;
  out.latents = {tape.value(a.z_nu), tape.value(a.z_de)};
  out.w_hat = tape.value(a.w_hat);
  out.w_tilde = tape.value(a.w_tilde);
  out.alpha = a.alpha;
  out.params = std::move(params);
  return out;
}

inline Tensor estimate_ratio(const Tensor& x, const AdaptedRatio& adapted) {
  Tape tape;
  BoundModel model = bind(tape, *adapted.params, false);
  Var phi = embed(model, tape.constant_ref(x), tape.constant_ref(adapted.latents.z_nu),
                  tape.constant_ref(adapted.latents.z_de));
  return tape.value(numgrad::matvec(phi, tape.constant_ref(adapted.w_hat)));
}

// Anything mapping an n x M instance matrix to n ratio values.
template <typename F>
concept RatioFunction = requires(const F& f, const Tensor& x) {
  { f(x) } -> std::convertible_to<Tensor>;
};

template <RatioFunction F>
double query_loss(const F& ratio, const Tensor& query_nu, const Tensor& query_de, double alpha) {
  if (query_nu.rows() == 0 || query_de.rows() == 0 || query_nu.empty() || query_de.empty()) {
    throw DataError("query loss needs non-empty query sets");
  }
  const Tensor r_nu = ratio(query_nu);
  const Tensor r_de = ratio(query_de);
  return query_objective(r_nu.data(), r_de.data(), alpha);
}

inline double query_loss(const Tensor& query_nu, const Tensor& query_de, const AdaptedRatio& adapted) {
  return query_loss([&](const Tensor& x) { return estimate_ratio(x, adapted); }, query_nu, query_de,
                    adapted.alpha);
}

template <RatioFunction F>
double pe_divergence(const F& ratio, const Tensor& a, const Tensor& b, double alpha) {
  return pe_from_objective(query_loss(ratio, a, b, alpha));
}

// Scores A (numerator) against B (denominator) with a model adapted on them.
inline double pe_divergence(const Tensor& a, const Tensor& b, const AdaptedRatio& adapted) {
  return pe_from_objective(query_loss(a, b, adapted));
}

}  // namespace meta_rdre
