#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/linalg.hpp"
#include "meta_rdre/rng.hpp"

namespace meta_rdre {

// Median of all pairwise Euclidean distances between the rows of `points`.
inline double median_bandwidth(const Tensor& points) {
  const std::size_t n = points.rows();
  if (points.rank() != 2 || n < 2) throw DataError("median bandwidth needs at least two instances");
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = points.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = points.row(j);
      double sq = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) sq += (a[c] - b[c]) * (a[c] - b[c]);
      dists.push_back(std::sqrt(sq));
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) throw DataError("median pairwise distance is zero (degenerate instance set)");
  return median;
}

// Median trick over S_nu ∪ S_de.
inline double median_bandwidth(const Tensor& support_nu, const Tensor& support_de) {
  return median_bandwidth(numgrad::vstack(support_nu, support_de));
}

struct KernelRatioModel {
  Tensor centers;  // B x M
  Tensor theta;    // B, non-negative
  double sigma = 1.0;
  double alpha = 0.5;
  double lambda = 0.1;
};

// phi_b(x) = exp(-|x - c_b|² / (2 sigma²)) for every row x; n x B.
inline Tensor gaussian_kernel_features(const Tensor& x, const Tensor& centers, double sigma) {
  if (x.rank() != 2 || x.cols() != centers.cols()) throw ShapeError("kernel features: dimension mismatch");
  const std::size_t n = x.rows();
  const std::size_t b = centers.rows();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Tensor out({n, b});
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      const auto cj = centers.row(j);
      double sq = 0.0;
      for (std::size_t c = 0; c < xi.size(); ++c) sq += (xi[c] - cj[c]) * (xi[c] - cj[c]);
      out(i, j) = std::exp(-sq * inv);
    }
  }
  return out;
}

constexpr std::size_t kMaxKernelCenters = 100;

// Relative unconstrained least-squares importance fitting on a Gaussian
// kernel basis centred on (up to 100 uniformly subsampled) numerator
// instances: theta = max(0, (K + lambda I)^-1 k). alpha = 0 gives uLSIF.
inline KernelRatioModel rulsif_fit(const Tensor& support_nu, const Tensor& support_de, double alpha, double lambda,
                                   double sigma, std::uint64_t subsample_seed = 0) {
  if (support_nu.rows() == 0 || support_de.rows() == 0 || support_nu.empty() || support_de.empty()) {
    throw DataError("RuLSIF needs non-empty supports");
  }
  if (support_nu.cols() != support_de.cols()) throw ShapeError("RuLSIF: support dimensions differ");
  if (!(sigma > 0.0) || !(lambda > 0.0)) throw ConfigError("RuLSIF sigma and lambda must be positive");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  KernelRatioModel model;
  model.sigma = sigma;
  model.alpha = alpha;
  model.lambda = lambda;
  if (support_nu.rows() <= kMaxKernelCenters) {
    model.centers = support_nu;
  } else {
    Rng rng(subsample_seed);
    auto rows = detail::draw_without_replacement(detail::all_rows(support_nu.rows()), kMaxKernelCenters, rng);
    std::sort(rows.begin(), rows.end());
    model.centers = support_nu.select_rows(rows);
  }
  const Tensor phi_nu = gaussian_kernel_features(support_nu, model.centers, sigma);
  const Tensor phi_de = gaussian_kernel_features(support_de, model.centers, sigma);
  const auto [k_mat, k_vec] = build_quadratic(phi_nu, phi_de, alpha);
  model.theta = numgrad::solve_regularized(k_mat, k_vec, lambda);
  for (double& t : model.theta.data()) t = std::max(0.0, t);
  return model;
}

inline Tensor rulsif_predict(const KernelRatioModel& model, const Tensor& x) {
  const Tensor phi = gaussian_kernel_features(x, model.centers, model.sigma);
  Tensor out({x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = phi.row(i);
    double r = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) r += model.theta[j] * row[j];
    out[i] = r;
  }
  return out;
}

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  return grid;
}

}  // namespace meta_rdre
