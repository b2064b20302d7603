#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/tensor.hpp"
#include "meta_rdre/rng.hpp"

namespace meta_rdre {

// Axis-aligned Gaussian; a single sigma entry means isotropic.
struct GaussianSpec {
  std::vector<double> mu;
  std::vector<double> sigma;

  [[nodiscard]] std::size_t dim() const { return mu.size(); }

  [[nodiscard]] double sigma_at(std::size_t i) const { return sigma.size() == 1 ? sigma[0] : sigma[i]; }

  void validate() const {
    if (mu.empty()) throw ConfigError("Gaussian with empty mean");
    if (sigma.size() != 1 && sigma.size() != mu.size()) throw ConfigError("Gaussian sigma/mean length mismatch");
    for (double s : sigma) {
      if (!(s > 0.0)) throw ConfigError("Gaussian sigma must be positive");
    }
  }

  [[nodiscard]] double log_density(std::span<const double> x) const {
    if (x.size() != mu.size()) throw ShapeError("Gaussian density dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = sigma_at(i);
      const double z = (x[i] - mu[i]) / s;
      acc += -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return acc;
  }

  // n x dim matrix of i.i.d. draws.
  [[nodiscard]] numgrad::Tensor sample(std::size_t n, Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    numgrad::Tensor out({n, dim()});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < dim(); ++c) out(r, c) = mu[c] + sigma_at(c) * normal(rng);
    }
    return out;
  }

  static GaussianSpec scalar(double mu, double sigma) { return GaussianSpec{{mu}, {sigma}}; }
};

}  // namespace meta_rdre
