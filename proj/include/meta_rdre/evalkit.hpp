#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/gaussian.hpp"
#include "meta_rdre/parallel.hpp"

namespace meta_rdre {

// p_nu(x) / (alpha p_nu(x) + (1 - alpha) p_de(x)), evaluated from log
// densities.
inline double true_relative_ratio(std::span<const double> x, const GaussianSpec& nu, const GaussianSpec& de,
                                  double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  const double log_nu = nu.log_density(x);
  const double log_de = de.log_density(x);
  if (alpha == 0.0) {
    if (!std::isfinite(log_de) || std::exp(log_de) == 0.0) {
      throw NumericalError("density ratio undefined: denominator density vanishes");
    }
    return std::exp(log_nu - log_de);
  }
  // 1 / (alpha + (1 - alpha) exp(log_de - log_nu)); overflow sends r to 0.
  return 1.0 / (alpha + (1.0 - alpha) * std::exp(log_de - log_nu));
}

inline double true_relative_ratio(double x, const GaussianSpec& nu, const GaussianSpec& de, double alpha) {
  return true_relative_ratio(std::span<const double>(&x, 1), nu, de, alpha);
}

// Ratio function backed by the analytic Gaussian ratio.
struct GaussianRatio {
  GaussianSpec nu;
  GaussianSpec de;
  double alpha = 0.5;

  Tensor operator()(const Tensor& x) const {
    Tensor out({x.rows()});
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = true_relative_ratio(x.row(i), nu, de, alpha);
    return out;
  }
};

// Squared error of a ratio estimate on held-out instances, constant term
// omitted. Lower is better.
template <RatioFunction F>
double test_squared_error(const F& ratio, const Tensor& test_nu, const Tensor& test_de, double alpha) {
  return query_loss(ratio, test_nu, test_de, alpha);
}

// Area under the ROC curve with label 1 as the positive class: the
// Mann-Whitney U statistic over n_pos * n_neg, ties counted as 1/2.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc needs both positive and negative examples");
  const double np = static_cast<double>(n_pos);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

struct DatasetPair {
  Tensor a;  // numerator support
  Tensor b;  // denominator support
};

// Relative PE divergence of each (A, B) pair, estimated by adapting on the
// pair and scoring the same instances. Larger = more dissimilar.
inline std::vector<double> compare_datasets(std::shared_ptr<const ModelParams> params,
                                            std::span<const DatasetPair> pairs) {
  std::vector<double> scores(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const AdaptedRatio adapted = adapt_to_support(pairs[i].a, pairs[i].b, params);
    scores[i] = pe_divergence(pairs[i].a, pairs[i].b, adapted);
  });
  return scores;
}

// -r(x) for each unlabeled instance, with the ratio adapted on
// (normal, unlabeled). Larger = more anomalous.
inline std::vector<double> outlier_scores(std::shared_ptr<const ModelParams> params, const Tensor& normal,
                                          const Tensor& unlabeled) {
  const AdaptedRatio adapted = adapt_to_support(normal, unlabeled, std::move(params));
  const Tensor r = estimate_ratio(unlabeled, adapted);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = -r[i];
  return out;
}

}  // namespace meta_rdre
