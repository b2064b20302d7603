#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/baselines.hpp"
#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/evalkit.hpp"
#include "meta_rdre/parallel.hpp"
#include "meta_rdre/rng.hpp"

// Target-side protocols shared by the CLI commands and the acceptance
// suite: squared-error evaluation over ordered target pairs, dataset
// comparison by PE divergence, and inlier-based outlier detection.
namespace meta_rdre {

struct ExperimentOptions {
  std::vector<std::size_t> support_sizes{10};
  bool include_self_pairs = true;
  bool baselines = false;
  std::vector<double> lambda_grid = default_lambda_grid();
  std::size_t trials = 1;
  double alpha = 0.5;  // used by baselines when no model is given
  std::uint64_t seed = 1;
};

struct PairSplit {
  Tensor support_nu, support_de;
  Tensor test_nu, test_de;
};

// Supports of size n_support from each dataset; the remaining instances are
// the test sets. For a self-pair both supports are disjoint draws from the
// same dataset and the test set is what is left after removing both.
inline PairSplit split_pair(const DatasetSample& a, const DatasetSample& b, bool self_pair, std::size_t n_support,
                            Rng& rng) {
  PairSplit out;
  if (self_pair) {
    if (a.size() < 2 * n_support + 1) throw DataError("dataset '" + a.id + "' too small for a self-pair split");
    auto perm = detail::draw_without_replacement(detail::all_rows(a.size()), a.size(), rng);
    const auto mid = perm.begin() + static_cast<std::ptrdiff_t>(n_support);
    const auto end = mid + static_cast<std::ptrdiff_t>(n_support);
    out.support_nu = a.features.select_rows(std::vector<std::size_t>(perm.begin(), mid));
    out.support_de = a.features.select_rows(std::vector<std::size_t>(mid, end));
    out.test_nu = a.features.select_rows(std::vector<std::size_t>(end, perm.end()));
    out.test_de = out.test_nu;
    return out;
  }
  const auto take = [&](const DatasetSample& d, Tensor& support, Tensor& test) {
    if (d.size() < n_support + 1) throw DataError("dataset '" + d.id + "' too small for support size");
    auto perm = detail::draw_without_replacement(detail::all_rows(d.size()), d.size(), rng);
    const auto mid = perm.begin() + static_cast<std::ptrdiff_t>(n_support);
    support = d.features.select_rows(std::vector<std::size_t>(perm.begin(), mid));
    test = d.features.select_rows(std::vector<std::size_t>(mid, perm.end()));
  };
  take(a, out.support_nu, out.test_nu);
  take(b, out.support_de, out.test_de);
  return out;
}

inline Rng experiment_stream(std::uint64_t seed, std::size_t n_support, std::size_t trial, std::size_t unit) {
  return Rng(seed).substream(n_support, trial).substream(unit);
}

// Kernel baseline fitted with the median-trick bandwidth of both supports.
inline KernelRatioModel fit_kernel_baseline(const Tensor& support_nu, const Tensor& support_de, double alpha,
                                            double lambda) {
  return rulsif_fit(support_nu, support_de, alpha, lambda, median_bandwidth(support_nu, support_de));
}

struct KernelRatioFn {
  const KernelRatioModel* model;
  Tensor operator()(const Tensor& x) const { return rulsif_predict(*model, x); }
};

// ---------------------------------------------------------------------------
// Relative DRE: test squared error over ordered target pairs.

struct PairEvalRow {
  std::size_t n_support = 0;
  std::size_t trial = 0;
  std::size_t nu = 0;
  std::size_t de = 0;
  std::optional<double> ours;
  std::optional<double> oracle;
  std::vector<double> rulsif;  // per lambda
  std::vector<double> ulsif;   // per lambda, alpha = 0 fit scored at alpha
};

using SpecLookup = std::function<const GaussianSpec*(const DatasetSample&)>;

inline std::vector<PairEvalRow> evaluate_pairs(std::span<const DatasetSample> targets,
                                               std::shared_ptr<const ModelParams> params,
                                               const SpecLookup& specs, const ExperimentOptions& opt) {
  require_consistent_dim(targets);
  if (params && !targets.empty() && params->dims.input_dim != targets.front().dim()) {
    throw ShapeError("checkpoint expects " + std::to_string(params->dims.input_dim) + " features but targets have " +
                     std::to_string(targets.front().dim()));
  }
  const double alpha = params ? params->alpha : opt.alpha;
  const std::size_t n = targets.size();
  struct Job {
    std::size_t ns, trial, i, j;
  };
  std::vector<Job> jobs;
  for (std::size_t ns : opt.support_sizes) {
    for (std::size_t t = 0; t < opt.trials; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j && !opt.include_self_pairs) continue;
          jobs.push_back({ns, t, i, j});
        }
      }
    }
  }
  std::vector<PairEvalRow> rows(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& job = jobs[k];
    Rng rng = experiment_stream(opt.seed, job.ns, job.trial, job.i * n + job.j);
    const PairSplit split = split_pair(targets[job.i], targets[job.j], job.i == job.j, job.ns, rng);
    PairEvalRow row{job.ns, job.trial, job.i, job.j, {}, {}, {}, {}};
    if (params) {
      const AdaptedRatio adapted = adapt_to_support(split.support_nu, split.support_de, params);
      row.ours = query_loss(split.test_nu, split.test_de, adapted);
    }
    if (specs) {
      const GaussianSpec* a = specs(targets[job.i]);
      const GaussianSpec* b = specs(targets[job.j]);
      if (a && b) row.oracle = test_squared_error(GaussianRatio{*a, *b, alpha}, split.test_nu, split.test_de, alpha);
    }
    if (opt.baselines) {
      for (double lambda : opt.lambda_grid) {
        const auto rel = fit_kernel_baseline(split.support_nu, split.support_de, alpha, lambda);
        row.rulsif.push_back(test_squared_error(KernelRatioFn{&rel}, split.test_nu, split.test_de, alpha));
        const auto plain = fit_kernel_baseline(split.support_nu, split.support_de, 0.0, lambda);
        row.ulsif.push_back(test_squared_error(KernelRatioFn{&plain}, split.test_nu, split.test_de, alpha));
      }
    }
    rows[k] = std::move(row);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Dataset comparison: PE divergence scores over all ordered target pairs.

struct CompareRow {
  std::size_t n_support = 0;
  std::size_t trial = 0;
  std::size_t nu = 0;
  std::size_t de = 0;
  int different = 0;  // positive class of the comparison AUC
  std::optional<double> ours;
  std::vector<double> rulsif;  // relative PE per lambda
  std::vector<double> ulsif;   // plain PE (alpha = 0) per lambda
};

struct CompareAuc {
  std::size_t n_support = 0;
  std::size_t trial = 0;
  std::string method;
  double auc = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<CompareAuc> aucs;
};

using SameDistribution = std::function<bool(std::size_t, std::size_t)>;

inline std::string lambda_label(const char* method, double lambda) {
  return std::string(method) + "@" + detail::format_double(lambda);
}

inline CompareResult compare_experiment(std::span<const DatasetSample> targets,
                                        std::shared_ptr<const ModelParams> params, const SameDistribution& same,
                                        const ExperimentOptions& opt) {
  require_consistent_dim(targets);
  if (params && !targets.empty() && params->dims.input_dim != targets.front().dim()) {
    throw ShapeError("checkpoint expects " + std::to_string(params->dims.input_dim) + " features but targets have " +
                     std::to_string(targets.front().dim()));
  }
  const double alpha = params ? params->alpha : opt.alpha;
  const std::size_t n = targets.size();
  CompareResult result;
  for (std::size_t ns : opt.support_sizes) {
    for (std::size_t t = 0; t < opt.trials; ++t) {
      std::vector<CompareRow> rows(n * n);
      parallel_for(n * n, [&](std::size_t k) {
        const std::size_t i = k / n;
        const std::size_t j = k % n;
        Rng rng = experiment_stream(opt.seed, ns, t, k);
        const PairSplit split = split_pair(targets[i], targets[j], i == j, ns, rng);
        CompareRow row{ns, t, i, j, (i == j || (same && same(i, j))) ? 0 : 1, {}, {}, {}};
        if (params) {
          const AdaptedRatio adapted = adapt_to_support(split.support_nu, split.support_de, params);
          row.ours = pe_divergence(split.support_nu, split.support_de, adapted);
        }
        if (opt.baselines) {
          for (double lambda : opt.lambda_grid) {
            const auto rel = fit_kernel_baseline(split.support_nu, split.support_de, alpha, lambda);
            row.rulsif.push_back(pe_divergence(KernelRatioFn{&rel}, split.support_nu, split.support_de, alpha));
            const auto plain = fit_kernel_baseline(split.support_nu, split.support_de, 0.0, lambda);
            row.ulsif.push_back(pe_divergence(KernelRatioFn{&plain}, split.support_nu, split.support_de, 0.0));
          }
        }
        rows[k] = std::move(row);
      });
      std::vector<int> labels;
      for (const auto& r : rows) labels.push_back(r.different);
      const auto add_auc = [&](const std::string& method, auto value_of) {
        std::vector<double> scores;
        for (const auto& r : rows) scores.push_back(value_of(r));
        result.aucs.push_back({ns, t, method, auc(scores, labels)});
      };
      if (params) add_auc("ours", [](const CompareRow& r) { return *r.ours; });
      for (std::size_t l = 0; l < (opt.baselines ? opt.lambda_grid.size() : 0); ++l) {
        add_auc(lambda_label("rulsif", opt.lambda_grid[l]), [l](const CompareRow& r) { return r.rulsif[l]; });
        add_auc(lambda_label("ulsif", opt.lambda_grid[l]), [l](const CompareRow& r) { return r.ulsif[l]; });
      }
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inlier-based outlier detection on labeled target datasets.

struct DetectScores {
  std::size_t n_support = 0;
  std::size_t trial = 0;
  std::size_t target = 0;
  std::vector<std::size_t> rows;  // dataset rows that were scored
  std::vector<int> labels;
  std::vector<double> ours;
  std::map<std::string, std::vector<double>> baselines;
};

struct DetectAuc {
  std::size_t n_support = 0;
  std::size_t trial = 0;
  std::size_t target = 0;
  std::string method;
  double auc = 0.0;
};

struct DetectResult {
  std::vector<DetectScores> scores;
  std::vector<DetectAuc> aucs;
};

// Normal supports are drawn from each target's normal pool; every other
// instance is unlabeled and scored. Labels are read only for the AUC.
inline DetectResult detect_experiment(std::span<const DatasetSample> targets,
                                      std::shared_ptr<const ModelParams> params, const ExperimentOptions& opt) {
  require_consistent_dim(targets);
  for (const auto& d : targets) {
    if (!d.has_roles() || !d.has_labels()) {
      throw DataError("dataset '" + d.id + "' needs role (nor/un) and label columns for detection");
    }
  }
  if (params && !targets.empty() && params->dims.input_dim != targets.front().dim()) {
    throw ShapeError("checkpoint expects " + std::to_string(params->dims.input_dim) + " features but targets have " +
                     std::to_string(targets.front().dim()));
  }
  const double alpha = params ? params->alpha : opt.alpha;
  struct Job {
    std::size_t ns, trial, target;
  };
  std::vector<Job> jobs;
  for (std::size_t ns : opt.support_sizes) {
    for (std::size_t t = 0; t < opt.trials; ++t) {
      for (std::size_t d = 0; d < targets.size(); ++d) jobs.push_back({ns, t, d});
    }
  }
  std::vector<DetectScores> scored(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& job = jobs[k];
    const DatasetSample& ds = targets[job.target];
    Rng rng = experiment_stream(opt.seed, job.ns, job.trial, job.target);
    const auto normal_pool = ds.indices_with_role(Role::normal);
    if (normal_pool.size() < job.ns) throw DataError("dataset '" + ds.id + "' normal pool smaller than support size");
    auto support_rows = detail::draw_without_replacement(normal_pool, job.ns, rng);
    std::vector<char> in_support(ds.size(), 0);
    for (std::size_t r : support_rows) in_support[r] = 1;
    DetectScores out;
    out.n_support = job.ns;
    out.trial = job.trial;
    out.target = job.target;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (!in_support[r]) out.rows.push_back(r);
    }
    for (std::size_t r : out.rows) out.labels.push_back(ds.labels[r]);
    const Tensor normal = ds.features.select_rows(support_rows);
    const Tensor unlabeled = ds.features.select_rows(out.rows);
    if (params) out.ours = outlier_scores(params, normal, unlabeled);
    if (opt.baselines) {
      const double sigma = median_bandwidth(normal, unlabeled);
      for (double lambda : opt.lambda_grid) {
        for (const auto& [name, a] : {std::pair{"rulsif", alpha}, std::pair{"ulsif", 0.0}}) {
          const auto model = rulsif_fit(normal, unlabeled, a, lambda, sigma);
          const Tensor r = rulsif_predict(model, unlabeled);
          std::vector<double> s(r.size());
          for (std::size_t i = 0; i < r.size(); ++i) s[i] = -r[i];
          out.baselines[lambda_label(name, lambda)] = std::move(s);
        }
      }
    }
    scored[k] = std::move(out);
  });
  DetectResult result;
  for (const auto& s : scored) {
    if (params) result.aucs.push_back({s.n_support, s.trial, s.target, "ours", auc(s.ours, s.labels)});
    for (const auto& [name, values] : s.baselines) {
      result.aucs.push_back({s.n_support, s.trial, s.target, name, auc(values, s.labels)});
    }
  }
  result.scores = std::move(scored);
  return result;
}

}  // namespace meta_rdre
