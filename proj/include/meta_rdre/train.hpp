#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/model.hpp"
#include "meta_rdre/parallel.hpp"
#include "meta_rdre/rng.hpp"

namespace meta_rdre {

enum class TrainMode { pair, outlier };

struct TrainConfig {
  double alpha = 0.5;
  double learning_rate = 1e-3;
  std::size_t max_iters = 10000;
  std::size_t n_query = 128;
  std::size_t ns_min = 1;  // per-episode support size drawn from [ns_min, ns_max]
  std::size_t ns_max = 10;
  std::size_t ns_unlabeled = 100;  // unlabeled support size in outlier mode
  std::size_t val_interval = 100;
  std::size_t patience = 10;
  std::size_t n_val_episodes = 100;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::pair;
  ModelDims dims;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (n_query == 0 || ns_min == 0 || ns_max < ns_min || ns_unlabeled == 0) {
      throw ConfigError("support range must satisfy 1 <= ns_min <= ns_max and query/unlabeled sizes must be positive");
    }
    if (val_interval == 0 || patience == 0 || n_val_episodes == 0) {
      throw ConfigError("val_interval, patience and n_val_episodes must be positive");
    }
  }
};

// First/second moment estimates per parameter tensor, in for_each_parameter
// order.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ModelParams& params) {
    AdamState s;
    for_each_parameter(params, [&](const std::string&, const Tensor& t) {
      s.first_moment.emplace_back(t.shape());
      s.second_moment.emplace_back(t.shape());
    });
    return s;
  }
};

inline void adam_step(ModelParams& params, std::span<const Tensor> grads, AdamState& state, double lr) {
  std::size_t idx = 0;
  for_each_parameter(params, [&](const std::string& name, const Tensor& p) {
    if (idx >= grads.size() || grads[idx].shape() != p.shape()) {
      throw ShapeError("gradient for " + name + " does not match its parameter");
    }
    if (!grads[idx].all_finite()) throw NumericalError("non-finite gradient for parameter " + name);
    ++idx;
  });
  if (idx != grads.size() || state.first_moment.size() != idx) throw ShapeError("gradient count mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  idx = 0;
  for_each_parameter(params, [&](const std::string&, Tensor& p) {
    Tensor& m = state.first_moment[idx];
    Tensor& v = state.second_moment[idx];
    const Tensor& g = grads[idx];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    ++idx;
  });
}

// Query loss of one episode recorded on `tape`.
inline Var episode_loss(const BoundModel& model, Tape& tape, const Episode& ep) {
  TapedAdaptation a = adapt_to_support(model, tape.constant_ref(ep.support_nu), tape.constant_ref(ep.support_de));
  return query_loss(model, a, tape.constant_ref(ep.query_nu), tape.constant_ref(ep.query_de));
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;  // for_each_parameter order
};

inline LossAndGrad episode_loss_and_grad(const ModelParams& params, const Episode& ep) {
  Tape tape;
  BoundModel model = bind(tape, params, true);
  Var loss = episode_loss(model, tape, ep);
  tape.backward(loss);
  LossAndGrad out;
  out.loss = tape.value(loss).item();
  out.grads.reserve(model.leaves.size());
  for (Var leaf : model.leaves) out.grads.push_back(tape.grad(leaf));
  return out;
}

inline double episode_loss_value(const ModelParams& params, const Episode& ep) {
  Tape tape;
  BoundModel model = bind(tape, params, false);
  return tape.value(episode_loss(model, tape, ep)).item();
}

// Mean query loss over a fixed episode set. Episodes are evaluated
// independently and reduced in index order.
inline double validation_loss(const ModelParams& params, std::span<const Episode> episodes) {
  if (episodes.empty()) throw DataError("validation needs at least one episode");
  std::vector<double> losses(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) { losses[i] = episode_loss_value(params, episodes[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

struct TrainingLog {
  struct Step {
    std::size_t iteration = 0;
    double train_loss = 0.0;
    std::size_t n_support = 0;
  };
  struct Check {
    std::size_t iteration = 0;
    double val_loss = 0.0;
  };
  std::vector<Step> steps;
  std::vector<Check> checks;
  std::size_t best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;

  // iteration,train_loss,val_loss,n_support; empty cells where a value was
  // not recorded at that iteration.
  void write_csv(std::ostream& out) const {
    out << "iteration,train_loss,val_loss,n_support\n";
    std::size_t c = 0;
    const auto checks_before = [&](std::size_t iter) {
      for (; c < checks.size() && checks[c].iteration < iter; ++c) {
        out << checks[c].iteration << ",," << detail::format_double(checks[c].val_loss) << ",\n";
      }
    };
    for (const Step& s : steps) {
      checks_before(s.iteration);
      out << s.iteration << ',' << detail::format_double(s.train_loss) << ',';
      if (c < checks.size() && checks[c].iteration == s.iteration) out << detail::format_double(checks[c++].val_loss);
      out << ',' << s.n_support << '\n';
    }
    checks_before(std::numeric_limits<std::size_t>::max());
  }
};

struct TrainResult {
  ModelParams params;  // parameters at the best validation check
  TrainingLog log;
};

namespace detail {

inline Episode sample_training_episode(std::span<const DatasetSample> data, const TrainConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<std::size_t> support_size(cfg.ns_min, cfg.ns_max);
  const std::size_t ns = support_size(rng);
  if (cfg.mode == TrainMode::pair) return sample_pair_episode(data, ns, cfg.n_query, rng, cfg.alpha);
  return sample_outlier_episode(data, ns, cfg.ns_unlabeled, cfg.n_query, rng, cfg.alpha);
}

}  // namespace detail

// Fixed validation episodes drawn from a dedicated stream of the run seed.
inline std::vector<Episode> frozen_validation_episodes(std::span<const DatasetSample> validation,
                                                       const TrainConfig& cfg) {
  Rng rng = Rng(cfg.seed).substream(2);
  std::vector<Episode> out;
  out.reserve(cfg.n_val_episodes);
  for (std::size_t i = 0; i < cfg.n_val_episodes; ++i) out.push_back(detail::sample_training_episode(validation, cfg, rng));
  return out;
}

using CheckCallback = std::function<void(std::size_t iteration, double val_loss, bool improved)>;

// Episodic meta-training with Adam and early stopping on the mean query
// loss of frozen validation episodes. Validation is checked before the
// first step, every val_interval steps and after the last step; training
// stops once `patience` consecutive checks fail to improve.
inline TrainResult meta_train(std::span<const DatasetSample> sources, std::span<const DatasetSample> validation,
                              const TrainConfig& cfg, std::optional<ModelParams> initial = std::nullopt,
                              const CheckCallback& on_check = {}) {
  cfg.validate();
  if (sources.empty() || validation.empty()) throw DataError("meta_train needs source and validation datasets");
  require_consistent_dim(sources);
  require_consistent_dim(validation);
  if (sources.front().dim() != validation.front().dim()) throw DataError("source and validation dimensions differ");
  if (cfg.mode == TrainMode::outlier) {
    for (const auto* group : {&sources, &validation}) {
      for (const auto& d : *group) {
        if (!d.has_roles()) throw DataError("outlier mode requires role columns; dataset '" + d.id + "' has none");
      }
    }
  }

  ModelDims dims = cfg.dims;
  dims.input_dim = sources.front().dim();
  ModelParams params = initial ? *std::move(initial) : init_params(Rng(cfg.seed).substream(0)(), dims, cfg.alpha);
  if (params.dims.input_dim != dims.input_dim) throw ShapeError("initial parameters do not match data dimension");

  TrainResult result;
  result.params = params;
  if (cfg.max_iters == 0) return result;

  const std::vector<Episode> val_episodes = frozen_validation_episodes(validation, cfg);
  Rng train_rng = Rng(cfg.seed).substream(1);
  AdamState adam = AdamState::for_params(params);
  std::size_t stale_checks = 0;

  const auto check = [&](std::size_t iter) {
    const double v = validation_loss(params, val_episodes);
    result.log.checks.push_back({iter, v});
    const bool improved = v < result.log.best_val_loss;
    if (improved) {
      result.log.best_val_loss = v;
      result.log.best_iteration = iter;
      result.params = params;
      stale_checks = 0;
    } else {
      ++stale_checks;
    }
    if (on_check) on_check(iter, v, improved);
  };

  check(0);
  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    const Episode ep = detail::sample_training_episode(sources, cfg, train_rng);
    LossAndGrad lg = episode_loss_and_grad(params, ep);
    if (!std::isfinite(lg.loss)) throw NumericalError("non-finite training loss at iteration " + std::to_string(iter));
    clip_global_norm(lg.grads, cfg.clip_norm);
    adam_step(params, lg.grads, adam, cfg.learning_rate);
    result.log.steps.push_back({iter, lg.loss, ep.support_nu.rows()});
    if (iter % cfg.val_interval == 0 || iter == cfg.max_iters) {
      check(iter);
      if (stale_checks >= cfg.patience) {
        result.log.early_stopped = iter < cfg.max_iters;
        break;
      }
    }
  }
  return result;
}

}  // namespace meta_rdre
