#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/ops.hpp"
#include "meta_rdre/numgrad/tape.hpp"
#include "meta_rdre/numgrad/tensor.hpp"
#include "meta_rdre/rng.hpp"

namespace meta_rdre {

using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

struct ModelDims {
  std::size_t input_dim = 1;     // M
  std::size_t latent_dim = 64;   // K
  std::size_t embed_dim = 100;   // T
  std::size_t hidden_dim = 100;  // width of every hidden layer

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct DenseLayer {
  Tensor weight;  // fan_in x fan_out
  Tensor bias;    // fan_out
};

// Trainable state: instance encoder f, set decoder g, embedding network h,
// and the log-regularizer rho (lambda = exp(rho)). alpha is fixed per model.
struct ModelParams {
  ModelDims dims;
  std::vector<DenseLayer> f;
  std::vector<DenseLayer> g;
  std::vector<DenseLayer> h;
  Tensor rho = Tensor::scalar(std::log(0.1));
  double alpha = 0.5;

  [[nodiscard]] double lambda() const { return std::exp(rho[0]); }
};

// Visits every trainable tensor in the fixed checkpoint order
// f.0.weight, f.0.bias, ..., g.*, h.*, rho.
template <typename Params, typename Fn>
  requires std::same_as<std::remove_const_t<Params>, ModelParams>
void for_each_parameter(Params& params, Fn&& fn) {
  const auto visit = [&](auto& layers, const char* prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      fn(base + ".weight", layers[i].weight);
      fn(base + ".bias", layers[i].bias);
    }
  };
  visit(params.f, "f");
  visit(params.g, "g");
  visit(params.h, "h");
  fn(std::string("rho"), params.rho);
}

inline std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_parameter(params, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

namespace detail {

inline DenseLayer random_layer(std::size_t fan_in, std::size_t fan_out, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
  DenseLayer layer{Tensor({fan_in, fan_out}), Tensor({fan_out})};
  for (double& v : layer.weight.data()) v = normal(rng);
  return layer;
}

}  // namespace detail

// f: M -> H -> H -> H, g: H -> H -> K, h: (M + 2K) -> H -> H -> T.
// Weights are He-normal (std sqrt(2 / fan_in)) except the output layers of
// g and h, which use std sqrt(1 / fan_in). Biases start at zero and
// lambda at 0.1.
inline ModelParams init_params(std::uint64_t seed, const ModelDims& dims, double alpha) {
  if (dims.input_dim < 1 || dims.latent_dim < 1 || dims.embed_dim < 1 || dims.hidden_dim < 1) {
    throw ConfigError("model dimensions must all be at least 1");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  Rng rng(seed);
  const std::size_t m = dims.input_dim;
  const std::size_t k = dims.latent_dim;
  const std::size_t hid = dims.hidden_dim;
  ModelParams p;
  p.dims = dims;
  p.alpha = alpha;
  p.f = {detail::random_layer(m, hid, 2.0, rng), detail::random_layer(hid, hid, 2.0, rng),
         detail::random_layer(hid, hid, 2.0, rng)};
  p.g = {detail::random_layer(hid, hid, 2.0, rng), detail::random_layer(hid, k, 1.0, rng)};
  p.h = {detail::random_layer(m + 2 * k, hid, 2.0, rng), detail::random_layer(hid, hid, 2.0, rng),
         detail::random_layer(hid, dims.embed_dim, 1.0, rng)};
  return p;
}

inline ModelParams init_params(std::uint64_t seed, std::size_t input_dim, std::size_t latent_dim, double alpha) {
  ModelDims dims;
  dims.input_dim = input_dim;
  dims.latent_dim = latent_dim;
  return init_params(seed, dims, alpha);
}

// Parameters placed on a tape, either as gradient-collecting leaves
// (training) or as borrowed constants (inference).
struct BoundModel {
  struct Layer {
    Var weight;
    Var bias;
  };
  const ModelParams* params = nullptr;
  std::vector<Layer> f, g, h;
  Var rho;
  // Every bound tensor in for_each_parameter order.
  std::vector<Var> leaves;
};

inline BoundModel bind(Tape& tape, const ModelParams& params, bool trainable) {
  BoundModel bound;
  bound.params = &params;
  const auto place = [&](const Tensor& t) {
    Var v = trainable ? tape.parameter(t) : tape.constant_ref(t);
    bound.leaves.push_back(v);
    return v;
  };
  const auto place_layers = [&](const std::vector<DenseLayer>& layers, std::vector<BoundModel::Layer>& out) {
    for (const auto& layer : layers) {
      Var w = place(layer.weight);
      Var b = place(layer.bias);
      out.push_back({w, b});
    }
  };
  place_layers(params.f, bound.f);
  place_layers(params.g, bound.g);
  place_layers(params.h, bound.h);
  bound.rho = place(params.rho);
  return bound;
}

namespace detail {

// Affine layers with ReLU between consecutive layers (none after the last).
inline Var run_layers(Var x, const std::vector<BoundModel::Layer>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = numgrad::affine(x, layers[i].weight, layers[i].bias);
    if (i + 1 < layers.size()) x = numgrad::relu(x);
  }
  return x;
}

inline void require_instances(const Tensor& x, std::size_t input_dim, const char* what) {
  if (x.rank() != 2 || x.cols() != input_dim) {
    throw ShapeError(std::string(what) + ": expected n x " + std::to_string(input_dim) + " instances, got " +
                     numgrad::shape_string(x.shape()));
  }
}

}  // namespace detail

struct LatentPair {
  Tensor z_nu;
  Tensor z_de;
};

// z = g(mean_{x in S} f(x)) for an n x M set S.
inline Var encode_set(const BoundModel& model, Var set) {
  const Tensor& s = set.tape->value(set);
  detail::require_instances(s, model.params->dims.input_dim, "encode_set");
  if (s.rows() == 0) throw DataError("encode_set of an empty set");
  Var pooled = numgrad::mean_rows(detail::run_layers(set, model.f));
  return detail::run_layers(pooled, model.g);
}

// Strictly positive n x T embeddings h([x, z_nu, z_de]).
inline Var embed(const BoundModel& model, Var x, Var z_nu, Var z_de) {
  detail::require_instances(x.tape->value(x), model.params->dims.input_dim, "embed");
  const std::size_t k = model.params->dims.latent_dim;
  if (z_nu.tape->value(z_nu).size() != k || z_de.tape->value(z_de).size() != k) {
    throw ShapeError("embed: latent vectors must have length " + std::to_string(k));
  }
  Var joined = numgrad::concat_latents(x, z_nu, z_de);
  Var out = numgrad::softplus(detail::run_layers(joined, model.h));
  return out;
}

// Value-level conveniences that evaluate on a scratch, gradient-free tape.
inline Tensor encode_set(const Tensor& set, const ModelParams& params) {
  Tape tape;
  BoundModel model = bind(tape, params, false);
  return tape.value(encode_set(model, tape.constant_ref(set)));
}

inline Tensor embed(const Tensor& x, const LatentPair& latents, const ModelParams& params) {
  Tape tape;
  BoundModel model = bind(tape, params, false);
  Var out = embed(model, tape.constant_ref(x), tape.constant_ref(latents.z_nu), tape.constant_ref(latents.z_de));
  return tape.value(out);
}

}  // namespace meta_rdre
