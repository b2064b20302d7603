#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/train.hpp"

namespace meta_rdre::cli {

// Every setting any command reads. Parsed from `key = value` lines (# starts
// a comment) and overridden by --key value on the command line.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out;

  std::string preset = "desk";
  std::size_t n_source = 0;
  std::size_t n_val = 0;
  std::size_t n_target = 0;
  std::size_t n_per_dataset = 0;
  std::size_t outlier_dim = 2;
  std::size_t n_normal_pool = 200;
  std::size_t n_unlabeled = 300;
  double outlier_rate = 0.05;
  double outlier_shift = 5.0;
  double outlier_variance = 0.1;

  std::string data_dir;
  std::string source_dir;
  std::string validation_dir;
  std::string target_dir;
  std::string manifest;
  std::string split_counts;

  std::string mode = "pair";
  double alpha = 0.5;
  double learning_rate = 1e-3;
  std::size_t max_iters = 10000;
  std::size_t n_query = 128;
  std::size_t ns_min = 1;
  std::size_t ns_max = 10;
  std::size_t ns_unlabeled = 100;
  std::size_t val_interval = 100;
  std::size_t patience = 10;
  std::size_t n_val_episodes = 100;
  double clip_norm = 10.0;
  std::size_t latent_dim = 64;
  std::size_t hidden_dim = 100;
  std::size_t embed_dim = 100;

  std::string checkpoint;
  std::string support_sizes;
  bool include_self_pairs = true;
  bool baselines = false;
  std::string lambda_grid = "0.0001,0.001,0.01,0.1,1";
  std::size_t trials = 1;
  std::size_t grid_points = 121;
};

struct ConfigField {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

namespace detail {

inline std::string_view trim(std::string_view s) { return meta_rdre::detail::trim(s); }

template <typename T>
T parse_value(std::string_view name, std::string_view text) {
  text = trim(text);
  if constexpr (std::is_same_v<T, std::string>) {
    return std::string(text);
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(std::string(name) + ": expected a boolean, got '" + std::string(text) + "'");
  } else if constexpr (std::is_floating_point_v<T>) {
    const auto v = meta_rdre::detail::parse_double(text);
    if (!v) throw ConfigError(std::string(name) + ": expected a number, got '" + std::string(text) + "'");
    return *v;
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
      throw ConfigError(std::string(name) + ": expected a non-negative integer, got '" + std::string(text) + "'");
    }
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return meta_rdre::detail::format_double(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
ConfigField field(std::string name, T RunConfig::*member, std::string doc) {
  ConfigField f;
  f.name = name;
  f.doc = std::move(doc);
  f.get = [member](const RunConfig& c) { return format_value(c.*member); };
  f.set = [member, name](RunConfig& c, std::string_view text) { c.*member = parse_value<T>(name, text); };
  return f;
}

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
  using detail::field;
  static const std::vector<ConfigField> fields{
      field("seed", &RunConfig::seed, "master seed; every random stream derives from it"),
      field("out", &RunConfig::out, "output directory (required)"),
      field("preset", &RunConfig::preset, "gen-synth suite: desk (100/3/20), full (600/3/20) or outlier (20/3/5)"),
      field("n_source", &RunConfig::n_source, "source datasets; 0 = preset value"),
      field("n_val", &RunConfig::n_val, "validation datasets; 0 = preset value"),
      field("n_target", &RunConfig::n_target, "target datasets; 0 = preset value"),
      field("n_per_dataset", &RunConfig::n_per_dataset, "instances per Gaussian dataset; 0 = 300"),
      field("outlier_dim", &RunConfig::outlier_dim, "feature dimension of the outlier suite"),
      field("n_normal_pool", &RunConfig::n_normal_pool, "outlier suite: normal-pool size per dataset"),
      field("n_unlabeled", &RunConfig::n_unlabeled, "outlier suite: unlabeled-pool size per dataset"),
      field("outlier_rate", &RunConfig::outlier_rate, "outlier suite: outlier fraction of the unlabeled pool"),
      field("outlier_shift", &RunConfig::outlier_shift, "outlier suite: per-coordinate mean shift of outliers"),
      field("outlier_variance", &RunConfig::outlier_variance, "outlier suite: isotropic outlier variance"),
      field("data_dir", &RunConfig::data_dir, "root holding source/, validation/, target/ and manifest.csv"),
      field("source_dir", &RunConfig::source_dir, "source datasets; default <data_dir>/source"),
      field("validation_dir", &RunConfig::validation_dir, "validation datasets; default <data_dir>/validation"),
      field("target_dir", &RunConfig::target_dir, "target datasets; default <data_dir>/target"),
      field("manifest", &RunConfig::manifest, "Gaussian manifest; default <data_dir>/manifest.csv when present"),
      field("split_counts", &RunConfig::split_counts,
            "source,validation,target counts to split the flat <data_dir>/*.csv; empty = use subdirectories"),
      field("mode", &RunConfig::mode, "training regime: pair or outlier"),
      field("alpha", &RunConfig::alpha, "relative parameter in [0, 1)"),
      field("learning_rate", &RunConfig::learning_rate, "Adam learning rate"),
      field("max_iters", &RunConfig::max_iters, "maximum training iterations"),
      field("n_query", &RunConfig::n_query, "query instances per side before adding supports"),
      field("ns_min", &RunConfig::ns_min, "smallest training support size"),
      field("ns_max", &RunConfig::ns_max, "largest training support size"),
      field("ns_unlabeled", &RunConfig::ns_unlabeled, "unlabeled support size in outlier mode"),
      field("val_interval", &RunConfig::val_interval, "iterations between validation checks"),
      field("patience", &RunConfig::patience, "checks without improvement before stopping"),
      field("n_val_episodes", &RunConfig::n_val_episodes, "frozen validation episodes"),
      field("clip_norm", &RunConfig::clip_norm, "global gradient-norm clip; <= 0 disables"),
      field("latent_dim", &RunConfig::latent_dim, "dataset latent dimension (grid 4..256)"),
      field("hidden_dim", &RunConfig::hidden_dim, "hidden width of f, g and h"),
      field("embed_dim", &RunConfig::embed_dim, "embedding dimension T"),
      field("checkpoint", &RunConfig::checkpoint, "checkpoint for eval/compare/detect"),
      field("support_sizes", &RunConfig::support_sizes,
            "comma-separated support sizes; empty = 10 for eval/baseline, 1..5 for compare/detect"),
      field("include_self_pairs", &RunConfig::include_self_pairs, "evaluate (A, A) pairs in eval/baseline"),
      field("baselines", &RunConfig::baselines, "also run RuLSIF and uLSIF"),
      field("lambda_grid", &RunConfig::lambda_grid, "kernel-baseline regularizer grid"),
      field("trials", &RunConfig::trials, "repetitions of support sampling"),
      field("grid_points", &RunConfig::grid_points, "points of the 1-D ratio grid written by eval"),
  };
  return fields;
}

inline const ConfigField& find_field(std::string_view name) {
  for (const auto& f : config_fields()) {
    if (f.name == name) return f;
  }
  throw ConfigError("unknown configuration key '" + std::string(name) + "'");
}

inline void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_field(key).set(cfg, value);
}

inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_value(cfg, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  apply_config_text(cfg, in, path.string());
}

// Every key in registry order; the output parses back to the same config.
inline std::string serialize(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : config_fields()) os << f.name << " = " << f.get(cfg) << '\n';
  return os.str();
}

template <typename T>
std::vector<T> parse_list(std::string_view name, std::string_view text) {
  std::vector<T> out;
  text = detail::trim(text);
  if (text.empty()) return out;
  for (auto cell : meta_rdre::detail::split_commas(text)) out.push_back(detail::parse_value<T>(name, cell));
  return out;
}

inline TrainConfig to_train_config(const RunConfig& c) {
  TrainConfig t;
  t.alpha = c.alpha;
  t.learning_rate = c.learning_rate;
  t.max_iters = c.max_iters;
  t.n_query = c.n_query;
  t.ns_min = c.ns_min;
  t.ns_max = c.ns_max;
  t.ns_unlabeled = c.ns_unlabeled;
  t.val_interval = c.val_interval;
  t.patience = c.patience;
  t.n_val_episodes = c.n_val_episodes;
  t.clip_norm = c.clip_norm;
  t.seed = c.seed;
  if (c.mode == "pair") {
    t.mode = TrainMode::pair;
  } else if (c.mode == "outlier") {
    t.mode = TrainMode::outlier;
  } else {
    throw ConfigError("mode must be 'pair' or 'outlier', got '" + c.mode + "'");
  }
  t.dims.latent_dim = c.latent_dim;
  t.dims.hidden_dim = c.hidden_dim;
  t.dims.embed_dim = c.embed_dim;
  t.validate();
  return t;
}

}  // namespace meta_rdre::cli
