#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meta_rdre/checkpoint.hpp"
#include "meta_rdre/cli/config.hpp"
#include "meta_rdre/episodes.hpp"
#include "meta_rdre/error.hpp"
#include "meta_rdre/experiments.hpp"
#include "meta_rdre/train.hpp"

namespace meta_rdre::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kSuccess = 0,
  kUnexpectedError = 1,
  kConfigFailure = 2,
  kDataFailure = 3,
  kNumericalFailure = 4,
  kIoFailure = 5,
};

// ---------------------------------------------------------------------------
// Small output helpers

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  ~CsvWriter() = default;

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

  static std::string cell(double v) { return meta_rdre::detail::format_double(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest of ground-truth Gaussian parameters: split,id,sigma,mu0[,mu1...]

inline void write_manifest(const fs::path& path, const std::vector<GaussianRecord>& records) {
  CsvWriter w(path);
  const std::size_t dim = records.empty() ? 1 : records.front().spec.dim();
  std::vector<std::string> header{"split", "id", "sigma"};
  for (std::size_t c = 0; c < dim; ++c) header.push_back("mu" + std::to_string(c));
  w.row(header);
  for (const auto& r : records) {
    std::vector<std::string> cells{r.split, r.id, CsvWriter::cell(r.spec.sigma.front())};
    for (double m : r.spec.mu) cells.push_back(CsvWriter::cell(m));
    w.row(cells);
  }
  w.close();
}

inline std::map<std::string, GaussianSpec> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::map<std::string, GaussianSpec> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (meta_rdre::detail::trim(line).empty() || line_no == 1) continue;
    const auto cells = meta_rdre::detail::split_commas(line);
    if (cells.size() < 4) throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed manifest row");
    GaussianSpec spec;
    const auto sigma = meta_rdre::detail::parse_double(cells[2]);
    if (!sigma) throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad sigma");
    spec.sigma = {*sigma};
    for (std::size_t i = 3; i < cells.size(); ++i) {
      const auto mu = meta_rdre::detail::parse_double(cells[i]);
      if (!mu) throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad mean");
      spec.mu.push_back(*mu);
    }
    out[std::string(cells[1])] = spec;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data resolution

struct LoadedData {
  std::vector<DatasetSample> source, validation, target;
  std::map<std::string, GaussianSpec> specs;
};

inline fs::path resolve_dir(const std::string& explicit_dir, const RunConfig& cfg, const char* sub) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (cfg.data_dir.empty()) throw ConfigError(std::string("set data_dir or ") + sub + "_dir");
  return fs::path(cfg.data_dir) / sub;
}

inline LoadedData load_data(const RunConfig& cfg, bool need_train, bool need_target) {
  LoadedData data;
  if (!cfg.split_counts.empty()) {
    const auto counts = parse_list<std::size_t>("split_counts", cfg.split_counts);
    if (counts.size() != 3) throw ConfigError("split_counts needs three comma-separated counts");
    if (cfg.data_dir.empty()) throw ConfigError("split_counts requires data_dir");
    const auto all = load_dataset_dir(cfg.data_dir);
    auto split = split_sources(all, {counts[0], counts[1], counts[2]}, Rng(cfg.seed).substream(7));
    data.source = std::move(split.source);
    data.validation = std::move(split.validation);
    data.target = std::move(split.target);
  } else {
    if (need_train) {
      data.source = load_dataset_dir(resolve_dir(cfg.source_dir, cfg, "source"));
      data.validation = load_dataset_dir(resolve_dir(cfg.validation_dir, cfg, "validation"));
    }
    if (need_target) data.target = load_dataset_dir(resolve_dir(cfg.target_dir, cfg, "target"));
  }
  fs::path manifest = cfg.manifest;
  if (manifest.empty() && !cfg.data_dir.empty() && fs::exists(fs::path(cfg.data_dir) / "manifest.csv")) {
    manifest = fs::path(cfg.data_dir) / "manifest.csv";
  }
  if (!manifest.empty()) data.specs = read_manifest(manifest);
  return data;
}

inline std::shared_ptr<const ModelParams> load_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint is required for this command");
  return std::make_shared<const ModelParams>(load_checkpoint(cfg.checkpoint));
}

inline ExperimentOptions experiment_options(const RunConfig& cfg, std::vector<std::size_t> default_sizes) {
  ExperimentOptions opt;
  opt.support_sizes = parse_list<std::size_t>("support_sizes", cfg.support_sizes);
  if (opt.support_sizes.empty()) opt.support_sizes = std::move(default_sizes);
  for (std::size_t ns : opt.support_sizes) {
    if (ns == 0) throw ConfigError("support sizes must be at least 1");
  }
  opt.include_self_pairs = cfg.include_self_pairs;
  opt.baselines = cfg.baselines;
  opt.lambda_grid = parse_list<double>("lambda_grid", cfg.lambda_grid);
  if (opt.lambda_grid.empty()) throw ConfigError("lambda_grid must not be empty");
  for (double l : opt.lambda_grid) {
    if (!(l > 0.0)) throw ConfigError("lambda_grid entries must be positive");
  }
  if (cfg.trials == 0) throw ConfigError("trials must be at least 1");
  opt.trials = cfg.trials;
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  opt.alpha = cfg.alpha;
  opt.seed = cfg.seed;
  return opt;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_gen_synth(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.out;
  const auto pick = [](std::size_t v, std::size_t preset) { return v ? v : preset; };
  SyntheticSuite suite;
  if (cfg.preset == "desk" || cfg.preset == "full") {
    const std::size_t default_sources = cfg.preset == "desk" ? 100 : 600;
    suite = gen_synthetic_gaussian_suite(pick(cfg.n_source, default_sources), pick(cfg.n_val, 3),
                                         pick(cfg.n_target, 20), pick(cfg.n_per_dataset, 300), Rng(cfg.seed));
  } else if (cfg.preset == "outlier") {
    OutlierSuiteConfig oc;
    oc.n_source = pick(cfg.n_source, oc.n_source);
    oc.n_val = pick(cfg.n_val, oc.n_val);
    oc.n_target = pick(cfg.n_target, oc.n_target);
    oc.dim = cfg.outlier_dim;
    oc.n_normal_pool = cfg.n_normal_pool;
    oc.n_unlabeled = cfg.n_unlabeled;
    oc.outlier_rate = cfg.outlier_rate;
    oc.outlier_shift = cfg.outlier_shift;
    oc.outlier_variance = cfg.outlier_variance;
    suite = gen_synthetic_outlier_suite(oc, Rng(cfg.seed));
  } else {
    throw ConfigError("preset must be desk, full or outlier, got '" + cfg.preset + "'");
  }
  write_dataset_dir(out / "source", suite.source);
  write_dataset_dir(out / "validation", suite.validation);
  write_dataset_dir(out / "target", suite.target);
  write_manifest(out / "manifest.csv", suite.records);
  log << "wrote " << suite.source.size() << " source, " << suite.validation.size() << " validation and "
      << suite.target.size() << " target datasets to " << out.string() << '\n';
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const TrainConfig tc = to_train_config(cfg);
  const LoadedData data = load_data(cfg, true, false);
  const fs::path out = cfg.out;
  TrainResult result = meta_train(data.source, data.validation, tc, std::nullopt,
                                  [&](std::size_t iter, double v, bool improved) {
                                    log << "iter " << iter << " validation " << v << (improved ? " *" : "") << '\n';
                                  });
  save_checkpoint(result.params, out / "checkpoint.bin");
  {
    std::ofstream csv(out / "training_log.csv");
    if (!csv) throw IoError("cannot write training log");
    result.log.write_csv(csv);
  }
  std::ostringstream summary;
  summary << "iterations = " << result.log.steps.size() << '\n'
          << "best_iteration = " << result.log.best_iteration << '\n'
          << "best_val_loss = " << meta_rdre::detail::format_double(result.log.best_val_loss) << '\n'
          << "early_stopped = " << (result.log.early_stopped ? "true" : "false") << '\n'
          << "lambda = " << meta_rdre::detail::format_double(result.params.lambda()) << '\n';
  write_text(out / "train_summary.txt", summary.str());
  log << summary.str();
}

inline std::vector<std::string> baseline_columns(const ExperimentOptions& opt) {
  std::vector<std::string> cols;
  if (!opt.baselines) return cols;
  for (double l : opt.lambda_grid) cols.push_back(lambda_label("rulsif", l));
  for (double l : opt.lambda_grid) cols.push_back(lambda_label("ulsif", l));
  return cols;
}

// Squared-error evaluation over ordered target pairs; `use_model` = false
// is the kernel-baseline-only `baseline` command.
inline void cmd_eval(const RunConfig& cfg, bool use_model, std::ostream& log) {
  ExperimentOptions opt = experiment_options(cfg, {10});
  if (!use_model) opt.baselines = true;
  const LoadedData data = load_data(cfg, false, true);
  const auto params = use_model ? load_model(cfg) : nullptr;
  const bool have_oracle = !data.specs.empty();
  SpecLookup lookup;
  if (have_oracle) {
    lookup = [&](const DatasetSample& d) -> const GaussianSpec* {
      auto it = data.specs.find(d.id);
      return it == data.specs.end() ? nullptr : &it->second;
    };
  }
  const auto rows = evaluate_pairs(data.target, params, lookup, opt);
  const fs::path out = cfg.out;
  const std::string prefix = use_model ? "eval" : "baseline";

  std::vector<std::string> header{"n_support", "trial", "nu", "de"};
  if (params) header.push_back("ours");
  if (have_oracle) header.push_back("oracle");
  const auto bcols = baseline_columns(opt);
  header.insert(header.end(), bcols.begin(), bcols.end());
  CsvWriter pairs(out / (prefix + "_pairs.csv"));
  pairs.row(header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.n_support), std::to_string(r.trial), data.target[r.nu].id,
                                   data.target[r.de].id};
    if (params) cells.push_back(CsvWriter::cell(*r.ours));
    if (have_oracle) cells.push_back(r.oracle ? CsvWriter::cell(*r.oracle) : std::string());
    for (double v : r.rulsif) cells.push_back(CsvWriter::cell(v));
    for (double v : r.ulsif) cells.push_back(CsvWriter::cell(v));
    pairs.row(cells);
  }
  pairs.close();

  CsvWriter summary(out / (prefix + "_summary.csv"));
  summary.row("n_support", "method", "mean_test_squared_error", "pairs");
  std::ostringstream text;
  text << "mean test squared error (constant omitted, lower is better), alpha = "
       << meta_rdre::detail::format_double(params ? params->alpha : opt.alpha) << '\n'
       << "self pairs " << (opt.include_self_pairs ? "included" : "excluded") << '\n';
  std::map<std::size_t, double> best_lambda;
  for (std::size_t ns : opt.support_sizes) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    std::vector<std::string> order;
    const auto add = [&](const std::string& method, double v) {
      if (!acc.count(method)) order.push_back(method);
      acc[method].first += v;
      acc[method].second += 1;
    };
    for (const auto& r : rows) {
      if (r.n_support != ns) continue;
      if (r.ours) add("ours", *r.ours);
      if (r.oracle) add("oracle", *r.oracle);
      for (std::size_t l = 0; l < r.rulsif.size(); ++l) add(bcols[l], r.rulsif[l]);
      for (std::size_t l = 0; l < r.ulsif.size(); ++l) add(bcols[r.rulsif.size() + l], r.ulsif[l]);
    }
    for (const auto& m : order) {
      const double mean = acc[m].first / static_cast<double>(acc[m].second);
      summary.row(ns, m, mean, acc[m].second);
      text << "N_S=" << ns << "  " << m << "  " << meta_rdre::detail::format_double(mean) << '\n';
    }
    if (opt.baselines) {
      double best = std::numeric_limits<double>::infinity();
      for (double l : opt.lambda_grid) {
        const auto& a = acc[lambda_label("rulsif", l)];
        const double mean = a.first / static_cast<double>(a.second);
        if (mean < best) {
          best = mean;
          best_lambda[ns] = l;
        }
      }
      summary.row(ns, "rulsif_best_oracle_selected", best, acc[lambda_label("rulsif", best_lambda[ns])].second);
      text << "N_S=" << ns << "  rulsif best (oracle-selected lambda=" << meta_rdre::detail::format_double(best_lambda[ns])
           << ")  " << meta_rdre::detail::format_double(best) << '\n';
    }
  }
  summary.close();
  write_text(out / (prefix + "_summary.txt"), text.str());
  log << text.str();

  // Ratio curves for 1-D data: the first few distinct target pairs at the
  // first support size, using the same supports as the evaluation.
  if (params && !data.target.empty() && data.target.front().dim() == 1 && cfg.grid_points >= 2) {
    CsvWriter grid(out / "ratio_grid.csv");
    std::vector<std::string> gh{"n_support", "nu", "de", "x", "ours"};
    if (have_oracle) gh.push_back("oracle");
    if (opt.baselines) gh.push_back("rulsif_best");
    grid.row(gh);
    const std::size_t n = data.target.size();
    const std::size_t ns = opt.support_sizes.front();
    for (std::size_t p = 0; p + 1 < n && p < 4; ++p) {
      const std::size_t i = p;
      const std::size_t j = p + 1;
      Rng rng = experiment_stream(opt.seed, ns, 0, i * n + j);
      const PairSplit split = split_pair(data.target[i], data.target[j], false, ns, rng);
      const AdaptedRatio adapted = adapt_to_support(split.support_nu, split.support_de, params);
      std::optional<KernelRatioModel> kernel;
      if (opt.baselines) kernel = fit_kernel_baseline(split.support_nu, split.support_de, params->alpha, best_lambda[ns]);
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto* t : {&data.target[i].features, &data.target[j].features}) {
        for (double v : t->data()) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      Tensor xs({cfg.grid_points, 1});
      for (std::size_t g = 0; g < cfg.grid_points; ++g) {
        xs[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(cfg.grid_points - 1);
      }
      const Tensor ours = estimate_ratio(xs, adapted);
      std::optional<Tensor> truth;
      if (have_oracle) {
        const auto a = data.specs.find(data.target[i].id);
        const auto b = data.specs.find(data.target[j].id);
        if (a != data.specs.end() && b != data.specs.end()) truth = GaussianRatio{a->second, b->second, params->alpha}(xs);
      }
      std::optional<Tensor> base;
      if (kernel) base = rulsif_predict(*kernel, xs);
      for (std::size_t g = 0; g < cfg.grid_points; ++g) {
        std::vector<std::string> cells{std::to_string(ns), data.target[i].id, data.target[j].id, CsvWriter::cell(xs[g]),
                                       CsvWriter::cell(ours[g])};
        if (have_oracle) cells.push_back(truth ? CsvWriter::cell((*truth)[g]) : std::string());
        if (base) cells.push_back(CsvWriter::cell((*base)[g]));
        grid.row(cells);
      }
    }
    grid.close();
  }
}

template <typename Row>
void write_auc_summary(const fs::path& path, const std::vector<Row>& aucs, std::ostringstream& text) {
  std::map<std::pair<std::size_t, std::string>, std::pair<double, std::size_t>> acc;
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& a : aucs) {
    const auto key = std::make_pair(a.n_support, a.method);
    if (!acc.count(key)) order.push_back(key);
    acc[key].first += a.auc;
    acc[key].second += 1;
  }
  CsvWriter w(path);
  w.row("n_support", "method", "mean_auc", "count");
  for (const auto& key : order) {
    const double mean = acc[key].first / static_cast<double>(acc[key].second);
    w.row(key.first, key.second, mean, acc[key].second);
    text << "N_S=" << key.first << "  " << key.second << "  AUC " << meta_rdre::detail::format_double(mean) << '\n';
  }
  w.close();
}

inline void cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const ExperimentOptions opt = experiment_options(cfg, {1, 2, 3, 4, 5});
  const LoadedData data = load_data(cfg, false, true);
  const auto params = load_model(cfg);
  const auto& targets = data.target;
  // Same distribution: same dataset, or identical manifest parameters.
  const SameDistribution same = [&](std::size_t i, std::size_t j) {
    if (i == j) return true;
    const auto a = data.specs.find(targets[i].id);
    const auto b = data.specs.find(targets[j].id);
    return a != data.specs.end() && b != data.specs.end() && a->second.mu == b->second.mu &&
           a->second.sigma == b->second.sigma;
  };
  const CompareResult result = compare_experiment(targets, params, same, opt);
  const fs::path out = cfg.out;
  std::vector<std::string> header{"n_support", "trial", "nu", "de", "different", "ours"};
  const auto bcols = baseline_columns(opt);
  header.insert(header.end(), bcols.begin(), bcols.end());
  CsvWriter pairs(out / "compare_pairs.csv");
  pairs.row(header);
  for (const auto& r : result.rows) {
    std::vector<std::string> cells{std::to_string(r.n_support), std::to_string(r.trial), targets[r.nu].id,
                                   targets[r.de].id, std::to_string(r.different), CsvWriter::cell(*r.ours)};
    for (double v : r.rulsif) cells.push_back(CsvWriter::cell(v));
    for (double v : r.ulsif) cells.push_back(CsvWriter::cell(v));
    pairs.row(cells);
  }
  pairs.close();
  CsvWriter aucs(out / "compare_auc.csv");
  aucs.row("n_support", "trial", "method", "auc");
  for (const auto& a : result.aucs) aucs.row(a.n_support, a.trial, a.method, a.auc);
  aucs.close();
  std::ostringstream text;
  text << "dataset comparison by relative PE divergence; AUC positive class = different distribution\n";
  write_auc_summary(out / "compare_summary.csv", result.aucs, text);
  write_text(out / "compare_summary.txt", text.str());
  log << text.str();
}

inline void cmd_detect(const RunConfig& cfg, std::ostream& log) {
  const ExperimentOptions opt = experiment_options(cfg, {1, 2, 3, 4, 5});
  const LoadedData data = load_data(cfg, false, true);
  const auto params = load_model(cfg);
  const DetectResult result = detect_experiment(data.target, params, opt);
  const fs::path out = cfg.out;
  std::vector<std::string> header{"n_support", "trial", "target", "row", "label", "ours"};
  if (!result.scores.empty()) {
    for (const auto& [name, values] : result.scores.front().baselines) header.push_back(name);
  }
  CsvWriter scores(out / "detect_scores.csv");
  scores.row(header);
  for (const auto& s : result.scores) {
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      std::vector<std::string> cells{std::to_string(s.n_support), std::to_string(s.trial), data.target[s.target].id,
                                     std::to_string(s.rows[i]), std::to_string(s.labels[i]), CsvWriter::cell(s.ours[i])};
      for (const auto& [name, values] : s.baselines) cells.push_back(CsvWriter::cell(values[i]));
      scores.row(cells);
    }
  }
  scores.close();
  CsvWriter aucs(out / "detect_auc.csv");
  aucs.row("n_support", "trial", "target", "method", "auc");
  for (const auto& a : result.aucs) aucs.row(a.n_support, a.trial, data.target[a.target].id, a.method, a.auc);
  aucs.close();
  std::ostringstream text;
  text << "inlier-based outlier detection; score = -ratio (higher = more anomalous)\n";
  write_auc_summary(out / "detect_summary.csv", result.aucs, text);
  write_text(out / "detect_summary.txt", text.str());
  log << text.str();
}

// ---------------------------------------------------------------------------
// Entry point

inline const std::vector<std::pair<std::string, std::string>>& command_list() {
  static const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-synth", "write a synthetic dataset suite and its manifest"},
      {"train", "meta-train a model on source datasets"},
      {"eval", "test squared error of an adapted model over target pairs"},
      {"compare", "dataset comparison AUC from PE-divergence scores"},
      {"detect", "inlier-based outlier detection AUC"},
      {"baseline", "RuLSIF / uLSIF test squared error over target pairs"},
  };
  return commands;
}

// Resolves the configuration for `command`: defaults, then the config
// file, then command-line overrides.
inline RunConfig resolve_config(const std::string& config_path,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  for (const auto& [key, value] : overrides) set_value(cfg, key, value);
  if (cfg.out.empty()) throw ConfigError("an output directory is required (--out)");
  return cfg;
}

inline void dispatch(const std::string& command, const RunConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "config.txt", serialize(cfg));
  if (command == "gen-synth") return cmd_gen_synth(cfg, log);
  if (command == "train") return cmd_train(cfg, log);
  if (command == "eval") return cmd_eval(cfg, true, log);
  if (command == "baseline") return cmd_eval(cfg, false, log);
  if (command == "compare") return cmd_compare(cfg, log);
  if (command == "detect") return cmd_detect(cfg, log);
  throw ConfigError("unknown command '" + command + "'");
}

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Meta-learned relative density-ratio estimation toolkit", "meta-rdre"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& [name, desc] : command_list()) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& f : config_fields()) sub->add_option("--" + f.name, values[f.name], f.doc);
    subs.emplace_back(name, sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kSuccess : kConfigFailure;
  }
  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      std::vector<std::pair<std::string, std::string>> overrides;
      for (const auto& f : config_fields()) {
        if (sub->count("--" + f.name) > 0) overrides.emplace_back(f.name, values[f.name]);
      }
      dispatch(name, resolve_config(config_path, overrides), log);
    }
    return kSuccess;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUnexpectedError;
  }
}

}  // namespace meta_rdre::cli
