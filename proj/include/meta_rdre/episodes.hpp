#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "meta_rdre/error.hpp"
#include "meta_rdre/gaussian.hpp"
#include "meta_rdre/numgrad/tensor.hpp"
#include "meta_rdre/rng.hpp"

namespace meta_rdre {

using numgrad::Tensor;

enum class Role { normal, unlabeled };

// One dataset X_d: N_d instances of dimension M, with optional per-instance
// outlier labels (evaluation only) and normal/unlabeled pool roles.
struct DatasetSample {
  std::string id;
  Tensor features;           // N_d x M
  std::vector<int> labels;   // 1 = outlier; empty when absent
  std::vector<Role> roles;   // empty when absent

  [[nodiscard]] std::size_t size() const { return features.rows(); }
  [[nodiscard]] std::size_t dim() const { return features.cols(); }
  [[nodiscard]] bool has_labels() const { return !labels.empty(); }
  [[nodiscard]] bool has_roles() const { return !roles.empty(); }

  [[nodiscard]] std::vector<std::size_t> indices_with_role(Role role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (roles[i] == role) out.push_back(i);
    }
    return out;
  }

  void validate() const {
    if (features.rank() != 2 || features.rows() == 0) throw DataError("dataset '" + id + "' has no instances");
    if (has_labels() && labels.size() != size()) throw DataError("dataset '" + id + "' label count mismatch");
    if (has_roles() && roles.size() != size()) throw DataError("dataset '" + id + "' role count mismatch");
  }
};

inline void require_consistent_dim(std::span<const DatasetSample> datasets) {
  if (datasets.empty()) return;
  const std::size_t m = datasets.front().dim();
  for (const auto& d : datasets) {
    d.validate();
    if (d.dim() != m) {
      throw DataError("dataset '" + d.id + "' has " + std::to_string(d.dim()) + " features, expected " +
                      std::to_string(m));
    }
  }
}

// One training unit. Query sets contain their support rows first, followed
// by extra instances drawn from the rest of the pool.
struct Episode {
  Tensor support_nu, support_de;
  Tensor query_nu, query_de;
  double alpha = 0.5;
  std::size_t dataset_nu = 0;
  std::size_t dataset_de = 0;
  // Row indices into the source datasets (or pools' parent dataset).
  std::vector<std::size_t> support_nu_rows, support_de_rows;
  std::vector<std::size_t> query_nu_rows, query_de_rows;
};

namespace detail {

// First `take` entries of a uniformly random permutation of `pool`.
inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t take,
                                                         Rng& rng) {
  take = std::min(take, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

struct SupportQuery {
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
};

// Support of size n_support; query = support followed by up to n_query
// further instances from the remainder of the pool.
inline SupportQuery draw_support_query(std::vector<std::size_t> pool, std::size_t n_support, std::size_t n_query,
                                       Rng& rng) {
  std::vector<std::size_t> drawn = draw_without_replacement(std::move(pool), n_support + n_query, rng);
  SupportQuery out;
  out.support.assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(std::min(n_support, drawn.size())));
  out.query = std::move(drawn);
  return out;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

// Two datasets drawn uniformly with replacement; supports of size n_support
// and queries of size up to n_query + n_support from each.
inline Episode sample_pair_episode(std::span<const DatasetSample> sources, std::size_t n_support,
                                   std::size_t n_query, Rng& rng, double alpha = 0.5) {
  if (sources.empty()) throw DataError("episode sampling needs at least one source dataset");
  if (n_support == 0) throw ConfigError("support size must be at least 1");
  std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
  Episode ep;
  ep.alpha = alpha;
  ep.dataset_nu = pick(rng);
  ep.dataset_de = pick(rng);
  const auto fill = [&](std::size_t d, Tensor& support, Tensor& query, std::vector<std::size_t>& s_rows,
                        std::vector<std::size_t>& q_rows) {
    const DatasetSample& ds = sources[d];
    if (ds.size() < n_support) {
      throw DataError("dataset '" + ds.id + "' has " + std::to_string(ds.size()) + " instances, fewer than support size " +
                      std::to_string(n_support));
    }
    auto sq = detail::draw_support_query(detail::all_rows(ds.size()), n_support, n_query, rng);
    support = ds.features.select_rows(sq.support);
    query = ds.features.select_rows(sq.query);
    s_rows = std::move(sq.support);
    q_rows = std::move(sq.query);
  };
  fill(ep.dataset_nu, ep.support_nu, ep.query_nu, ep.support_nu_rows, ep.query_nu_rows);
  fill(ep.dataset_de, ep.support_de, ep.query_de, ep.support_de_rows, ep.query_de_rows);
  return ep;
}

// One dataset; numerator support/query from its normal pool, denominator
// support/query from its unlabeled pool.
inline Episode sample_outlier_episode(std::span<const DatasetSample> sources, std::size_t n_support_normal,
                                      std::size_t n_support_unlabeled, std::size_t n_query, Rng& rng,
                                      double alpha = 0.5) {
  if (sources.empty()) throw DataError("episode sampling needs at least one source dataset");
  if (n_support_normal == 0 || n_support_unlabeled == 0) throw ConfigError("support sizes must be at least 1");
  std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
  const std::size_t d = pick(rng);
  const DatasetSample& ds = sources[d];
  if (!ds.has_roles()) throw DataError("dataset '" + ds.id + "' has no normal/unlabeled partition");
  auto normal = ds.indices_with_role(Role::normal);
  auto unlabeled = ds.indices_with_role(Role::unlabeled);
  if (normal.size() < n_support_normal) throw DataError("dataset '" + ds.id + "' normal pool too small");
  if (unlabeled.size() < n_support_unlabeled) throw DataError("dataset '" + ds.id + "' unlabeled pool too small");
  Episode ep;
  ep.alpha = alpha;
  ep.dataset_nu = ep.dataset_de = d;
  auto nu = detail::draw_support_query(std::move(normal), n_support_normal, n_query, rng);
  auto de = detail::draw_support_query(std::move(unlabeled), n_support_unlabeled, n_query, rng);
  ep.support_nu = ds.features.select_rows(nu.support);
  ep.query_nu = ds.features.select_rows(nu.query);
  ep.support_de = ds.features.select_rows(de.support);
  ep.query_de = ds.features.select_rows(de.query);
  ep.support_nu_rows = std::move(nu.support);
  ep.query_nu_rows = std::move(nu.query);
  ep.support_de_rows = std::move(de.support);
  ep.query_de_rows = std::move(de.query);
  return ep;
}

// ---------------------------------------------------------------------------
// Synthetic suites

struct GaussianRecord {
  std::string split;  // source | validation | target
  std::string id;
  GaussianSpec spec;
};

struct SyntheticSuite {
  std::vector<DatasetSample> source, validation, target;
  std::vector<GaussianRecord> records;

  [[nodiscard]] const GaussianRecord* find(std::string_view id) const {
    for (const auto& r : records) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }
};

inline std::string dataset_name(std::string_view split, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return std::string(split) + "_" + digits;
}

// 1-D Gaussian datasets with mu ~ U[-1.5, 1.5] and sigma ~ U[0.1, 2].
inline SyntheticSuite gen_synthetic_gaussian_suite(std::size_t n_source, std::size_t n_val, std::size_t n_target,
                                                   std::size_t n_per_dataset, const Rng& rng) {
  if (n_source == 0 || n_val == 0 || n_target == 0 || n_per_dataset == 0) {
    throw ConfigError("synthetic suite counts must all be at least 1");
  }
  SyntheticSuite suite;
  const auto make = [&](std::string_view split, std::size_t split_id, std::size_t count,
                        std::vector<DatasetSample>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      Rng stream = rng.substream(split_id, i);
      GaussianSpec spec = GaussianSpec::scalar(stream.uniform(-1.5, 1.5), stream.uniform(0.1, 2.0));
      DatasetSample ds;
      ds.id = dataset_name(split, i);
      ds.features = spec.sample(n_per_dataset, stream);
      suite.records.push_back({std::string(split), ds.id, spec});
      out.push_back(std::move(ds));
    }
  };
  make("source", 0, n_source, suite.source);
  make("validation", 1, n_val, suite.validation);
  make("target", 2, n_target, suite.target);
  return suite;
}

struct OutlierSuiteConfig {
  std::size_t n_source = 20;
  std::size_t n_val = 3;
  std::size_t n_target = 5;
  std::size_t dim = 2;
  std::size_t n_normal_pool = 200;
  std::size_t n_unlabeled = 300;
  double outlier_rate = 0.05;
  double outlier_shift = 5.0;     // added to every coordinate of the mean
  double outlier_variance = 0.1;  // isotropic
  double mean_range = 1.0;        // mu_d ~ U[-range, range]^dim
};

// Normals from N(mu_d, I), outliers from N(mu_d + shift, variance I). Each
// dataset holds a normal pool followed by an unlabeled pool in which a
// fraction outlier_rate (rounded) are outliers at shuffled positions.
inline SyntheticSuite gen_synthetic_outlier_suite(const OutlierSuiteConfig& cfg, const Rng& rng) {
  if (cfg.n_source == 0 || cfg.n_val == 0 || cfg.n_target == 0 || cfg.dim == 0 || cfg.n_normal_pool == 0 ||
      cfg.n_unlabeled == 0) {
    throw ConfigError("outlier suite counts must all be at least 1");
  }
  if (!(cfg.outlier_rate >= 0.0 && cfg.outlier_rate < 1.0)) throw ConfigError("outlier_rate must lie in [0, 1)");
  if (!(cfg.outlier_variance > 0.0)) throw ConfigError("outlier_variance must be positive");
  SyntheticSuite suite;
  const auto make = [&](std::string_view split, std::size_t split_id, std::size_t count,
                        std::vector<DatasetSample>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      Rng stream = rng.substream(split_id, i);
      GaussianSpec normal_spec;
      normal_spec.sigma = {1.0};
      for (std::size_t c = 0; c < cfg.dim; ++c) normal_spec.mu.push_back(stream.uniform(-cfg.mean_range, cfg.mean_range));
      GaussianSpec outlier_spec = normal_spec;
      for (double& m : outlier_spec.mu) m += cfg.outlier_shift;
      outlier_spec.sigma = {std::sqrt(cfg.outlier_variance)};

      const std::size_t n_out = static_cast<std::size_t>(std::llround(cfg.outlier_rate * static_cast<double>(cfg.n_unlabeled)));
      std::vector<int> un_labels(cfg.n_unlabeled, 0);
      std::fill_n(un_labels.begin(), n_out, 1);
      std::shuffle(un_labels.begin(), un_labels.end(), stream);

      const std::size_t total = cfg.n_normal_pool + cfg.n_unlabeled;
      DatasetSample ds;
      ds.id = dataset_name(split, i);
      ds.features = Tensor({total, cfg.dim});
      ds.labels.assign(total, 0);
      ds.roles.assign(total, Role::normal);
      const Tensor normals = normal_spec.sample(total, stream);
      const Tensor outliers = outlier_spec.sample(n_out, stream);
      std::size_t next_outlier = 0;
      for (std::size_t r = 0; r < total; ++r) {
        const bool in_pool = r >= cfg.n_normal_pool;
        const bool is_outlier = in_pool && un_labels[r - cfg.n_normal_pool] == 1;
        const auto src = is_outlier ? outliers.row(next_outlier++) : normals.row(r);
        std::copy(src.begin(), src.end(), ds.features.row(r).begin());
        ds.labels[r] = is_outlier ? 1 : 0;
        ds.roles[r] = in_pool ? Role::unlabeled : Role::normal;
      }
      suite.records.push_back({std::string(split), ds.id, normal_spec});
      out.push_back(std::move(ds));
    }
  };
  make("source", 0, cfg.n_source, suite.source);
  make("validation", 1, cfg.n_val, suite.validation);
  make("target", 2, cfg.n_target, suite.target);
  return suite;
}

// ---------------------------------------------------------------------------
// CSV ingestion
//
// One instance per line, comma-separated decimal features. A header row is
// present when any of its cells is non-numeric; columns named `role`
// (values nor/un) and `label` (0/1, outlier = 1) are then recognized.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("failed to format number");
  return std::string(buf, ptr);
}

}  // namespace detail

inline DatasetSample parse_dataset_csv(std::istream& in, const std::string& id, const std::string& origin) {
  DatasetSample ds;
  ds.id = id;
  std::vector<double> values;
  std::size_t n_features = 0;
  std::optional<std::size_t> label_col, role_col;
  std::size_t n_cols = 0;
  std::size_t line_no = 0;
  std::size_t n_rows = 0;
  std::string line;
  const auto fail = [&](const std::string& what) {
    throw DataError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (n_cols == 0) {
      n_cols = cells.size();
      bool numeric = true;
      for (auto c : cells) numeric = numeric && detail::parse_double(c).has_value();
      if (!numeric) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i] == "label") label_col = i;
          if (cells[i] == "role") role_col = i;
        }
        n_features = n_cols - (label_col ? 1 : 0) - (role_col ? 1 : 0);
        if (n_features == 0) fail("header declares no feature columns");
        continue;
      }
      n_features = n_cols;
    }
    if (cells.size() != n_cols) {
      fail("expected " + std::to_string(n_cols) + " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (label_col && i == *label_col) {
        if (cells[i] == "0") ds.labels.push_back(0);
        else if (cells[i] == "1") ds.labels.push_back(1);
        else fail("label must be 0 or 1, found '" + std::string(cells[i]) + "'");
        continue;
      }
      if (role_col && i == *role_col) {
        if (cells[i] == "nor") ds.roles.push_back(Role::normal);
        else if (cells[i] == "un") ds.roles.push_back(Role::unlabeled);
        else fail("role must be nor or un, found '" + std::string(cells[i]) + "'");
        continue;
      }
      const auto v = detail::parse_double(cells[i]);
      if (!v) fail("non-numeric cell '" + std::string(cells[i]) + "'");
      if (!std::isfinite(*v)) fail("non-finite cell '" + std::string(cells[i]) + "'");
      values.push_back(*v);
    }
    ++n_rows;
  }
  if (n_rows == 0) throw DataError(origin + ": no instances");
  ds.features = Tensor::matrix(n_rows, n_features, std::move(values));
  return ds;
}

inline DatasetSample load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_dataset_csv(in, path.stem().string(), path.string());
}

// Every <id>.csv in `dir`, ordered by file name.
inline std::vector<DatasetSample> load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DatasetSample> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_dataset_csv(f));
  if (out.empty()) throw DataError("no CSV datasets in " + dir.string());
  for (const auto& d : out) {
    if (d.dim() != out.front().dim()) {
      throw DataError(dir.string() + "/" + d.id + ".csv: " + std::to_string(d.dim()) + " features, expected " +
                      std::to_string(out.front().dim()) + " (inconsistent M across files)");
    }
  }
  return out;
}

inline void write_dataset_csv(std::ostream& out, const DatasetSample& ds) {
  ds.validate();
  const bool header = ds.has_labels() || ds.has_roles();
  if (header) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << 'x' << c;
    if (ds.has_roles()) out << ",role";
    if (ds.has_labels()) out << ",label";
    out << '\n';
  }
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto row = ds.features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << detail::format_double(row[c]);
    if (ds.has_roles()) out << ',' << (ds.roles[r] == Role::normal ? "nor" : "un");
    if (ds.has_labels()) out << ',' << ds.labels[r];
    out << '\n';
  }
}

inline void write_dataset_dir(const std::filesystem::path& dir, std::span<const DatasetSample> datasets) {
  std::filesystem::create_directories(dir);
  for (const auto& ds : datasets) {
    const auto path = dir / (ds.id + ".csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_dataset_csv(out, ds);
    if (!out) throw IoError("failed writing " + path.string());
  }
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitCounts {
  std::size_t source = 0;
  std::size_t validation = 0;
  std::size_t target = 0;
};

struct DatasetSplit {
  std::vector<DatasetSample> source, validation, target;
};

// Disjoint random split; datasets beyond the requested counts are dropped.
inline DatasetSplit split_sources(std::span<const DatasetSample> datasets, const SplitCounts& counts, Rng rng) {
  const std::size_t wanted = counts.source + counts.validation + counts.target;
  if (wanted > datasets.size()) {
    throw ConfigError("split requests " + std::to_string(wanted) + " datasets but only " +
                      std::to_string(datasets.size()) + " are available");
  }
  std::vector<std::size_t> order = detail::all_rows(datasets.size());
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit out;
  std::size_t next = 0;
  for (std::size_t i = 0; i < counts.source; ++i) out.source.push_back(datasets[order[next++]]);
  for (std::size_t i = 0; i < counts.validation; ++i) out.validation.push_back(datasets[order[next++]]);
  for (std::size_t i = 0; i < counts.target; ++i) out.target.push_back(datasets[order[next++]]);
  return out;
}

}  // namespace meta_rdre
