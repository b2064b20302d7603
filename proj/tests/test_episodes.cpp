#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "meta_rdre/episodes.hpp"

namespace {

using namespace meta_rdre;
namespace fs = std::filesystem;

std::vector<DatasetSample> small_sources(std::size_t n, std::size_t rows) {
  std::vector<DatasetSample> out;
  for (std::size_t d = 0; d < n; ++d) {
    DatasetSample ds;
    ds.id = dataset_name("source", d);
    ds.features = Tensor({rows, 1});
    for (std::size_t r = 0; r < rows; ++r) ds.features[r] = static_cast<double>(d * 1000 + r);
    out.push_back(std::move(ds));
  }
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("meta_rdre_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Episodes, PairEpisodeLayout) {
  const auto sources = small_sources(4, 50);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Episode ep = sample_pair_episode(sources, 7, 20, rng);
    ASSERT_EQ(ep.support_nu.rows(), 7u);
    ASSERT_EQ(ep.support_de.rows(), 7u);
    ASSERT_EQ(ep.query_nu.rows(), 27u);
    // Support rows lead the query set, and nothing repeats within a dataset.
    for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(ep.query_nu_rows[r], ep.support_nu_rows[r]);
    const std::set<std::size_t> unique(ep.query_de_rows.begin(), ep.query_de_rows.end());
    EXPECT_EQ(unique.size(), ep.query_de_rows.size());
    for (std::size_t r = 0; r < ep.query_nu.rows(); ++r) {
      EXPECT_EQ(ep.query_nu[r], static_cast<double>(ep.dataset_nu * 1000 + ep.query_nu_rows[r]));
    }
  }
}

TEST(Episodes, QueryCappedByPool) {
  const auto sources = small_sources(2, 10);
  Rng rng(2);
  const Episode ep = sample_pair_episode(sources, 4, 128, rng);
  EXPECT_EQ(ep.query_nu.rows(), 10u);
}

TEST(Episodes, DatasetPairsAreUniform) {
  // Pearson chi-square over the 25 ordered (nu, de) cells; 24 degrees of
  // freedom, 99.9% quantile 51.18.
  const auto sources = small_sources(5, 3);
  Rng rng(3);
  const int draws = 25000;
  std::vector<int> counts(25, 0);
  for (int i = 0; i < draws; ++i) {
    const Episode ep = sample_pair_episode(sources, 1, 0, rng);
    ++counts[ep.dataset_nu * 5 + ep.dataset_de];
  }
  const double expected = draws / 25.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 51.18);
}

TEST(Episodes, DrawWithoutReplacementIsUniform) {
  // Each element of a 6-pool lands in a 2-subset with probability 1/3.
  Rng rng(4);
  std::vector<int> hits(6, 0);
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) {
    for (std::size_t v : detail::draw_without_replacement(detail::all_rows(6), 2, rng)) ++hits[v];
  }
  for (int h : hits) EXPECT_NEAR(h / double(draws), 1.0 / 3.0, 0.015);
}

TEST(Episodes, PairEpisodeErrors) {
  Rng rng(5);
  EXPECT_THROW(sample_pair_episode({}, 1, 1, rng), DataError);
  const auto sources = small_sources(2, 3);
  EXPECT_THROW(sample_pair_episode(sources, 4, 1, rng), DataError);
  EXPECT_THROW(sample_pair_episode(sources, 0, 1, rng), ConfigError);
  EXPECT_THROW(sample_outlier_episode(sources, 1, 1, 1, rng), DataError);
}

TEST(Episodes, OutlierEpisodeUsesPools) {
  OutlierSuiteConfig cfg;
  cfg.n_source = 3;
  const SyntheticSuite suite = gen_synthetic_outlier_suite(cfg, Rng(6));
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Episode ep = sample_outlier_episode(suite.source, 5, 100, 64, rng);
    const DatasetSample& ds = suite.source[ep.dataset_nu];
    EXPECT_EQ(ep.dataset_nu, ep.dataset_de);
    EXPECT_EQ(ep.support_nu.rows(), 5u);
    EXPECT_EQ(ep.support_de.rows(), 100u);
    for (std::size_t r : ep.query_nu_rows) EXPECT_EQ(ds.roles[r], Role::normal);
    for (std::size_t r : ep.query_de_rows) EXPECT_EQ(ds.roles[r], Role::unlabeled);
  }
}

TEST(Synthetic, GaussianSuite) {
  const SyntheticSuite a = gen_synthetic_gaussian_suite(10, 3, 4, 50, Rng(1));
  const SyntheticSuite b = gen_synthetic_gaussian_suite(10, 3, 4, 50, Rng(1));
  ASSERT_EQ(a.source.size(), 10u);
  ASSERT_EQ(a.validation.size(), 3u);
  ASSERT_EQ(a.target.size(), 4u);
  ASSERT_EQ(a.records.size(), 17u);
  EXPECT_EQ(a.source[3].id, "source_003");
  EXPECT_EQ(a.target[0].features, b.target[0].features);
  for (const auto& r : a.records) {
    EXPECT_GE(r.spec.mu[0], -1.5);
    EXPECT_LE(r.spec.mu[0], 1.5);
    EXPECT_GE(r.spec.sigma[0], 0.1);
    EXPECT_LE(r.spec.sigma[0], 2.0);
  }
  ASSERT_NE(a.find("target_002"), nullptr);
  EXPECT_EQ(a.find("nope"), nullptr);
  // Changing the number of source datasets leaves the targets unchanged.
  const SyntheticSuite c = gen_synthetic_gaussian_suite(12, 3, 4, 50, Rng(1));
  EXPECT_EQ(a.target[1].features, c.target[1].features);
}

TEST(Synthetic, GaussianSampleMoments) {
  const GaussianSpec spec = GaussianSpec::scalar(0.7, 1.3);
  Rng rng(2);
  const Tensor x = spec.sample(40000, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : x.data()) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.7, 0.03);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(x.size())), 1.3, 0.03);
}

TEST(Synthetic, OutlierSuite) {
  OutlierSuiteConfig cfg;
  const SyntheticSuite s = gen_synthetic_outlier_suite(cfg, Rng(3));
  ASSERT_EQ(s.source.size(), 20u);
  ASSERT_EQ(s.validation.size(), 3u);
  ASSERT_EQ(s.target.size(), 5u);
  for (const auto& d : s.target) {
    ASSERT_EQ(d.size(), 500u);
    EXPECT_EQ(d.dim(), 2u);
    EXPECT_EQ(d.indices_with_role(Role::normal).size(), 200u);
    int outliers = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.labels[i]) {
        ++outliers;
        EXPECT_EQ(d.roles[i], Role::unlabeled);
      }
    }
    EXPECT_EQ(outliers, 15);
  }
}

TEST(Csv, ParsesHeaderRolesAndLabels) {
  std::istringstream in("x0,x1,role,label\n1,2,nor,0\n\n3.5,-4e-2,un,1\n");
  const DatasetSample ds = parse_dataset_csv(in, "d", "d.csv");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.features(1, 1), -0.04);
  EXPECT_EQ(ds.roles[1], Role::unlabeled);
  EXPECT_EQ(ds.labels[1], 1);
}

TEST(Csv, HeaderlessNumeric) {
  std::istringstream in("1\n2\n3\n");
  const DatasetSample ds = parse_dataset_csv(in, "d", "d.csv");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_FALSE(ds.has_labels());
}

void expect_data_error(const std::string& text, const std::string& fragment) {
  std::istringstream in(text);
  try {
    parse_dataset_csv(in, "d", "d.csv");
    FAIL() << "expected DataError for: " << text;
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Csv, Errors) {
  expect_data_error("1,2\n3\n", "d.csv:2");
  expect_data_error("x0\n1\nabc\n", "d.csv:3");
  expect_data_error("1\nnan\n", "non-finite");
  expect_data_error("1\ninf\n", "non-finite");
  expect_data_error("x0,role\n1,maybe\n", "role");
  expect_data_error("x0,label\n1,2\n", "label");
  expect_data_error("", "no instances");
  expect_data_error("x0,x1\n", "no instances");
}

TEST(Csv, RoundTripIsExact) {
  OutlierSuiteConfig cfg;
  cfg.n_source = 2;
  cfg.n_val = 1;
  cfg.n_target = 1;
  const SyntheticSuite s = gen_synthetic_outlier_suite(cfg, Rng(4));
  const fs::path dir = scratch_dir("roundtrip");
  write_dataset_dir(dir, s.source);
  const auto loaded = load_dataset_dir(dir);
  ASSERT_EQ(loaded.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(loaded[i].id, s.source[i].id);
    EXPECT_EQ(loaded[i].features, s.source[i].features);
    EXPECT_EQ(loaded[i].labels, s.source[i].labels);
    EXPECT_EQ(loaded[i].roles, s.source[i].roles);
  }
  fs::remove_all(dir);
}

TEST(Csv, DirectoryChecks) {
  EXPECT_THROW(load_dataset_dir("/nonexistent/meta_rdre"), IoError);
  const fs::path dir = scratch_dir("mixed");
  EXPECT_THROW(load_dataset_dir(dir), DataError);
  std::ofstream(dir / "a.csv") << "1,2\n3,4\n";
  std::ofstream(dir / "b.csv") << "1\n2\n";
  try {
    load_dataset_dir(dir);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("b.csv"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Split, DisjointAndSeeded) {
  const auto data = small_sources(10, 2);
  const DatasetSplit a = split_sources(data, {5, 2, 3}, Rng(1));
  const DatasetSplit b = split_sources(data, {5, 2, 3}, Rng(1));
  std::set<std::string> ids;
  for (const auto* part : {&a.source, &a.validation, &a.target}) {
    for (const auto& d : *part) ids.insert(d.id);
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(a.target[0].id, b.target[0].id);
  EXPECT_THROW(split_sources(data, {8, 2, 3}, Rng(1)), ConfigError);
}

}  // namespace
