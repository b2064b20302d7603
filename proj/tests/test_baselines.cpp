#include <gtest/gtest.h>

#include "meta_rdre/adapt.hpp"
#include "meta_rdre/baselines.hpp"
#include "meta_rdre/evalkit.hpp"
#include "support/finite_diff.hpp"
#include "support/ulsif_reference.hpp"

namespace {

using namespace meta_rdre;
namespace mt = meta_rdre::testing;

TEST(Median, HandValues) {
  // Distances {1, 3, 2}: median 2.
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::matrix({{0}, {1}, {3}})), 2.0);
  // Even count: {1, 2, 3, 1, 2, 1} -> mean of 1.5 order statistics = 1.5.
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::matrix({{0}, {1}, {2}, {3}})), 1.5);
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::matrix({{0, 0}, {3, 4}})), 5.0);
  // Union of the two supports.
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::matrix({{0}}), Tensor::matrix({{1}, {3}})), 2.0);
}

TEST(Median, Degenerate) {
  EXPECT_THROW(median_bandwidth(Tensor::matrix({{1}})), DataError);
  EXPECT_THROW(median_bandwidth(Tensor::matrix({{1}, {1}, {1}})), DataError);
}

TEST(Kernel, Features) {
  const Tensor phi = gaussian_kernel_features(Tensor::matrix({{0}, {2}}), Tensor::matrix({{0}, {1}}), 1.0);
  EXPECT_DOUBLE_EQ(phi(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(phi(0, 1), std::exp(-0.5));
  EXPECT_DOUBLE_EQ(phi(1, 0), std::exp(-2.0));
}

TEST(Rulsif, AlphaZeroEqualsDirectUlsif) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor nu = mt::random_matrix(30, 2, rng);
    const Tensor de = mt::random_matrix(40, 2, rng, 1.5);
    const double sigma = median_bandwidth(nu, de);
    for (double lambda : default_lambda_grid()) {
      const KernelRatioModel m = rulsif_fit(nu, de, 0.0, lambda, sigma);
      const mt::UlsifReference ref(nu, de, lambda, sigma);
      ASSERT_EQ(m.theta.size(), static_cast<std::size_t>(ref.theta.size()));
      for (std::size_t i = 0; i < m.theta.size(); ++i) EXPECT_NEAR(m.theta[i], ref.theta[i], 1e-10 * (1 + std::abs(ref.theta[i])));
      const Tensor x = mt::random_matrix(20, 2, rng);
      const Tensor ours = rulsif_predict(m, x);
      const Eigen::VectorXd theirs = ref.predict(x);
      for (std::size_t i = 0; i < ours.size(); ++i) EXPECT_NEAR(ours[i], theirs[i], 1e-10 * (1 + std::abs(theirs[i])));
    }
  }
}

TEST(Rulsif, QuadraticTermsAtAlphaZero) {
  Rng rng(2);
  const Tensor nu = mt::random_matrix(10, 1, rng);
  const Tensor de = mt::random_matrix(12, 1, rng);
  const mt::UlsifReference ref(nu, de, 0.1, 0.7);
  const auto [k_mat, k_vec] = build_quadratic(gaussian_kernel_features(nu, nu, 0.7), gaussian_kernel_features(de, nu, 0.7), 0.0);
  for (std::size_t i = 0; i < k_vec.size(); ++i) {
    EXPECT_NEAR(k_vec[i], ref.small_h(static_cast<Eigen::Index>(i)), 1e-12);
    for (std::size_t j = 0; j < k_vec.size(); ++j) {
      EXPECT_NEAR(k_mat(i, j), ref.big_h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 1e-12);
    }
  }
}

TEST(Rulsif, SelfRatioNearOne) {
  const GaussianSpec g = GaussianSpec::scalar(0.0, 1.0);
  Rng rng(3);
  const Tensor a = g.sample(400, rng);
  const Tensor b = g.sample(400, rng);
  const KernelRatioModel m = rulsif_fit(a, b, 0.5, 0.1, median_bandwidth(a, b));
  const Tensor r = rulsif_predict(m, Tensor::matrix(5, 1, {-1, -0.5, 0, 0.5, 1}));
  for (double v : r.data()) EXPECT_NEAR(v, 1.0, 0.15);
}

TEST(Rulsif, CentersCappedAndNonNegative) {
  Rng rng(4);
  const Tensor nu = mt::random_matrix(250, 1, rng);
  const Tensor de = mt::random_matrix(250, 1, rng, 2.0);
  const KernelRatioModel m = rulsif_fit(nu, de, 0.5, 1e-3, 0.5, 7);
  EXPECT_EQ(m.centers.rows(), kMaxKernelCenters);
  for (double t : m.theta.data()) EXPECT_GE(t, 0.0);
  const Tensor r = rulsif_predict(m, mt::random_matrix(100, 1, rng, 3.0));
  for (double v : r.data()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(rulsif_fit(nu, de, 0.5, 1e-3, 0.5, 7).centers, m.centers);
}

TEST(Rulsif, InvalidInputs) {
  const Tensor a = Tensor::matrix({{0}, {1}});
  EXPECT_THROW(rulsif_fit(a, a, 0.5, 0.0, 1.0), ConfigError);
  EXPECT_THROW(rulsif_fit(a, a, 0.5, 0.1, -1.0), ConfigError);
  EXPECT_THROW(rulsif_fit(a, Tensor::matrix({{0, 1}}), 0.5, 0.1, 1.0), ShapeError);
  EXPECT_THROW(rulsif_fit(Tensor({0, 1}), a, 0.5, 0.1, 1.0), DataError);
}

}  // namespace
