#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <set>

#include "icdesign/numerics.hpp"
#include "icdesign/random.hpp"

using namespace icdesign;

TEST(NormalCdf, KnownValues) {
    EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
    EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-15);
    EXPECT_NEAR(normal_cdf(-1.0), 0.15865525393145707, 1e-15);
    // deep tail keeps relative precision
    EXPECT_NEAR(normal_cdf(-10.0) / 7.619853024160527e-24, 1.0, 1e-12);
}

TEST(Matrix, ProductsAndTranspose) {
    const Matrix a{{1, 2, 3}, {4, 5, 6}};
    const Matrix at = a.transpose();
    EXPECT_EQ(at.rows(), 3u);
    EXPECT_EQ(at(2, 1), 6.0);
    const Matrix aat = a * at;
    EXPECT_EQ(aat(0, 0), 14.0);
    EXPECT_EQ(aat(0, 1), 32.0);
    EXPECT_TRUE(aat.is_symmetric());
    const auto v = a * std::vector<double>{1, 0, -1};
    EXPECT_EQ(v, (std::vector<double>{-2, -2}));
}

TEST(Matrix, InverseMatchesEigenOnRandomMatrices) {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + trial % 6;
        Matrix a(n, n);
        Eigen::MatrixXd e(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j) = u(gen) + (i == j ? 2.0 : 0.0);
        const auto inv = invert(a);
        ASSERT_TRUE(inv.has_value());
        const Eigen::MatrixXd oracle = e.inverse();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR((*inv)(i, j), oracle(i, j), 1e-12);
    }
}

TEST(Matrix, InverseNeedsPivoting) {
    const Matrix p{{0, 1}, {1, 0}};
    const auto inv = invert(p);
    ASSERT_TRUE(inv.has_value());
    EXPECT_EQ(inv->max_abs_diff(p), 0.0);
}

TEST(Matrix, SingularReturnsNothing) {
    EXPECT_FALSE(invert(Matrix{{1, 2}, {2, 4}}).has_value());
    EXPECT_FALSE(invert(Matrix(3, 3)).has_value());
}

TEST(AdaptiveSimpson, SmoothIntegrands) {
    const auto s = integrate_adaptive_simpson([](double x) { return std::sin(x); }, 0.0, M_PI, 1e-12);
    EXPECT_TRUE(s.converged);
    EXPECT_NEAR(s.value, 2.0, 1e-11);
    const auto r = integrate_adaptive_simpson([](double z) { return 1.0 / std::sqrt(z); }, 1.0, 9.0, 1e-12);
    EXPECT_NEAR(r.value, 4.0, 1e-11);
    EXPECT_LE(r.error_estimate, 1e-11);
}

TEST(AdaptiveSimpson, EmptyInterval) {
    EXPECT_EQ(integrate_adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0, 1e-10).value, 0.0);
}

TEST(CounterRng, SameKeySameStream) {
    auto a = CounterRng::substream(7, 3, 1, StreamPurpose::Outcomes, 2);
    auto b = CounterRng::substream(7, 3, 1, StreamPurpose::Outcomes, 2);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(CounterRng, DistinctKeysDiffer) {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t rep = 0; rep < 20; ++rep)
        for (std::uint64_t block = 0; block < 3; ++block)
            for (auto p : {StreamPurpose::Assignment, StreamPurpose::Outcomes, StreamPurpose::TieBreak,
                           StreamPurpose::CellOutcomes})
                for (std::uint64_t lane = 0; lane < 3; ++lane)
                    firsts.insert(CounterRng::substream(42, rep, block, p, lane)());
    EXPECT_EQ(firsts.size(), 20u * 3u * 4u * 3u);
    EXPECT_NE(CounterRng::substream(1, 0, 0, StreamPurpose::Outcomes)(),
              CounterRng::substream(2, 0, 0, StreamPurpose::Outcomes)());
}

TEST(CounterRng, UniformMoments) {
    auto r = CounterRng::substream(5, 0, 0, StreamPurpose::Profiles);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sum2 += u * u;
    }
    EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sum2 / n - (sum / n) * (sum / n), 1.0 / 12.0, 2e-3);
}
