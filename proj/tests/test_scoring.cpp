#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "icdesign/random.hpp"
#include "icdesign/scoring.hpp"
#include "test_util.hpp"

using namespace icdesign;
using testutil::code_of;

namespace {

ObservedOutcomes single_block(std::vector<double> y, std::vector<std::uint32_t> z, std::size_t agents) {
    ObservedOutcomes o;
    o.y = std::move(y);
    o.assignment.z = std::move(z);
    o.assignment.block.assign(o.y.size(), 0);
    o.assignment.agents = agents;
    o.assignment.blocks = 1;
    return o;
}

const ScoreFunction kMean{Statistic::SampleMeanPerAgent, Transform::identity()};

}  // namespace

TEST(ComputeStatistic, PurchasesExample) {
    // agents labelled 1 and 2 in the write-up are 0 and 1 here
    const auto o = single_block({0, 1, 4, 1}, {0, 1, 0, 1}, 2);
    EXPECT_EQ(compute_statistic(kMean, o), (std::vector<double>{2.0, 1.0}));
}

TEST(ComputeStatistic, ConstantData) {
    const auto o = single_block(std::vector<double>(9, 3.25), {0, 1, 2, 2, 1, 0, 1, 0, 2}, 3);
    EXPECT_EQ(compute_statistic(kMean, o), (std::vector<double>{3.25, 3.25, 3.25}));
}

TEST(ComputeStatistic, InterferenceStatisticPermutationCase) {
    ObservedOutcomes o;
    o.y = {2, 3, 5, 7};
    o.assignment.z = {0, 1, 0, 1};
    o.assignment.block = {0, 0, 1, 1};
    o.assignment.agents = 2;
    o.assignment.blocks = 2;
    const ScoreFunction t{Statistic::InterferenceT, Transform::identity()};
    const auto v = compute_statistic(t, o, 0.0);
    EXPECT_NEAR(v[0], 7.0, 1e-14);
    EXPECT_NEAR(v[1], 10.0, 1e-14);
    EXPECT_EQ(code_of([&] { compute_statistic(t, o); }), ErrorCode::MissingParameter);
}

TEST(ComputeStatistic, EmptyTestSet) {
    const auto o = single_block({1, 2}, {0, 0}, 2);
    EXPECT_EQ(code_of([&] { compute_statistic(kMean, o); }), ErrorCode::InvalidDimensions);
}

TEST(Transform, Arithmetic) {
    EXPECT_EQ(apply_transform(Transform::neg_reciprocal(), 2.0), -0.5);
    EXPECT_EQ(apply_transform(Transform::scaled_sqrt(), 9.0), 6.0);
    EXPECT_EQ(apply_transform(Transform::neg_reciprocal(), -1.0), 1.0);
    EXPECT_EQ(apply_transform(Transform::reciprocal(), 4.0), 0.25);
    EXPECT_EQ(apply_transform(Transform::identity(), -3.5), -3.5);
}

TEST(Transform, OutOfDomainSentinels) {
    EXPECT_EQ(apply_transform(Transform::reciprocal(), 0.0), kMinusInf);
    EXPECT_EQ(apply_transform(Transform::neg_reciprocal(), 0.0), kMinusInf);
    EXPECT_EQ(apply_transform(Transform::scaled_sqrt(), -1e-9), kMinusInf);
    EXPECT_EQ(apply_transform(Transform::identity(), std::nan("")), kMinusInf);
}

TEST(Transform, Derivatives) {
    EXPECT_EQ(*Transform::identity().derivative(3.0), 1.0);
    EXPECT_EQ(*Transform::neg_reciprocal().derivative(2.0), 0.25);
    EXPECT_EQ(*Transform::reciprocal().derivative(2.0), -0.25);
    EXPECT_EQ(*Transform::scaled_sqrt().derivative(4.0), 0.5);
    EXPECT_FALSE(Transform::reciprocal().derivative(0.0).has_value());
    EXPECT_FALSE(Transform::scaled_sqrt().derivative(0.0).has_value());
}

TEST(Transform, TabulatedDerivatives) {
    TabulatedTable lin;
    lin.x = {0, 1, 3};
    lin.nu = {0, 2, 3};
    const Transform l(lin);
    EXPECT_EQ(*l.derivative(0.5), 2.0);
    EXPECT_EQ(*l.derivative(2.0), 0.5);
    EXPECT_EQ(*l.derivative(3.0), 0.5);
    EXPECT_FALSE(l.derivative(3.5).has_value());

    TabulatedTable cub;
    for (int i = 0; i <= 8; ++i) {
        const double x = 1.0 + i;
        cub.x.push_back(x);
        cub.nu.push_back(2.0 * std::sqrt(x));
        cub.slope.push_back(1.0 / std::sqrt(x));
    }
    const Transform c(cub);
    for (std::size_t i = 0; i < cub.x.size(); ++i) EXPECT_NEAR(*c.derivative(cub.x[i]), cub.slope[i], 1e-15);
    const double h = 1e-5;
    EXPECT_NEAR(*c.derivative(4.3), (c(4.3 + h) - c(4.3 - h)) / (2 * h), 1e-8);
}

TEST(Transform, NegReciprocalIsNotGloballyOrderPreserving) {
    const auto f = Transform::neg_reciprocal();
    const double x = -1.0, y = 2.0;
    EXPECT_LT(x, y);
    EXPECT_GT(f(x), f(y));
    // but it is increasing on each half-line
    EXPECT_LT(f(0.5), f(1.0));
    EXPECT_LT(f(-2.0), f(-1.0));
}

TEST(Transform, NamesParseBack) {
    for (const auto& t : {Transform::identity(), Transform::reciprocal(), Transform::neg_reciprocal(),
                          Transform::scaled_sqrt()})
        EXPECT_EQ(parse_transform(t.name()).kind(), t.kind());
    EXPECT_EQ(code_of([] { parse_transform("log"); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_transform("tabulated:"); }), ErrorCode::ConfigError);
}

TEST(Tabulated, ReproducesKnotsAndIsMonotone) {
    TabulatedTable t;
    t.x = {0.0, 1.0, 2.0, 4.0};
    t.nu = {0.0, 0.5, 0.5, 3.0};
    const Transform f(t);
    for (std::size_t i = 0; i < t.x.size(); ++i) EXPECT_EQ(f(t.x[i]), t.nu[i]);
    double prev = f(-1.0);
    EXPECT_EQ(prev, 0.0);  // clamped below
    for (double v = -1.0; v <= 5.0; v += 0.01) {
        EXPECT_GE(f(v), prev);
        prev = f(v);
    }
    EXPECT_EQ(f(10.0), 3.0);  // clamped above
    EXPECT_NEAR(f(3.0), 1.75, 1e-15);
}

TEST(Tabulated, HermiteWithSlopesStaysMonotone) {
    TabulatedTable t;
    t.x = {0.0, 1.0, 2.0, 3.0};
    t.nu = {0.0, 0.1, 2.0, 2.05};
    t.slope = {5.0, 5.0, 5.0, 5.0};  // wildly overshooting raw slopes
    const Transform f(t);
    for (std::size_t i = 0; i < t.x.size(); ++i) EXPECT_NEAR(f(t.x[i]), t.nu[i], 1e-15);
    double prev = f(0.0);
    for (double v = 0.0; v <= 3.0; v += 0.001) {
        EXPECT_GE(f(v), prev - 1e-15);
        prev = f(v);
    }
}

TEST(Tabulated, RejectsBadTables) {
    TabulatedTable dup;
    dup.x = {0.0, 0.0};
    dup.nu = {0.0, 1.0};
    EXPECT_EQ(code_of([&] { Transform{dup}; }), ErrorCode::InvalidParameter);
    TabulatedTable down;
    down.x = {0.0, 1.0};
    down.nu = {1.0, 0.0};
    EXPECT_EQ(code_of([&] { Transform{down}; }), ErrorCode::InvalidParameter);
}

TEST(Tabulated, LoadsTwoColumnFile) {
    const auto path = (std::filesystem::temp_directory_path() / "icdesign_table_test.txt").string();
    {
        std::ofstream f(path);
        f << "# x nu\n0 0\n1 2  # comment\n\n2 3\n";
    }
    const auto t = parse_transform("tabulated:" + path);
    EXPECT_EQ(t.kind(), TransformKind::Tabulated);
    EXPECT_EQ(t(1.5), 2.5);
    EXPECT_EQ(t.name(), "tabulated:" + path);
    {
        std::ofstream f(path);
        f << "0 0\n1 x\n";
    }
    EXPECT_EQ(code_of([&] { load_tabulated(path); }), ErrorCode::ConfigError);
    {
        std::ofstream f(path);
        f << "0 0 0\n";
    }
    EXPECT_EQ(code_of([&] { load_tabulated(path); }), ErrorCode::ConfigError);
    std::filesystem::remove(path);
    EXPECT_EQ(code_of([&] { load_tabulated(path); }), ErrorCode::ConfigError);
}

TEST(Tabulated, ShiftAddsConstant) {
    TabulatedTable t;
    t.x = {1.0, 2.0};
    t.nu = {0.0, 1.0};
    const auto g = Transform(t).shifted(10.0);
    EXPECT_EQ(g(1.5), 10.5);
    EXPECT_EQ(code_of([] { Transform::identity().shifted(1.0); }), ErrorCode::InvalidParameter);
}

TEST(DeclareWinner, Argmax) {
    auto rng = CounterRng::substream(1, 0, 0, StreamPurpose::TieBreak);
    EXPECT_EQ(declare_winner(ScoreVector{{2.0, 1.0}}, rng), 0u);
    EXPECT_EQ(declare_winner(ScoreVector{{kMinusInf, 0.1}}, rng), 1u);
    EXPECT_EQ(declare_winner(ScoreVector{{std::nan(""), -5.0}}, rng), 1u);
}

TEST(DeclareWinner, NoDrawWithoutTie) {
    auto a = CounterRng::substream(1, 0, 0, StreamPurpose::TieBreak);
    declare_winner(ScoreVector{{1.0, 2.0, 0.0}}, a);
    EXPECT_EQ(a.position(), 0u);
}

TEST(DeclareWinner, TiesSplitUniformly) {
    const int R = 100000;
    int first = 0;
    for (int r = 0; r < R; ++r) {
        auto rng = CounterRng::substream(2, static_cast<std::uint64_t>(r), 0, StreamPurpose::TieBreak);
        first += declare_winner(ScoreVector{{3.0, 3.0}}, rng) == 0;
    }
    EXPECT_NEAR(first / static_cast<double>(R), 0.5, 3.0 * std::sqrt(0.25 / R));
}

TEST(DeclareWinner, ThreeWayTieNeverPicksLoser) {
    std::array<int, 4> counts{};
    const int R = 60000;
    for (int r = 0; r < R; ++r) {
        auto rng = CounterRng::substream(3, static_cast<std::uint64_t>(r), 0, StreamPurpose::TieBreak);
        ++counts[declare_winner(ScoreVector{{1.0, 1.0, 0.0, 1.0}}, rng)];
    }
    EXPECT_EQ(counts[2], 0);
    const double se = std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / R);
    for (std::size_t i : {0u, 1u, 3u}) EXPECT_NEAR(counts[i] / static_cast<double>(R), 1.0 / 3.0, 4.0 * se);
}

// Property: a strictly increasing map of the scores never changes the winner.
TEST(Property, ArgmaxInvariantUnderIncreasingMaps) {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    std::uniform_int_distribution<int> n_dist(2, 6);
    const std::vector<std::function<double(double)>> maps = {
        [](double x) { return std::exp(x); }, [](double x) { return x * x * x; },
        [](double x) { return 2.0 * std::sqrt(x); }, [](double x) { return -1.0 / x; },
        [](double x) { return std::log(x) + 7.0; }};
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> s(static_cast<std::size_t>(n_dist(gen)));
        for (auto& v : s) v = u(gen);
        if (trial % 5 == 0) s[1] = s[0];  // exercise the tie path
        for (const auto& g : maps) {
            std::vector<double> t(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) t[i] = g(s[i]);
            auto a = CounterRng::substream(4, static_cast<std::uint64_t>(trial), 0, StreamPurpose::TieBreak);
            auto b = a;
            EXPECT_EQ(declare_winner(ScoreVector{s}, a), declare_winner(ScoreVector{t}, b));
        }
    }
}
