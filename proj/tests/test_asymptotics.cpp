#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "icdesign/asymptotics.hpp"
#include "icdesign/simulator.hpp"
#include "test_util.hpp"

using namespace icdesign;
using testutil::code_of;

namespace {

const ScoreFunction kIdentity{Statistic::SampleMeanPerAgent, Transform::identity()};
const ScoreFunction kSqrt{Statistic::SampleMeanPerAgent, Transform::scaled_sqrt()};
const ScoreFunction kNegRecip{Statistic::SampleMeanPerAgent, Transform::neg_reciprocal()};

ActionProfile pair_of(Action a, Action b) { return ActionProfile{{std::move(a), std::move(b)}}; }

std::vector<ActionSpace> grids(Family f, std::vector<Action> a, std::vector<Action> b) {
    return {ActionSpace(f, std::move(a)), ActionSpace(f, std::move(b))};
}

// Exact P(S1 > S2) + P(S1 = S2) / 2 for independent Poisson counts, by
// summing the pmfs in log space. This is the winner rule on sample means
// of equal-size test sets.
double poisson_race(double mean1, double mean2) {
    const int hi = static_cast<int>(std::max(mean1, mean2) + 40.0 * std::sqrt(std::max(mean1, mean2)) + 50.0);
    std::vector<double> p1(hi + 1), p2(hi + 1);
    for (int s = 0; s <= hi; ++s) {
        p1[s] = std::exp(s * std::log(mean1) - mean1 - std::lgamma(s + 1.0));
        p2[s] = std::exp(s * std::log(mean2) - mean2 - std::lgamma(s + 1.0));
    }
    double cdf2 = 0.0, win = 0.0;
    for (int s = 0; s <= hi; ++s) {
        win += p1[s] * (cdf2 + 0.5 * p2[s]);
        cdf2 += p2[s];
    }
    return win;
}

}  // namespace

TEST(AnalyticWinProb, NormalMeanVarExample) {
    const OutcomeModel m(Family::NormalMeanVar);
    const auto p = analytic_win_prob(m, kIdentity, pair_of(Action{2, 20}, Action{9, 1}), 1);
    EXPECT_NEAR(p[0], 0.0633152, 1e-7);  // Phi(-7 / sqrt(21))
    const auto d = analytic_win_prob(m, kIdentity, pair_of(Action{1.5, 100}, Action{9, 1}), 1);
    EXPECT_NEAR(d[0], 0.2277498, 1e-7);  // Phi(-7.5 / sqrt(101))
}

TEST(AnalyticWinProb, PoissonAgainstExactCounts) {
    const OutcomeModel m(Family::PoissonIID);
    const double exact = poisson_race(250.0, 200.0);  // lam = (5, 4), k = 50
    EXPECT_NEAR(exact, 0.99086, 2e-5);
    EXPECT_NEAR(analytic_win_prob(m, kIdentity, pair_of(Action{5}, Action{4}), 50)[0], exact, 2e-4);
    EXPECT_NEAR(analytic_win_prob(m, kSqrt, pair_of(Action{5}, Action{4}), 50)[0], exact, 2e-4);
}

TEST(AnalyticWinProb, SingleTestSetSqrtUsesTwoK) {
    const OutcomeModel m(Family::PoissonInterferenceFig1, 0.5);
    const auto p = pair_of(Action{3, 1}, Action{2, 1.5});
    const double k = 40;
    const double r1 = 3 + 0.5 * 1.5, r2 = 2 + 0.5 * 1;
    const double exact = poisson_race(k * r1, k * r2);
    EXPECT_NEAR(analytic_win_prob(m, kSqrt, p, k)[0], exact, 5e-3);
    // the sqrt(k/2) scaling misses by far more than any reasonable tolerance
    const double half = normal_cdf(std::sqrt(k / 2.0) * (std::sqrt(r1) - std::sqrt(r2)));
    EXPECT_GT(std::abs(half - exact), 0.05);
}

TEST(AnalyticWinProb, SymmetryAndDominance) {
    const OutcomeModel m(Family::PoissonIID);
    for (double k : {1.0, 10.0, 1000.0}) {
        const auto p = analytic_win_prob(m, kSqrt, pair_of(Action{3}, Action{3}), k);
        EXPECT_EQ(p[0], 0.5);
        EXPECT_EQ(p[1], 0.5);
    }
    const auto id = analytic_win_prob(m, kIdentity, pair_of(Action{5}, Action{4}), 50);
    const auto sq = analytic_win_prob(m, kSqrt, pair_of(Action{5}, Action{4}), 50);
    EXPECT_GT(sq[0], id[0]);
}

TEST(AnalyticWinProb, CatalogCoverage) {
    const OutcomeModel curved(Family::NormalCurved);
    EXPECT_NEAR(analytic_win_prob(curved, kIdentity, pair_of(Action{2}, Action{1.5}), 4)[0],
                normal_cdf(2.0 * 0.5 / std::sqrt(16 + 5.0625)), 1e-15);
    const OutcomeModel fig1(Family::PoissonInterferenceFig1, 0.5);
    const double z = analytic_win_z(fig1, kIdentity, pair_of(Action{3, 1}, Action{2, 4}), 9);
    EXPECT_NEAR(z, 3.0 * ((3 + 2.0) - (2 + 0.5)) / std::sqrt((3 + 2.0) + (2 + 0.5)), 1e-14);
    EXPECT_EQ(code_of([&] { analytic_win_prob(curved, kNegRecip, pair_of(Action{2}, Action{1}), 4); }),
              ErrorCode::NoClosedForm);
    const OutcomeModel pois(Family::PoissonIID);
    EXPECT_EQ(code_of([&] {
                  analytic_win_prob(pois, kIdentity, ActionProfile{{Action{1}, Action{2}, Action{3}}}, 4);
              }),
              ErrorCode::NoClosedForm);
    const OutcomeModel fig2(Family::PoissonInterferenceFig2, 0.5);
    EXPECT_EQ(code_of([&] {
                  analytic_win_prob(fig2, ScoreFunction{Statistic::InterferenceT, Transform::identity()},
                                    pair_of(Action{1, 1}, Action{2, 2}), 4);
              }),
              ErrorCode::NoClosedForm);
}

// Property: P1 + P2 = 1 exactly for every cataloged formula.
TEST(Property, TwoAgentProbabilitiesSumToOne) {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.1, 10.0), gd(0.0, 0.95);
    for (int i = 0; i < 2000; ++i) {
        const double k = 1 + i % 300;
        const std::vector<std::pair<OutcomeModel, std::pair<ScoreFunction, ActionProfile>>> cases = {
            {OutcomeModel(Family::NormalMeanVar), {kIdentity, pair_of(Action{u(gen), u(gen)}, Action{u(gen), u(gen)})}},
            {OutcomeModel(Family::NormalCurved), {kIdentity, pair_of(Action{u(gen)}, Action{u(gen)})}},
            {OutcomeModel(Family::PoissonIID), {kIdentity, pair_of(Action{u(gen)}, Action{u(gen)})}},
            {OutcomeModel(Family::PoissonIID), {kSqrt, pair_of(Action{u(gen)}, Action{u(gen)})}},
            {OutcomeModel(Family::PoissonInterferenceFig1, gd(gen)),
             {kIdentity, pair_of(Action{u(gen), u(gen)}, Action{u(gen), u(gen)})}},
            {OutcomeModel(Family::PoissonInterferenceFig1, gd(gen)),
             {kSqrt, pair_of(Action{u(gen), u(gen)}, Action{u(gen), u(gen)})}}};
        for (const auto& [model, sp] : cases) {
            const auto p = analytic_win_prob(model, sp.first, sp.second, k);
            EXPECT_EQ(p[0] + p[1], 1.0);
        }
    }
}

// Property: sqrt scoring beats the sample mean on every pair lam1 > lam2.
TEST(Property, SqrtDominatesMeanForPoisson) {
    const OutcomeModel m(Family::PoissonIID);
    for (double k : {10.0, 100.0})
        for (int a = 1; a <= 20; ++a)
            for (int b = 1; b < a; ++b) {
                const auto p = pair_of(Action{0.1 + 19.9 * a / 20.0}, Action{0.1 + 19.9 * b / 20.0});
                EXPECT_GT(analytic_win_z(m, kSqrt, p, k), analytic_win_z(m, kIdentity, p, k));
                EXPECT_GE(analytic_win_prob(m, kSqrt, p, k)[0], analytic_win_prob(m, kIdentity, p, k)[0]);
            }
}

TEST(IdentifyingCovariance, Examples) {
    const auto c = identifying_covariance(OutcomeModel(Family::NormalCurved), pair_of(Action{1.5}, Action{9}));
    EXPECT_EQ(c(0, 0), 5.0625);
    EXPECT_EQ(c(1, 1), 6561.0);
    EXPECT_EQ(c(0, 1), 0.0);
    const auto p = identifying_covariance(OutcomeModel(Family::PoissonIID), pair_of(Action{5}, Action{4}));
    EXPECT_EQ(p.max_abs_diff(Matrix{{5, 0}, {0, 4}}), 0.0);
    const auto f2 = identifying_covariance(OutcomeModel(Family::PoissonInterferenceFig2, 0.0),
                                           pair_of(Action{3, 1}, Action{4, 2}));
    EXPECT_NEAR(f2.max_abs_diff(Matrix{{4, 0}, {0, 6}}), 0.0, 1e-15);
    EXPECT_EQ(code_of([] {
                  identifying_covariance(OutcomeModel(Family::PoissonInterferenceFig1, 0.5),
                                         pair_of(Action{3, 1}, Action{4, 2}));
              }),
              ErrorCode::NoIdentifyingStatistic);
}

TEST(DeltaCovariance, Examples) {
    const Matrix curved = Matrix::diagonal({std::pow(1.5, 4), std::pow(2.5, 4)});
    const auto v = delta_covariance(curved, Transform::neg_reciprocal(), {1.5, 2.5});
    EXPECT_NEAR(v.max_abs_diff(Matrix::identity(2)), 0.0, 1e-14);
    const Matrix s{{2, 0.5}, {0.5, 3}};
    EXPECT_EQ(delta_covariance(s, Transform::identity(), {1, 1}).max_abs_diff(s), 0.0);
    const auto q = delta_covariance(Matrix::diagonal({5, 4}), Transform::scaled_sqrt(), {5, 4});
    EXPECT_NEAR(q.max_abs_diff(Matrix::identity(2)), 0.0, 1e-14);
    EXPECT_EQ(code_of([] { delta_covariance(Matrix::identity(2), Transform::reciprocal(), {0.0, 1.0}); }),
              ErrorCode::SingularTransform);
}

TEST(PairwiseVariance, Examples) {
    EXPECT_EQ(pairwise_variance(Matrix::identity(2), 0, 1), 2.0);
    EXPECT_EQ(pairwise_variance(Matrix{{4, 1.5}, {1.5, 9}}, 1, 0), 10.0);
    EXPECT_EQ(code_of([] { pairwise_variance(Matrix::identity(2), 1, 1); }), ErrorCode::InvalidPair);
}

TEST(Theorem1, LowQualityAgentGamblesOnVariance) {
    const OutcomeModel m(Family::NormalMeanVar);
    const auto spaces = grids(Family::NormalMeanVar, {Action{1.5, 100}, Action{2, 20}}, {Action{9, 1}});
    const auto cert = check_ic_theorem1(m, kIdentity, spaces, 1.0, 1e-9, "ex2a");
    EXPECT_EQ(cert.verdict, Verdict::NotIC);
    ASSERT_EQ(cert.witnesses.size(), 1u);
    const auto& w = cert.witnesses[0];
    EXPECT_EQ(w.agent, 0u);
    EXPECT_EQ(w.deviation, (Action{1.5, 100}));
    EXPECT_NEAR(w.p_deviation, 0.2277498, 1e-6);
    EXPECT_NEAR(w.p_natural, 0.0633152, 1e-6);
    EXPECT_GT(w.p_deviation, w.p_natural);
    EXPECT_EQ(cert.grid_sizes, (std::vector<std::size_t>{2, 1}));
}

TEST(Theorem1, CurvedNormalSampleMean) {
    const OutcomeModel m(Family::NormalCurved);
    const std::vector<Action> g = {Action{1.5}, Action{2}, Action{9}};
    EXPECT_EQ(check_ic_theorem1(m, kIdentity, grids(Family::NormalCurved, g, g), 1.0).verdict, Verdict::NotIC);
    // against a lone rival at 9 the natural action stays the best response
    const auto narrow = grids(Family::NormalCurved, {Action{1.5}, Action{2}}, {Action{9}});
    EXPECT_EQ(check_ic_theorem1(m, kIdentity, narrow, 1.0).verdict, Verdict::IC);
}

TEST(Theorem1, ReciprocalScoringRestoresIncentives) {
    const OutcomeModel m(Family::NormalCurved);
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> u(0.2, 12.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<Action> a, b;
        for (int i = 0; i < 5; ++i) {
            a.push_back(Action{u(gen)});
            b.push_back(Action{u(gen)});
        }
        EXPECT_EQ(check_ic_theorem1(m, kNegRecip, grids(Family::NormalCurved, a, b), 1.0).verdict, Verdict::IC);
    }
}

TEST(Theorem1, TwoGroupDesignIsIC) {
    const OutcomeModel m(Family::PoissonInterferenceFig2, 0.5);
    const std::vector<Action> g = {Action{3, 1}, Action{2, 4}, Action{4, 0.5}, Action{1, 1}, Action{0.5, 6}};
    const auto cert =
        check_ic_theorem1(m, ScoreFunction{Statistic::InterferenceT, Transform::identity()},
                          grids(Family::PoissonInterferenceFig2, g, g), 25.0);
    EXPECT_EQ(cert.verdict, Verdict::IC);
    EXPECT_EQ(cert.cells_checked, 50u);
}

TEST(Theorem1, SingleTestSetHasNoStatistic) {
    const OutcomeModel m(Family::PoissonInterferenceFig1, 0.5);
    const std::vector<Action> g = {Action{3, 1}, Action{2, 4}};
    EXPECT_EQ(code_of([&] { check_ic_theorem1(m, kIdentity, grids(Family::PoissonInterferenceFig1, g, g), 1.0); }),
              ErrorCode::NoIdentifyingStatistic);
    for (const auto& s : {kIdentity, kSqrt}) {
        const auto cert = check_ic_closed_form(m, s, grids(Family::PoissonInterferenceFig1, g, g), 100.0);
        EXPECT_EQ(cert.verdict, Verdict::NotIC);
        ASSERT_FALSE(cert.witnesses.empty());
        EXPECT_EQ(cert.witnesses[0].deviation, (Action{3, 1}));
    }
}

TEST(Theorem1, SinglePointGridsAreIC) {
    const OutcomeModel m(Family::PoissonIID);
    const auto cert = check_ic_theorem1(m, kIdentity, grids(Family::PoissonIID, {Action{2}}, {Action{7}}), 10.0);
    EXPECT_EQ(cert.verdict, Verdict::IC);
    EXPECT_TRUE(cert.witnesses.empty());
}

TEST(Theorem1, ThreeAgents) {
    const OutcomeModel m(Family::PoissonIID);
    const std::vector<ActionSpace> s(3, ActionSpace(Family::PoissonIID, {Action{1}, Action{4}, Action{6}}));
    const auto cert = check_ic_theorem1(m, kIdentity, s, 10.0);
    EXPECT_EQ(cert.verdict, Verdict::IC);
    EXPECT_EQ(cert.cells_checked, 3u * 9u * 3u);
}

TEST(Theorem2, Conditions) {
    const std::vector<Action> g = {Action{1.5}, Action{2}, Action{9}};
    const auto d = check_ic_theorem2(OutcomeModel(Family::NormalCurved), kNegRecip,
                                     grids(Family::NormalCurved, g, g), 1.0, 1e-9);
    EXPECT_EQ(d.conditions, (Theorem2Conditions{true, true, true}));
    EXPECT_EQ(d.verdict, Theorem2Verdict::IC);

    const std::vector<Action> lam = {Action{2}, Action{4}, Action{5}};
    const auto a = check_ic_theorem2(OutcomeModel(Family::PoissonIID), kIdentity, grids(Family::PoissonIID, lam, lam),
                                     1.0, 1e-9);
    EXPECT_EQ(a.conditions, (Theorem2Conditions{true, false, true}));
    EXPECT_EQ(a.verdict, Theorem2Verdict::Inconclusive);
    EXPECT_EQ(check_ic_theorem1(OutcomeModel(Family::PoissonIID), kIdentity, grids(Family::PoissonIID, lam, lam), 1.0)
                  .verdict,
              Verdict::IC);

    const auto one = check_ic_theorem2(OutcomeModel(Family::PoissonIID), kIdentity,
                                       grids(Family::PoissonIID, {Action{3}}, {Action{3}}), 1.0, 1e-9);
    EXPECT_EQ(one.conditions, (Theorem2Conditions{true, true, true}));

    // an order-reversing score breaks the monotone condition
    const auto rev = check_ic_theorem2(OutcomeModel(Family::PoissonIID),
                                       ScoreFunction{Statistic::SampleMeanPerAgent, Transform::reciprocal()},
                                       grids(Family::PoissonIID, lam, lam), 1.0, 1e-9);
    EXPECT_FALSE(rev.conditions.monotone);

    EXPECT_EQ(code_of([] {
                  const std::vector<Action> f = {Action{1, 1}};
                  check_ic_theorem2(OutcomeModel(Family::PoissonInterferenceFig2, 0.5), kIdentity,
                                    grids(Family::PoissonInterferenceFig2, f, f), 1.0, 1e-9);
              }),
              ErrorCode::AssumptionViolated);
}

// Property: shifting a tabulated score by a constant changes neither the
// certificate nor any winner.
TEST(Property, AdditiveConstantInvariance) {
    TabulatedTable t;
    for (int i = 0; i <= 40; ++i) {
        t.x.push_back(0.5 + 0.25 * i);
        t.nu.push_back(2.0 * std::sqrt(t.x.back()));
    }
    t.source = "sqrt";
    const Transform base(t);
    const OutcomeModel m(Family::PoissonIID);
    const std::vector<Action> g = {Action{1}, Action{2.5}, Action{4}, Action{7}};
    const auto spaces = grids(Family::PoissonIID, g, g);
    const auto ref = check_ic_theorem1(m, ScoreFunction{Statistic::SampleMeanPerAgent, base}, spaces, 20.0);
    for (double c : {-100.0, -1.0, 0.5, 1e3}) {
        const auto shifted = base.shifted(c);
        const auto cert = check_ic_theorem1(m, ScoreFunction{Statistic::SampleMeanPerAgent, shifted}, spaces, 20.0);
        EXPECT_EQ(cert.verdict, ref.verdict);
        EXPECT_EQ(cert.witnesses.size(), ref.witnesses.size());
        Scenario s;
        s.model = m;
        s.m = 40;
        s.score = ScoreFunction{Statistic::SampleMeanPerAgent, base};
        const GameRunner a(s, {ActionProfile{{Action{4}, Action{3}}}});
        s.score.transform = shifted;
        const GameRunner b(s, {ActionProfile{{Action{4}, Action{3}}}});
        for (std::uint64_t r = 0; r < 2000; ++r) ASSERT_EQ(a.winner(9, r), b.winner(9, r));
    }
}

TEST(PowerCompare, SqrtIsMorePowerfulForPoisson) {
    const OutcomeModel m(Family::PoissonIID);
    const std::vector<Action> g = {Action{2}, Action{4}, Action{5}};
    const auto spaces = grids(Family::PoissonIID, g, g);
    const Design d{"mean", kIdentity, check_ic_theorem1(m, kIdentity, spaces, 50)};
    const Design dp{"sqrt", kSqrt, check_ic_theorem1(m, kSqrt, spaces, 50)};
    const auto natural = pair_of(Action{5}, Action{4});
    const auto r = power_compare(d, dp, m, natural, 50, CertMethod::Analytic);
    EXPECT_EQ(r.tau, 0u);
    EXPECT_GT(r.p_tau_Dprime, r.p_tau_D);
    EXPECT_TRUE(r.more_powerful);

    const auto same = power_compare(d, d, m, natural, 50, CertMethod::Analytic);
    EXPECT_EQ(same.p_tau_D, same.p_tau_Dprime);
    EXPECT_TRUE(same.more_powerful);

    const auto tie = power_compare(d, dp, m, pair_of(Action{5}, Action{5}), 50, CertMethod::Analytic);
    EXPECT_EQ(tie.p_tau_D, 0.5);
    EXPECT_EQ(tie.p_tau_Dprime, 0.5);
    EXPECT_TRUE(tie.more_powerful);

    const auto mc = power_compare(d, dp, m, natural, 50, CertMethod::MonteCarlo, 20000, 3);
    EXPECT_TRUE(mc.more_powerful);
    EXPECT_NEAR(mc.p_tau_D, r.p_tau_D, 4.0 * std::sqrt(r.p_tau_D * (1 - r.p_tau_D) / 20000));
}

TEST(PowerCompare, NeedsCertificates) {
    const OutcomeModel m(Family::PoissonIID);
    const Design bare{"mean", kIdentity, std::nullopt};
    ICCertificate bad;
    bad.verdict = Verdict::NotIC;
    const Design failing{"x", kIdentity, bad};
    const auto natural = pair_of(Action{5}, Action{4});
    EXPECT_EQ(code_of([&] { power_compare(bare, bare, m, natural, 10, CertMethod::Analytic); }),
              ErrorCode::NotCertified);
    EXPECT_EQ(code_of([&] { power_compare(failing, failing, m, natural, 10, CertMethod::Analytic); }),
              ErrorCode::NotCertified);
}

TEST(PowerCompare, DeltaMethodFallback) {
    const OutcomeModel m(Family::NormalCurved);
    const std::vector<Action> g = {Action{1}, Action{2}};
    const auto spaces = grids(Family::NormalCurved, g, g);
    const Design d{"recip", kNegRecip, check_ic_theorem1(m, kNegRecip, spaces, 9)};
    const auto r = power_compare(d, d, m, pair_of(Action{2}, Action{1}), 9, CertMethod::Analytic);
    EXPECT_NEAR(r.p_tau_D, normal_cdf(3.0 * 0.5 / std::sqrt(2.0)), 1e-14);
}
