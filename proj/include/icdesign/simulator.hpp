#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "asymptotics.hpp"
#include "errors.hpp"
#include "interference.hpp"
#include "outcome_models.hpp"
#include "random.hpp"
#include "scoring.hpp"

namespace icdesign {

enum class Aggregation { SummedScores, MajorityOfBlocks };

/// SufficientStatistic draws each cell's sample mean directly (exact for the
/// Normal and Poisson families); PerUnit samples an assignment and every
/// unit's outcome.
enum class SamplingMode { SufficientStatistic, PerUnit };

constexpr std::string_view aggregation_name(Aggregation a) {
    return a == Aggregation::SummedScores ? "summed" : "majority";
}
constexpr std::string_view sampling_name(SamplingMode s) {
    return s == SamplingMode::SufficientStatistic ? "sufficient" : "per_unit";
}

struct Scenario {
    std::string id = "scenario";
    OutcomeModel model{Family::PoissonIID};
    ScoreFunction score;
    std::vector<ActionSpace> spaces;
    std::size_t m = 0;
    std::size_t n = 2;
    std::size_t blocks = 1;
    Aggregation aggregation = Aggregation::SummedScores;
    SamplingMode sampling = SamplingMode::SufficientStatistic;

    /// Units per agent per block.
    std::size_t k() const { return m / (n * blocks); }

    /// Normalization of the identifying statistic: units per test set for the
    /// two-group interference design, units per agent otherwise.
    std::size_t statistic_k() const {
        return model.family() == Family::PoissonInterferenceFig2 ? m / 4 : k();
    }

    void validate() const {
        if (n < 2) fail(ErrorCode::InvalidDimensions, "a game needs at least 2 agents");
        if (blocks < 1) fail(ErrorCode::InvalidDimensions, "blocks must be >= 1");
        if (m == 0 || m % (n * blocks) != 0)
            fail(ErrorCode::InvalidDimensions, "m=" + std::to_string(m) + " must be a positive multiple of n*blocks=" +
                                                   std::to_string(n * blocks));
        if (!spaces.empty() && spaces.size() != n)
            fail(ErrorCode::InvalidDimensions, "expected " + std::to_string(n) + " action spaces, got " +
                                                   std::to_string(spaces.size()));
        for (const auto& s : spaces)
            if (s.family() != model.family()) fail(ErrorCode::FamilyMismatch, "action space family differs from model");
        if (is_interference(model.family())) {
            if (n != 2) fail(ErrorCode::UnsupportedAgentCount, "interference models require exactly 2 agents");
            if (blocks != 1) fail(ErrorCode::InvalidDimensions, "interference models take a single block");
            if (m % 4 != 0) fail(ErrorCode::InvalidDimensions, "interference designs need m divisible by 4");
        }
        const bool two_group = model.family() == Family::PoissonInterferenceFig2;
        if ((score.statistic == Statistic::InterferenceT) != two_group)
            fail(ErrorCode::InvalidParameter, "the interference statistic and the two-group design go together");
    }

    ActionProfile natural_profile() const {
        ActionProfile p;
        for (const auto& s : spaces) p.actions.push_back(s.natural());
        return p;
    }
};

struct GameOutcome {
    std::size_t winner = 0;
    std::vector<double> scores;  // summed scores, or blocks won under majority
    std::uint64_t outcomes_digest = 0;
};

/// One fixed (scenario, per-block profile) pair, prepared for repeated play.
/// Replication r draws only from substreams keyed by (seed, r, block, purpose,
/// lane), so results do not depend on which thread plays which replication,
/// and cell c always uses the same substream whatever the actions are.
class GameRunner {
public:
    GameRunner(const Scenario& scenario, std::vector<ActionProfile> per_block)
        : scenario_(scenario), per_block_(std::move(per_block)) {
        scenario_.validate();
        if (is_interference(scenario_.model.family())) {
            if (per_block_.size() != 1) fail(ErrorCode::InvalidDimensions, "interference models take one profile");
        } else if (per_block_.size() == 1 && scenario_.blocks > 1) {
            per_block_.assign(scenario_.blocks, per_block_[0]);
        }
        if (!is_interference(scenario_.model.family()) && per_block_.size() != scenario_.blocks)
            fail(ErrorCode::InvalidDimensions, "need one profile per block");
        for (const auto& p : per_block_)
            if (p.size() != scenario_.n)
                fail(ErrorCode::InvalidDimensions, "profile has " + std::to_string(p.size()) + " actions for " +
                                                       std::to_string(scenario_.n) + " agents");
        laws_ = cell_laws(scenario_.model, per_block_);
        layout_blocks_ = layout_blocks(scenario_.model, scenario_.blocks);
        units_per_cell_ = scenario_.m / (layout_blocks_ * scenario_.n);
        if (units_per_cell_ == 0) fail(ErrorCode::InvalidDimensions, "empty test set");
        if (scenario_.score.statistic == Statistic::InterferenceT) alg_ = build_algebra(scenario_.model.gamma_or_zero());
    }

    const Scenario& scenario() const { return scenario_; }

    GameOutcome play(std::uint64_t seed, std::uint64_t rep) const {
        GameOutcome out;
        const auto means = cell_means(seed, rep);
        out.outcomes_digest = digest(means);
        const std::size_t n = scenario_.n;

        std::vector<std::vector<double>> stats;  // [block][agent]
        if (alg_) {
            const auto t = compute_T(*alg_, {means[0], means[1], means[2], means[3]});
            stats.push_back({t[0], t[1]});
        } else {
            for (std::size_t b = 0; b < scenario_.blocks; ++b)
                stats.emplace_back(means.begin() + static_cast<std::ptrdiff_t>(b * n),
                                   means.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
        }
        for (auto& block : stats)
            for (double& v : block) v = scenario_.score.transform(v);

        if (stats.size() == 1 || scenario_.aggregation == Aggregation::SummedScores) {
            out.scores.assign(n, 0.0);
            for (const auto& block : stats)
                for (std::size_t i = 0; i < n; ++i) out.scores[i] += block[i];
            auto tie = CounterRng::substream(seed, rep, 0, StreamPurpose::TieBreak);
            out.winner = declare_winner(ScoreVector{out.scores}, tie);
            return out;
        }
        out.scores.assign(n, 0.0);
        for (std::size_t b = 0; b < stats.size(); ++b) {
            auto tie = CounterRng::substream(seed, rep, b, StreamPurpose::TieBreak);
            out.scores[declare_winner(ScoreVector{stats[b]}, tie)] += 1.0;
        }
        auto tie = CounterRng::substream(seed, rep, stats.size(), StreamPurpose::TieBreak);
        out.winner = declare_winner(ScoreVector{out.scores}, tie);
        return out;
    }

    std::size_t winner(std::uint64_t seed, std::uint64_t rep) const { return play(seed, rep).winner; }

private:
    std::vector<double> cell_means(std::uint64_t seed, std::uint64_t rep) const {
        const std::size_t n = scenario_.n;
        if (scenario_.sampling == SamplingMode::SufficientStatistic) {
            std::vector<double> means(laws_.size());
            for (std::size_t c = 0; c < laws_.size(); ++c) {
                auto rng = CounterRng::substream(seed, rep, c / n, StreamPurpose::CellOutcomes, c % n);
                means[c] = draw_cell_mean(laws_[c], units_per_cell_, rng);
            }
            return means;
        }
        auto arng = CounterRng::substream(seed, rep, 0, StreamPurpose::Assignment);
        const auto assignment = sample_assignment(scenario_.m, n, layout_blocks_, arng);
        auto orng = CounterRng::substream(seed, rep, 0, StreamPurpose::Outcomes);
        const auto outcomes =
            sample_outcomes(scenario_.model, assignment, std::span<const ActionProfile>(per_block_), orng);
        return outcomes.cell_means();
    }

    static std::uint64_t digest(const std::vector<double>& v) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (double x : v) {
            auto bits = std::bit_cast<std::uint64_t>(x);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    Scenario scenario_;
    std::vector<ActionProfile> per_block_;
    std::vector<UnitLaw> laws_;
    std::size_t layout_blocks_ = 1;
    std::size_t units_per_cell_ = 0;
    std::optional<InterferenceAlgebra> alg_;
};

inline GameOutcome run_game_once(const Scenario& scenario, const std::vector<ActionProfile>& per_block,
                                 std::uint64_t seed, std::uint64_t rep) {
    return GameRunner(scenario, per_block).play(seed, rep);
}

/// Splits [0, reps) into contiguous chunks run on `threads` workers; body(begin,
/// end, worker) accumulates into worker-local state. threads = 0 uses the
/// hardware concurrency.
template <class Body>
void parallel_reps(std::uint64_t reps, unsigned threads, Body&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(reps, 1)));
    if (threads <= 1) {
        body(std::uint64_t{0}, reps, 0u);
        return;
    }
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (reps + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::uint64_t begin = std::min(reps, t * chunk);
        const std::uint64_t end = std::min(reps, begin + chunk);
        pool.emplace_back([&body, begin, end, t] { body(begin, end, t); });
    }
    for (auto& th : pool) th.join();
}

inline unsigned resolved_threads(unsigned threads) {
    return threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
}

struct MCEstimate {
    std::vector<double> p_hat;
    std::vector<double> se;
    std::vector<std::uint64_t> wins;
    std::uint64_t reps = 0;
    std::uint64_t seed = 0;
};

inline MCEstimate make_estimate(std::vector<std::uint64_t> wins, std::uint64_t reps, std::uint64_t seed) {
    MCEstimate e;
    e.reps = reps;
    e.seed = seed;
    e.wins = std::move(wins);
    for (auto w : e.wins) {
        const double p = static_cast<double>(w) / static_cast<double>(reps);
        e.p_hat.push_back(p);
        e.se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(reps)));
    }
    return e;
}

/// Win frequencies over `reps` independent replications.
inline MCEstimate estimate_win_prob(const Scenario& scenario, const std::vector<ActionProfile>& per_block,
                                    std::uint64_t reps, std::uint64_t seed, unsigned threads = 1) {
    if (reps < 1) fail(ErrorCode::InvalidParameter, "reps must be >= 1");
    const GameRunner runner(scenario, per_block);
    const unsigned workers = resolved_threads(threads);
    std::vector<std::vector<std::uint64_t>> tallies(workers, std::vector<std::uint64_t>(scenario.n, 0));
    parallel_reps(reps, workers, [&](std::uint64_t begin, std::uint64_t end, unsigned w) {
        auto& t = tallies[w];
        for (std::uint64_t r = begin; r < end; ++r) ++t[runner.winner(seed, r)];
    });
    std::vector<std::uint64_t> wins(scenario.n, 0);
    for (const auto& t : tallies)
        for (std::size_t i = 0; i < wins.size(); ++i) wins[i] += t[i];
    return make_estimate(std::move(wins), reps, seed);
}

inline MCEstimate estimate_win_prob(const Scenario& scenario, const ActionProfile& profile, std::uint64_t reps,
                                    std::uint64_t seed, unsigned threads = 1) {
    return estimate_win_prob(scenario, std::vector<ActionProfile>{profile}, reps, seed, threads);
}

/// Number of (agent, opponent profile, own action) cells a best-response
/// search visits.
inline std::size_t best_response_cells(const std::vector<ActionSpace>& spaces) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < spaces.size(); ++i) {
        std::size_t cells = spaces[i].size();
        for (std::size_t j = 0; j < spaces.size(); ++j)
            if (j != i) cells *= spaces[j].size();
        total += cells;
    }
    return total;
}

/// Monte Carlo best-response search. Every own action of a cell is played on
/// the same replication streams (common random numbers), and a deviation is a
/// violation when its paired win-rate gain exceeds 3 standard errors.
inline ICCertificate mc_best_response(const Scenario& scenario, std::uint64_t reps_per_cell, std::uint64_t seed,
                                      std::size_t budget = 100000, unsigned threads = 1) {
    scenario.validate();
    if (scenario.spaces.size() != scenario.n) fail(ErrorCode::InvalidDimensions, "scenario needs one space per agent");
    if (reps_per_cell < 1) fail(ErrorCode::InvalidParameter, "reps must be >= 1");
    const auto& spaces = scenario.spaces;
    const std::size_t cells = best_response_cells(spaces);
    if (cells > budget)
        fail(ErrorCode::BudgetExceeded, std::to_string(cells) + " cells exceed the budget of " + std::to_string(budget));

    ICCertificate cert;
    cert.design_id = scenario.id;
    cert.method = CertMethod::MonteCarlo;
    for (const auto& s : spaces) cert.grid_sizes.push_back(s.size());
    const unsigned workers = resolved_threads(threads);
    const double R = static_cast<double>(reps_per_cell);

    for (std::size_t i = 0; i < scenario.n; ++i) {
        const std::size_t own = spaces[i].size();
        const std::size_t nat = spaces[i].natural_index();
        detail::for_each_opponent_profile(spaces, i, [&](std::vector<std::size_t> idx) {
            std::vector<GameRunner> runners;
            runners.reserve(own);
            for (std::size_t a = 0; a < own; ++a) {
                idx[i] = a;
                runners.emplace_back(scenario, std::vector<ActionProfile>{detail::profile_at(spaces, idx)});
            }
            cert.cells_checked += own;
            struct Tally {
                std::vector<std::uint64_t> wins, plus, minus;
            };
            std::vector<Tally> tallies(workers, Tally{std::vector<std::uint64_t>(own, 0),
                                                      std::vector<std::uint64_t>(own, 0),
                                                      std::vector<std::uint64_t>(own, 0)});
            parallel_reps(reps_per_cell, workers, [&](std::uint64_t begin, std::uint64_t end, unsigned w) {
                auto& t = tallies[w];
                std::vector<char> won(own);
                for (std::uint64_t r = begin; r < end; ++r) {
                    for (std::size_t a = 0; a < own; ++a) won[a] = runners[a].winner(seed, r) == i;
                    for (std::size_t a = 0; a < own; ++a) {
                        t.wins[a] += won[a];
                        t.plus[a] += won[a] && !won[nat];
                        t.minus[a] += !won[a] && won[nat];
                    }
                }
            });
            Tally sum{std::vector<std::uint64_t>(own, 0), std::vector<std::uint64_t>(own, 0),
                      std::vector<std::uint64_t>(own, 0)};
            for (const auto& t : tallies)
                for (std::size_t a = 0; a < own; ++a) {
                    sum.wins[a] += t.wins[a];
                    sum.plus[a] += t.plus[a];
                    sum.minus[a] += t.minus[a];
                }
            for (std::size_t a = 0; a < own; ++a) {
                if (a == nat) continue;
                const double d = (static_cast<double>(sum.plus[a]) - static_cast<double>(sum.minus[a])) / R;
                const double second = static_cast<double>(sum.plus[a] + sum.minus[a]) / R;
                const double se = std::sqrt(std::max(0.0, second - d * d) / R);
                if (!(d > 0.0 && d > 3.0 * se)) continue;
                Witness wit;
                wit.agent = i;
                wit.opponent = i == 0 ? 1 : 0;
                wit.profile_index = idx;
                wit.profile_index[i] = a;
                wit.deviation = spaces[i][a];
                wit.p_deviation = static_cast<double>(sum.wins[a]) / R;
                wit.p_natural = static_cast<double>(sum.wins[nat]) / R;
                wit.se = se;
                cert.witnesses.push_back(std::move(wit));
            }
        });
    }
    cert.verdict = cert.witnesses.empty() ? Verdict::IC : Verdict::NotIC;
    return cert;
}

/// A design under comparison: score function plus its IC certificate.
struct Design {
    std::string id;
    ScoreFunction score;
    std::optional<ICCertificate> certificate;
};

struct PowerReport {
    std::size_t tau = 0;
    double p_tau_D = 0.0;
    double p_tau_Dprime = 0.0;
    double se_diff = 0.0;  // MC only
    bool more_powerful = false;
    CertMethod method = CertMethod::Analytic;
};

namespace detail {

/// Asymptotic P(agent i beats agent j) for two agents: cataloged closed form
/// when available, otherwise the delta-method law of the identifying statistic.
inline double two_agent_win_prob(const OutcomeModel& model, const ScoreFunction& score, const ActionProfile& profile,
                                 double k, std::size_t i) {
    try {
        return analytic_win_prob(model, score, profile, k)[i];
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoClosedForm) throw;
    }
    const auto law = score_law(model, score, profile, k);
    const std::size_t j = 1 - i;
    return normal_cdf(std::sqrt(k) * standardized(law.mean[i] - law.mean[j], pairwise_variance(law.cov, i, j)));
}

}  // namespace detail

/// Compares the chance that the highest-quality agent wins at the natural
/// profile under D and D'. Both designs must carry an IC certificate.
inline PowerReport power_compare(const Design& d, const Design& dprime, const OutcomeModel& model,
                                 const ActionProfile& natural, std::size_t k, CertMethod method,
                                 std::uint64_t reps = 100000, std::uint64_t seed = 1, unsigned threads = 1) {
    for (const Design* des : {&d, &dprime})
        if (!des->certificate || des->certificate->verdict != Verdict::IC)
            fail(ErrorCode::NotCertified, "design '" + des->id + "' has no IC certificate");
    const auto chi = performance_vector(model, natural);
    PowerReport rep;
    rep.method = method;
    rep.tau = static_cast<std::size_t>(std::max_element(chi.begin(), chi.end()) - chi.begin());

    if (method == CertMethod::Analytic) {
        if (natural.size() != 2) fail(ErrorCode::NoClosedForm, "analytic power compares two agents");
        const double kk = model.family() == Family::PoissonInterferenceFig2 ? static_cast<double>(k) / 2.0
                                                                            : static_cast<double>(k);
        rep.p_tau_D = detail::two_agent_win_prob(model, d.score, natural, kk, rep.tau);
        rep.p_tau_Dprime = detail::two_agent_win_prob(model, dprime.score, natural, kk, rep.tau);
        rep.more_powerful = rep.p_tau_Dprime >= rep.p_tau_D;
        return rep;
    }

    Scenario base;
    base.model = model;
    base.n = natural.size();
    base.m = k * base.n;
    base.score = d.score;
    Scenario alt = base;
    alt.score = dprime.score;
    const GameRunner rd(base, {natural});
    const GameRunner ra(alt, {natural});
    const unsigned workers = resolved_threads(threads);
    struct Tally {
        std::uint64_t wd = 0, wa = 0, plus = 0, minus = 0;
    };
    std::vector<Tally> tallies(workers);
    parallel_reps(reps, workers, [&](std::uint64_t begin, std::uint64_t end, unsigned w) {
        auto& t = tallies[w];
        for (std::uint64_t r = begin; r < end; ++r) {
            const bool a = rd.winner(seed, r) == rep.tau;
            const bool b = ra.winner(seed, r) == rep.tau;
            t.wd += a;
            t.wa += b;
            t.plus += b && !a;
            t.minus += a && !b;
        }
    });
    Tally s;
    for (const auto& t : tallies) {
        s.wd += t.wd;
        s.wa += t.wa;
        s.plus += t.plus;
        s.minus += t.minus;
    }
    const double R = static_cast<double>(reps);
    rep.p_tau_D = static_cast<double>(s.wd) / R;
    rep.p_tau_Dprime = static_cast<double>(s.wa) / R;
    const double diff = rep.p_tau_Dprime - rep.p_tau_D;
    rep.se_diff = std::sqrt(std::max(0.0, static_cast<double>(s.plus + s.minus) / R - diff * diff) / R);
    rep.more_powerful = diff >= -3.0 * rep.se_diff;
    return rep;
}

struct StudyRow {
    std::string scenario_id;
    std::size_t k = 0;
    std::string transform;
    std::size_t agent = 0;  // 0-based
    double p_hat = 0.0;
    double se = 0.0;
    std::uint64_t reps = 0;
    std::uint64_t seed = 0;
};

/// Two-agent multi-block Poisson study: rates[agent][block], summed
/// transformed block scores, one row per (k, transform, agent).
inline std::vector<StudyRow> run_table2_study(const std::vector<std::vector<double>>& rates,
                                              const std::vector<std::size_t>& k_list,
                                              const std::vector<Transform>& transforms, std::uint64_t reps,
                                              std::uint64_t seed, unsigned threads = 1,
                                              const std::string& scenario_id = "table2") {
    if (rates.size() != 2) fail(ErrorCode::InvalidDimensions, "the block study has two agents");
    const std::size_t blocks = rates[0].size();
    if (blocks == 0 || rates[1].size() != blocks) fail(ErrorCode::InvalidDimensions, "ragged per-block rates");

    std::vector<ActionProfile> per_block(blocks);
    for (std::size_t b = 0; b < blocks; ++b) per_block[b].actions = {Action{rates[0][b]}, Action{rates[1][b]}};

    std::vector<StudyRow> rows;
    for (std::size_t k : k_list) {
        for (const auto& t : transforms) {
            Scenario s;
            s.id = scenario_id;
            s.model = OutcomeModel(Family::PoissonIID);
            s.score = ScoreFunction{Statistic::SampleMeanPerAgent, t};
            s.n = 2;
            s.blocks = blocks;
            s.m = k * 2 * blocks;
            s.aggregation = Aggregation::SummedScores;
            const auto est = estimate_win_prob(s, per_block, reps, seed, threads);
            for (std::size_t i = 0; i < 2; ++i)
                rows.push_back({scenario_id, k, t.name(), i, est.p_hat[i], est.se[i], reps, seed});
        }
    }
    return rows;
}

}  // namespace icdesign
