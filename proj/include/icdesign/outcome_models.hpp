#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace icdesign {

enum class Family {
    NormalMeanVar,
    NormalCurved,
    PoissonIID,
    PoissonInterferenceFig1,
    PoissonInterferenceFig2,
};

constexpr std::string_view family_name(Family f) {
    switch (f) {
        case Family::NormalMeanVar: return "normal_mean_var";
        case Family::NormalCurved: return "normal_curved";
        case Family::PoissonIID: return "poisson";
        case Family::PoissonInterferenceFig1: return "poisson_interference_fig1";
        case Family::PoissonInterferenceFig2: return "poisson_interference_fig2";
    }
    return "unknown";
}

inline std::optional<Family> parse_family(std::string_view name) {
    for (Family f : {Family::NormalMeanVar, Family::NormalCurved, Family::PoissonIID,
                     Family::PoissonInterferenceFig1, Family::PoissonInterferenceFig2})
        if (family_name(f) == name) return f;
    return std::nullopt;
}

constexpr bool is_interference(Family f) {
    return f == Family::PoissonInterferenceFig1 || f == Family::PoissonInterferenceFig2;
}

constexpr bool is_poisson(Family f) { return f != Family::NormalMeanVar && f != Family::NormalCurved; }

/// Number of real parameters an action of this family carries.
constexpr std::size_t param_count(Family f) {
    switch (f) {
        case Family::NormalMeanVar: return 2;  // (mu, sigma2)
        case Family::NormalCurved: return 1;   // (mu), sigma2 = mu^4 implied
        case Family::PoissonIID: return 1;     // (lambda)
        case Family::PoissonInterferenceFig1:
        case Family::PoissonInterferenceFig2: return 2;  // (lam, lamc)
    }
    return 0;
}

/// An agent's action: the parameter vector of the treatment version it plays.
struct Action {
    std::vector<double> params;

    Action() = default;
    Action(std::initializer_list<double> p) : params(p) {}
    explicit Action(std::vector<double> p) : params(std::move(p)) {}

    double operator[](std::size_t i) const { return params[i]; }
    std::size_t size() const { return params.size(); }
    friend bool operator==(const Action&, const Action&) = default;
};

/// Throws FamilyMismatch on wrong arity and InvalidParameter on a parameter
/// outside the family's domain.
inline void validate_action(Family family, const Action& a) {
    if (a.size() != param_count(family))
        fail(ErrorCode::FamilyMismatch, std::string(family_name(family)) + " actions take " +
                                            std::to_string(param_count(family)) + " parameter(s), got " +
                                            std::to_string(a.size()));
    for (double v : a.params)
        if (!std::isfinite(v)) fail(ErrorCode::InvalidParameter, "action parameters must be finite");
    switch (family) {
        case Family::NormalMeanVar:
            if (!(a[1] > 0.0)) fail(ErrorCode::InvalidParameter, "sigma2 must be > 0");
            break;
        case Family::NormalCurved:
            break;
        case Family::PoissonIID:
            if (!(a[0] > 0.0)) fail(ErrorCode::InvalidParameter, "lambda must be > 0");
            break;
        case Family::PoissonInterferenceFig1:
        case Family::PoissonInterferenceFig2:
            if (a[0] < 0.0 || a[1] < 0.0 || !(a[0] + a[1] > 0.0))
                fail(ErrorCode::InvalidParameter, "interference rates need lam >= 0, lamc >= 0, lam + lamc > 0");
            break;
    }
}

/// Performance of an action: the mean outcome of a unit when every agent
/// plays that same action.
inline double performance(Family family, const Action& a) {
    validate_action(family, a);
    switch (family) {
        case Family::NormalMeanVar:
        case Family::NormalCurved:
        case Family::PoissonIID: return a[0];
        case Family::PoissonInterferenceFig1:
        case Family::PoissonInterferenceFig2: return a[0] + a[1];
    }
    return 0.0;
}

/// Parametric outcome family plus its interference discount.
class OutcomeModel {
public:
    explicit OutcomeModel(Family family, std::optional<double> gamma = std::nullopt)
        : family_(family), gamma_(gamma) {
        if (is_interference(family)) {
            if (!gamma) fail(ErrorCode::MissingParameter, "interference families require gamma");
            if (!(*gamma >= 0.0)) fail(ErrorCode::InvalidParameter, "gamma must be >= 0");
            if (!(*gamma < 1.0)) fail(ErrorCode::InvalidParameter, "gamma must be < 1");
        } else if (gamma) {
            fail(ErrorCode::InvalidParameter,
                 std::string("gamma is not a parameter of ") + std::string(family_name(family)));
        }
    }

    Family family() const { return family_; }
    std::optional<double> gamma() const { return gamma_; }
    double gamma_or_zero() const { return gamma_.value_or(0.0); }

    friend bool operator==(const OutcomeModel&, const OutcomeModel&) = default;

private:
    Family family_;
    std::optional<double> gamma_;
};

inline double performance(const OutcomeModel& model, const Action& a) { return performance(model.family(), a); }

/// Finite discretization of one agent's action space.
class ActionSpace {
public:
    ActionSpace(Family family, std::vector<Action> grid) : family_(family), grid_(std::move(grid)) {
        if (grid_.empty()) fail(ErrorCode::InvalidDimensions, "action grid must be non-empty");
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double chi = performance(family_, grid_[i]);
            if (chi > best) {  // strict: ties keep the lowest index
                best = chi;
                natural_ = i;
            }
        }
    }

    Family family() const { return family_; }
    const std::vector<Action>& grid() const { return grid_; }
    std::size_t size() const { return grid_.size(); }
    const Action& operator[](std::size_t i) const { return grid_[i]; }
    std::size_t natural_index() const { return natural_; }
    const Action& natural() const { return grid_[natural_]; }

private:
    Family family_;
    std::vector<Action> grid_;
    std::size_t natural_ = 0;
};

struct ActionProfile {
    std::vector<Action> actions;

    std::size_t size() const { return actions.size(); }
    const Action& operator[](std::size_t i) const { return actions[i]; }
    friend bool operator==(const ActionProfile&, const ActionProfile&) = default;
};

/// Unit-to-agent assignment. `block[u]` is the block (or, for the two-group
/// interference design, the group) unit u belongs to. Agent and block indices
/// are 0-based.
struct Assignment {
    std::vector<std::uint32_t> z;
    std::vector<std::uint32_t> block;
    std::size_t agents = 0;
    std::size_t blocks = 1;

    std::size_t units() const { return z.size(); }
    std::size_t units_per_cell() const { return z.size() / (agents * blocks); }
    std::size_t cell(std::size_t u) const { return block[u] * agents + z[u]; }
};

/// Complete randomization within contiguous blocks: each agent receives
/// exactly m / (n * blocks) units of every block, uniformly over such splits.
template <class Rng>
Assignment sample_assignment(std::size_t m, std::size_t n, std::size_t blocks, Rng& rng) {
    if (n == 0 || blocks == 0 || m == 0 || m % (n * blocks) != 0)
        fail(ErrorCode::InvalidDimensions, "m=" + std::to_string(m) + " is not divisible by n*blocks=" +
                                               std::to_string(n * blocks));
    const std::size_t per_block = m / blocks;
    const std::size_t k = per_block / n;
    Assignment out;
    out.agents = n;
    out.blocks = blocks;
    out.z.resize(m);
    out.block.resize(m);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t first = b * per_block;
        for (std::size_t u = 0; u < per_block; ++u) {
            out.z[first + u] = static_cast<std::uint32_t>(u / k);
            out.block[first + u] = static_cast<std::uint32_t>(b);
        }
        // Fisher-Yates with an unbiased bounded draw.
        for (std::size_t i = per_block; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(out.z[first + i - 1], out.z[first + pick(rng)]);
        }
    }
    return out;
}

/// Distribution of one unit's outcome in a given (block, agent) cell.
struct UnitLaw {
    enum class Kind { Normal, Poisson } kind = Kind::Poisson;
    double mean = 0.0;
    double variance = 0.0;

    friend bool operator==(const UnitLaw&, const UnitLaw&) = default;
};

/// Number of assignment blocks the model's layout needs for `scenario_blocks`
/// scenario blocks. The two-group interference design splits units into two
/// groups, each randomized between the two agents.
inline std::size_t layout_blocks(const OutcomeModel& model, std::size_t scenario_blocks) {
    return model.family() == Family::PoissonInterferenceFig2 ? 2 : scenario_blocks;
}

/// The four test-set rates of the two-group design in cell order
/// (G11, G12, G21, G22) for actions A1 = (lam1, lamc1), A2 = (lam2, lamc2).
inline std::vector<double> two_group_cell_rates(double gamma, const Action& a1, const Action& a2) {
    const double lam1 = a1[0], lamc1 = a1[1], lam2 = a2[0], lamc2 = a2[1];
    return {lam1 + gamma * lamc2, lamc2 + gamma * lam1, lamc1 + gamma * lam2, lam2 + gamma * lamc1};
}

/// Per-cell unit laws, indexed block * n + agent. `per_block[b]` is the
/// action profile played in block b (one profile for interference models).
inline std::vector<UnitLaw> cell_laws(const OutcomeModel& model, std::span<const ActionProfile> per_block) {
    const Family fam = model.family();
    if (per_block.empty()) fail(ErrorCode::InvalidDimensions, "no action profile supplied");
    for (const auto& p : per_block)
        for (const auto& a : p.actions) validate_action(fam, a);

    std::vector<UnitLaw> laws;
    if (is_interference(fam)) {
        if (per_block.size() != 1)
            fail(ErrorCode::InvalidDimensions, "interference models take a single block");
        const ActionProfile& p = per_block[0];
        if (p.size() != 2)
            fail(ErrorCode::UnsupportedAgentCount, "interference models require exactly 2 agents, got " +
                                                       std::to_string(p.size()));
        const double g = model.gamma_or_zero();
        std::vector<double> rates;
        if (fam == Family::PoissonInterferenceFig1)
            rates = {p[0][0] + g * p[1][1], p[1][0] + g * p[0][1]};
        else
            rates = two_group_cell_rates(g, p[0], p[1]);
        for (double r : rates) laws.push_back({UnitLaw::Kind::Poisson, r, r});
        return laws;
    }

    const std::size_t n = per_block[0].size();
    for (const auto& p : per_block) {
        if (p.size() != n) fail(ErrorCode::InvalidDimensions, "per-block profiles differ in agent count");
        for (const auto& a : p.actions) {
            switch (fam) {
                case Family::NormalMeanVar: laws.push_back({UnitLaw::Kind::Normal, a[0], a[1]}); break;
                case Family::NormalCurved: {
                    const double mu2 = a[0] * a[0];
                    laws.push_back({UnitLaw::Kind::Normal, a[0], mu2 * mu2});
                    break;
                }
                default: laws.push_back({UnitLaw::Kind::Poisson, a[0], a[0]}); break;
            }
        }
    }
    return laws;
}

template <class Rng>
double draw_unit(const UnitLaw& law, Rng& rng) {
    if (law.kind == UnitLaw::Kind::Normal) {
        std::normal_distribution<double> z(0.0, 1.0);
        return law.mean + std::sqrt(law.variance) * z(rng);
    }
    if (law.mean <= 0.0) return 0.0;
    std::poisson_distribution<long long> pois(law.mean);
    return static_cast<double>(pois(rng));
}

/// Exact draw of the sample mean of k iid units with the given law, using
/// closure of the Normal and Poisson families under summation.
template <class Rng>
double draw_cell_mean(const UnitLaw& law, std::size_t k, Rng& rng) {
    const double kk = static_cast<double>(k);
    if (law.kind == UnitLaw::Kind::Normal) {
        std::normal_distribution<double> z(0.0, 1.0);
        return law.mean + std::sqrt(law.variance / kk) * z(rng);
    }
    if (law.mean <= 0.0) return 0.0;
    std::poisson_distribution<long long> pois(law.mean * kk);
    return static_cast<double>(pois(rng)) / kk;
}

struct ObservedOutcomes {
    std::vector<double> y;
    Assignment assignment;

    /// Sample mean of each cell (block * agents + agent).
    std::vector<double> cell_means() const {
        const std::size_t cells = assignment.agents * assignment.blocks;
        std::vector<double> sum(cells, 0.0);
        std::vector<std::size_t> count(cells, 0);
        for (std::size_t u = 0; u < y.size(); ++u) {
            sum[assignment.cell(u)] += y[u];
            ++count[assignment.cell(u)];
        }
        for (std::size_t c = 0; c < cells; ++c) {
            if (count[c] == 0) fail(ErrorCode::InvalidDimensions, "empty test set in cell " + std::to_string(c));
            sum[c] /= static_cast<double>(count[c]);
        }
        return sum;
    }
};

/// Independent per-unit draws given a realized assignment.
template <class Rng>
ObservedOutcomes sample_outcomes(const OutcomeModel& model, const Assignment& assignment,
                                 std::span<const ActionProfile> per_block, Rng& rng) {
    if (is_interference(model.family()) && per_block.size() == 1 && per_block[0].size() != 2)
        fail(ErrorCode::UnsupportedAgentCount, "interference models require exactly 2 agents");
    const auto laws = cell_laws(model, per_block);
    const std::size_t expected_cells = assignment.agents * assignment.blocks;
    if (laws.size() != expected_cells)
        fail(ErrorCode::InvalidDimensions, "assignment has " + std::to_string(expected_cells) +
                                               " cells but the profile defines " + std::to_string(laws.size()));
    ObservedOutcomes out;
    out.assignment = assignment;
    out.y.resize(assignment.units());
    for (std::size_t u = 0; u < assignment.units(); ++u) out.y[u] = draw_unit(laws[assignment.cell(u)], rng);
    return out;
}

template <class Rng>
ObservedOutcomes sample_outcomes(const OutcomeModel& model, const Assignment& assignment,
                                 const ActionProfile& profile, Rng& rng) {
    if (is_interference(model.family())) {
        if (profile.size() != 2)
            fail(ErrorCode::UnsupportedAgentCount, "interference models require exactly 2 agents, got " +
                                                       std::to_string(profile.size()));
        return sample_outcomes(model, assignment, std::span<const ActionProfile>(&profile, 1), rng);
    }
    std::vector<ActionProfile> per_block(assignment.blocks, profile);
    return sample_outcomes(model, assignment, std::span<const ActionProfile>(per_block), rng);
}

}  // namespace icdesign
