#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "interference.hpp"
#include "numerics.hpp"
#include "outcome_models.hpp"
#include "scoring.hpp"

namespace icdesign {

/// Asymptotic law of the score vector: sqrt(k) (phi - mean) -> N(0, cov).
struct AsymptoticScoreLaw {
    std::vector<double> mean;
    Matrix cov;
    double k = 0.0;
};

/// Variance of one unit's outcome under its own action, no interference.
inline double unit_variance(Family family, const Action& a) {
    validate_action(family, a);
    switch (family) {
        case Family::NormalMeanVar: return a[1];
        case Family::NormalCurved: return a[0] * a[0] * a[0] * a[0];
        case Family::PoissonIID: return a[0];
        default: fail(ErrorCode::AssumptionViolated, "interference families have no per-agent unit variance");
    }
}

/// Covariance of the identifying statistic at a profile.
inline Matrix identifying_covariance(const OutcomeModel& model, const ActionProfile& profile) {
    switch (model.family()) {
        case Family::PoissonInterferenceFig1:
            fail(ErrorCode::NoIdentifyingStatistic,
                 "the single-test-set interference design has no identifying statistic: several action "
                 "profiles produce identically distributed outcomes");
        case Family::PoissonInterferenceFig2:
            return statistic_covariance(build_algebra(model.gamma_or_zero()), profile);
        default: break;
    }
    std::vector<double> d;
    d.reserve(profile.size());
    for (const auto& a : profile.actions) d.push_back(unit_variance(model.family(), a));
    return Matrix::diagonal(d);
}

/// Delta-method covariance J Sigma J^T with J = diag(f'(chi_i)).
inline Matrix delta_covariance(const Matrix& sigma, const Transform& transform, const std::vector<double>& chi) {
    if (sigma.rows() != chi.size() || sigma.cols() != chi.size())
        fail(ErrorCode::InvalidDimensions, "covariance and performance vector sizes differ");
    std::vector<double> jac(chi.size());
    for (std::size_t i = 0; i < chi.size(); ++i) {
        const auto d = transform.derivative(chi[i]);
        if (!d || !std::isfinite(*d))
            fail(ErrorCode::SingularTransform,
                 transform.name() + " is not differentiable at chi=" + std::to_string(chi[i]));
        jac[i] = *d;
    }
    Matrix v(chi.size(), chi.size());
    for (std::size_t i = 0; i < chi.size(); ++i)
        for (std::size_t j = 0; j < chi.size(); ++j) v(i, j) = jac[i] * sigma(i, j) * jac[j];
    return v;
}

/// Variance of phi_i - phi_j: v_ii + v_jj - v_ij - v_ji.
inline double pairwise_variance(const Matrix& v, std::size_t i, std::size_t j) {
    if (i == j) fail(ErrorCode::InvalidPair, "pairwise variance needs two distinct agents");
    if (i >= v.rows() || j >= v.rows()) fail(ErrorCode::InvalidDimensions, "agent index out of range");
    return v(i, i) + v(j, j) - v(i, j) - v(j, i);
}

inline std::vector<double> performance_vector(const OutcomeModel& model, const ActionProfile& profile) {
    std::vector<double> chi;
    chi.reserve(profile.size());
    for (const auto& a : profile.actions) chi.push_back(performance(model, a));
    return chi;
}

inline AsymptoticScoreLaw score_law(const OutcomeModel& model, const ScoreFunction& score_fn,
                                    const ActionProfile& profile, double k) {
    AsymptoticScoreLaw law;
    const auto chi = performance_vector(model, profile);
    for (double c : chi) law.mean.push_back(score_fn.transform(c));
    law.cov = delta_covariance(identifying_covariance(model, profile), score_fn.transform, chi);
    law.k = k;
    return law;
}

/// Standardized margin of agent 1 over agent 2 for the cataloged two-agent
/// closed forms; P1 = Phi(z). Throws NoClosedForm for anything else.
inline double analytic_win_z(const OutcomeModel& model, const ScoreFunction& score_fn, const ActionProfile& profile,
                             double k) {
    if (profile.size() != 2) fail(ErrorCode::NoClosedForm, "closed forms cover two agents only");
    if (score_fn.statistic != Statistic::SampleMeanPerAgent)
        fail(ErrorCode::NoClosedForm, "closed forms use per-agent sample means");
    const auto kind = score_fn.transform.kind();
    const auto& a1 = profile[0];
    const auto& a2 = profile[1];
    for (const auto& a : profile.actions) validate_action(model.family(), a);
    const double g = model.gamma_or_zero();
    switch (model.family()) {
        case Family::NormalMeanVar:
            if (kind == TransformKind::Identity) return std::sqrt(k) * (a1[0] - a2[0]) / std::sqrt(a1[1] + a2[1]);
            break;
        case Family::NormalCurved:
            if (kind == TransformKind::Identity) {
                const double v = std::pow(a1[0], 4) + std::pow(a2[0], 4);
                return std::sqrt(k) * (a1[0] - a2[0]) / std::sqrt(v);
            }
            break;
        case Family::PoissonIID:
            if (kind == TransformKind::Identity) return std::sqrt(k) * (a1[0] - a2[0]) / std::sqrt(a1[0] + a2[0]);
            if (kind == TransformKind::ScaledSqrt) return std::sqrt(2.0 * k) * (std::sqrt(a1[0]) - std::sqrt(a2[0]));
            break;
        case Family::PoissonInterferenceFig1: {
            // test set 1 sees lam1 + g lamc2, test set 2 sees lam2 + g lamc1
            const double r1 = a1[0] + g * a2[1];
            const double r2 = a2[0] + g * a1[1];
            if (kind == TransformKind::Identity)
                return std::sqrt(k) * ((a1[0] - g * a1[1]) - (a2[0] - g * a2[1])) / std::sqrt(r1 + r2);
            if (kind == TransformKind::ScaledSqrt) return std::sqrt(2.0 * k) * (std::sqrt(r1) - std::sqrt(r2));
            break;
        }
        case Family::PoissonInterferenceFig2: break;
    }
    fail(ErrorCode::NoClosedForm, std::string(family_name(model.family())) + " with " +
                                      score_fn.transform.name() + " scoring has no cataloged closed form");
}

/// (P1, P2) with P1 + P2 = 1.
inline std::array<double, 2> analytic_win_prob(const OutcomeModel& model, const ScoreFunction& score_fn,
                                               const ActionProfile& profile, double k) {
    const double z = analytic_win_z(model, score_fn, profile, k);
    // evaluate the smaller tail directly, the larger as its complement
    if (z >= 0.0) {
        const double p2 = normal_cdf(-z);
        return {1.0 - p2, p2};
    }
    const double p1 = normal_cdf(z);
    return {p1, 1.0 - p1};
}

enum class Verdict { IC, NotIC };
enum class CertMethod { Analytic, MonteCarlo };

constexpr std::string_view verdict_name(Verdict v) { return v == Verdict::IC ? "IC" : "NotIC"; }
constexpr std::string_view method_name(CertMethod m) { return m == CertMethod::Analytic ? "analytic" : "mc"; }

/// One profitable deviation from the natural action.
struct Witness {
    std::size_t agent = 0;
    std::size_t opponent = 0;                 // agent j the comparison is against
    std::vector<std::size_t> profile_index;   // grid index per agent; own slot holds the deviation
    Action deviation;
    double p_deviation = 0.0;
    double p_natural = 0.0;
    double se = 0.0;                          // MC only: SE of the paired difference
};

struct ICCertificate {
    std::string design_id;
    Verdict verdict = Verdict::IC;
    std::vector<Witness> witnesses;
    CertMethod method = CertMethod::Analytic;
    std::vector<std::size_t> grid_sizes;
    std::size_t cells_checked = 0;
};

namespace detail {

/// Calls visit(profile_index) for every combination of the other agents' grid
/// points, with the own slot left at 0. Iteration order is lexicographic.
template <class Visit>
void for_each_opponent_profile(const std::vector<ActionSpace>& spaces, std::size_t own, Visit&& visit) {
    std::vector<std::size_t> others;
    for (std::size_t a = 0; a < spaces.size(); ++a)
        if (a != own) others.push_back(a);
    std::vector<std::size_t> idx(spaces.size(), 0);
    while (true) {
        visit(idx);
        bool carry = true;
        for (std::size_t p = others.size(); p > 0 && carry; --p) {
            const std::size_t a = others[p - 1];
            if (++idx[a] < spaces[a].size())
                carry = false;
            else
                idx[a] = 0;
        }
        if (carry) return;
    }
}

inline ActionProfile profile_at(const std::vector<ActionSpace>& spaces, const std::vector<std::size_t>& idx) {
    ActionProfile p;
    for (std::size_t a = 0; a < spaces.size(); ++a) p.actions.push_back(spaces[a][idx[a]]);
    return p;
}

inline void check_spaces(const OutcomeModel& model, const std::vector<ActionSpace>& spaces) {
    if (spaces.size() < 2) fail(ErrorCode::InvalidDimensions, "need at least two agents");
    for (const auto& s : spaces)
        if (s.family() != model.family()) fail(ErrorCode::FamilyMismatch, "action space family differs from model");
}

inline double standardized(double num, double var) {
    if (var > 0.0) return num / std::sqrt(var);
    if (num > 0.0) return std::numeric_limits<double>::infinity();
    if (num < 0.0) return -std::numeric_limits<double>::infinity();
    return 0.0;
}

}  // namespace detail

/// Grid certification through the identifying statistic: for every agent i,
/// opponent profile and rival j, agent i's asymptotic chance of outscoring j,
/// Phi(sqrt(k) (f(chi_i) - f(chi_j)) / sqrt(v^ij)), must peak at the natural
/// action. `k` is the normalization of the identifying statistic (units per
/// agent for sample means, units per test set for the two-group design).
inline ICCertificate check_ic_theorem1(const OutcomeModel& model, const ScoreFunction& score_fn,
                                       const std::vector<ActionSpace>& spaces, double k, double margin = 1e-9,
                                       const std::string& design_id = {}) {
    detail::check_spaces(model, spaces);
    if (model.family() == Family::PoissonInterferenceFig1)
        identifying_covariance(model, ActionProfile{{spaces[0][0], spaces[1][0]}});  // throws
    if (score_fn.statistic == Statistic::InterferenceT && model.family() != Family::PoissonInterferenceFig2)
        fail(ErrorCode::InvalidParameter, "the interference statistic requires the two-group design");

    ICCertificate cert;
    cert.design_id = design_id;
    cert.method = CertMethod::Analytic;
    for (const auto& s : spaces) cert.grid_sizes.push_back(s.size());
    const std::size_t n = spaces.size();

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t nat = spaces[i].natural_index();
        detail::for_each_opponent_profile(spaces, i, [&](std::vector<std::size_t> idx) {
            std::vector<std::vector<double>> z(spaces[i].size(), std::vector<double>(n, 0.0));
            for (std::size_t a = 0; a < spaces[i].size(); ++a) {
                idx[i] = a;
                const auto profile = detail::profile_at(spaces, idx);
                const auto law = score_law(model, score_fn, profile, k);
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    z[a][j] = detail::standardized(law.mean[i] - law.mean[j], pairwise_variance(law.cov, i, j));
                }
                ++cert.cells_checked;
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                for (std::size_t a = 0; a < spaces[i].size(); ++a) {
                    if (a == nat || !(z[a][j] > z[nat][j] + margin)) continue;
                    Witness w;
                    w.agent = i;
                    w.opponent = j;
                    w.profile_index = idx;
                    w.profile_index[i] = a;
                    w.deviation = spaces[i][a];
                    w.p_deviation = normal_cdf(std::sqrt(k) * z[a][j]);
                    w.p_natural = normal_cdf(std::sqrt(k) * z[nat][j]);
                    cert.witnesses.push_back(std::move(w));
                }
            }
        });
    }
    cert.verdict = cert.witnesses.empty() ? Verdict::IC : Verdict::NotIC;
    return cert;
}

/// Grid best-response search on the cataloged two-agent closed forms. Works
/// for the single-test-set interference design, where no identifying
/// statistic exists.
inline ICCertificate check_ic_closed_form(const OutcomeModel& model, const ScoreFunction& score_fn,
                                          const std::vector<ActionSpace>& spaces, double k, double margin = 1e-9,
                                          const std::string& design_id = {}) {
    detail::check_spaces(model, spaces);
    if (spaces.size() != 2) fail(ErrorCode::NoClosedForm, "closed forms cover two agents only");
    ICCertificate cert;
    cert.design_id = design_id;
    cert.method = CertMethod::Analytic;
    for (const auto& s : spaces) cert.grid_sizes.push_back(s.size());

    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t j = 1 - i;
        const std::size_t nat = spaces[i].natural_index();
        for (std::size_t b = 0; b < spaces[j].size(); ++b) {
            std::vector<double> z(spaces[i].size());
            std::vector<std::size_t> idx(2);
            idx[j] = b;
            for (std::size_t a = 0; a < spaces[i].size(); ++a) {
                idx[i] = a;
                const double z1 = analytic_win_z(model, score_fn, detail::profile_at(spaces, idx), k);
                z[a] = i == 0 ? z1 : -z1;
                ++cert.cells_checked;
            }
            for (std::size_t a = 0; a < spaces[i].size(); ++a) {
                if (a == nat || !(z[a] > z[nat] + margin)) continue;
                Witness w;
                w.agent = i;
                w.opponent = j;
                w.profile_index = idx;
                w.profile_index[i] = a;
                w.deviation = spaces[i][a];
                w.p_deviation = normal_cdf(z[a]);
                w.p_natural = normal_cdf(z[nat]);
                cert.witnesses.push_back(std::move(w));
            }
        }
    }
    cert.verdict = cert.witnesses.empty() ? Verdict::IC : Verdict::NotIC;
    return cert;
}

struct Theorem2Conditions {
    bool is_composed = false;
    bool variance_const = false;
    bool monotone = false;
    friend bool operator==(const Theorem2Conditions&, const Theorem2Conditions&) = default;
};

enum class Theorem2Verdict { IC, Inconclusive };

struct Theorem2Result {
    Theorem2Conditions conditions;
    Theorem2Verdict verdict = Theorem2Verdict::Inconclusive;
    double variance_ratio = 1.0;  // max / min transformed unit variance over all grid actions
};

/// Sufficient conditions without interference: the score is f(T_i), the
/// transformed variance f'(chi)^2 sigma^2 is the same for every grid action,
/// and f preserves each agent's argmax of chi.
inline Theorem2Result check_ic_theorem2(const OutcomeModel& model, const ScoreFunction& score_fn,
                                        const std::vector<ActionSpace>& spaces, double /*k*/,
                                        double var_tolerance) {
    if (is_interference(model.family()))
        fail(ErrorCode::AssumptionViolated, "variance-stabilization conditions require no interference");
    detail::check_spaces(model, spaces);

    Theorem2Result r;
    r.conditions.is_composed = score_fn.statistic == Statistic::SampleMeanPerAgent;

    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    bool monotone = true;
    for (const auto& space : spaces) {
        std::size_t best = 0;
        double best_f = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < space.size(); ++a) {
            const double chi = performance(model, space[a]);
            const auto d = score_fn.transform.derivative(chi);
            if (!d) fail(ErrorCode::SingularTransform, score_fn.transform.name() + " has no derivative at " +
                                                            std::to_string(chi));
            const double var = (*d) * (*d) * unit_variance(model.family(), space[a]);
            lo = std::min(lo, var);
            hi = std::max(hi, var);
            const double f = score_fn.transform(chi);
            if (f > best_f) {
                best_f = f;
                best = a;
            }
        }
        if (best != space.natural_index()) monotone = false;
    }
    r.variance_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    r.conditions.variance_const = r.variance_ratio <= 1.0 + var_tolerance;
    r.conditions.monotone = monotone;
    r.verdict = (r.conditions.is_composed && r.conditions.variance_const && r.conditions.monotone)
                    ? Theorem2Verdict::IC
                    : Theorem2Verdict::Inconclusive;
    return r;
}

struct ConvexityFlags {
    bool nu_convex = false;
    bool inv_sqrt_convex = false;
    bool sigma2_convex = false;
};

/// Variance-stabilizing transform nu(y) = int_{lo}^{y} sigma^2(chi^-1(z))^{-1/2} dz
/// tabulated on knots over [lo, hi].
struct StabilizedTransform {
    Transform base;
    std::vector<double> z;        // knot abscissae (performance values)
    std::vector<double> sigma2;   // sigma^2(chi^-1(z)) at the knots
    ConvexityFlags convexity;
    bool sigma2_monotone = false; // sigma^2 nondecreasing in chi
    double quad_error = 0.0;      // summed quadrature error estimate
};

namespace detail {

inline bool convex_on(const std::vector<double>& x, const std::vector<double>& y, double tol) {
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        const double left = (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        const double right = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        const double second = 2.0 * (right - left) / (x[i + 1] - x[i - 1]);
        if (second < -tol) return false;
    }
    return true;
}

}  // namespace detail

/// Builds nu by adaptive Simpson between consecutive knots. Knots are `knots`
/// evenly spaced points over [lo, hi] merged with `extra_knots` inside it.
inline StabilizedTransform build_stabilizer(const std::function<double(double)>& sigma2_at_chi, double lo, double hi,
                                            double quad_tol = 1e-10, std::size_t knots = 1025,
                                            std::vector<double> extra_knots = {},
                                            double convexity_tol = 1e-8) {
    if (!(hi > lo)) fail(ErrorCode::InvalidParameter, "stabilizer range needs lo < hi");
    if (knots < 2) knots = 2;
    std::vector<double> z;
    for (std::size_t i = 0; i < knots; ++i)
        z.push_back(i + 1 == knots ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(knots - 1));
    for (double e : extra_knots)
        if (e > lo && e < hi) z.push_back(e);
    std::sort(z.begin(), z.end());
    z.erase(std::unique(z.begin(), z.end(), [](double a, double b) { return std::abs(a - b) <= 1e-14 * std::max(1.0, std::abs(a)); }),
            z.end());

    StabilizedTransform st;
    st.z = z;
    st.sigma2.reserve(z.size());
    for (double v : z) {
        const double s2 = sigma2_at_chi(v);
        if (!(s2 > 0.0) || !std::isfinite(s2))
            fail(ErrorCode::InvalidVariance, "sigma^2 must be positive on the range; got " + std::to_string(s2) +
                                                 " at chi=" + std::to_string(v));
        st.sigma2.push_back(s2);
    }
    auto integrand = [&](double v) {
        const double s2 = sigma2_at_chi(v);
        if (!(s2 > 0.0)) fail(ErrorCode::InvalidVariance, "sigma^2 <= 0 at chi=" + std::to_string(v));
        return 1.0 / std::sqrt(s2);
    };

    TabulatedTable table;
    table.source = "stabilized";
    table.x = z;
    table.nu.assign(z.size(), 0.0);
    table.slope.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) table.slope[i] = 1.0 / std::sqrt(st.sigma2[i]);
    for (std::size_t i = 1; i < z.size(); ++i) {
        const double seg_tol = quad_tol * (z[i] - z[i - 1]) / (hi - lo);
        const auto q = integrate_adaptive_simpson(integrand, z[i - 1], z[i], seg_tol);
        table.nu[i] = table.nu[i - 1] + q.value;
        st.quad_error += q.error_estimate;
    }

    std::vector<double> inv_sqrt(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) inv_sqrt[i] = table.slope[i];
    st.convexity.nu_convex = detail::convex_on(z, table.nu, convexity_tol);
    st.convexity.inv_sqrt_convex = detail::convex_on(z, inv_sqrt, convexity_tol);
    st.convexity.sigma2_convex = detail::convex_on(z, st.sigma2, convexity_tol);
    st.sigma2_monotone = std::is_sorted(st.sigma2.begin(), st.sigma2.end());
    st.base = Transform(std::move(table));
    return st;
}

/// Sampled variant: sigma^2 known only at a set of actions with performances
/// `chi_of_action` (in action order, must be strictly increasing);
/// sigma^2(chi^-1(.)) is linearly interpolated between them.
inline StabilizedTransform build_stabilizer(const std::vector<double>& sigma2_of_action,
                                            const std::vector<double>& chi_of_action, double lo, double hi,
                                            double quad_tol = 1e-10, std::size_t knots = 1025) {
    if (sigma2_of_action.size() != chi_of_action.size() || chi_of_action.empty())
        fail(ErrorCode::InvalidDimensions, "sampled sigma^2 and chi must be non-empty and the same length");
    for (std::size_t i = 1; i < chi_of_action.size(); ++i)
        if (!(chi_of_action[i] > chi_of_action[i - 1]))
            fail(ErrorCode::NotInvertible, "performance is not strictly increasing over the sampled actions");
    for (double s : sigma2_of_action)
        if (!(s > 0.0)) fail(ErrorCode::InvalidVariance, "sampled sigma^2 must be positive");
    if (chi_of_action.size() == 1) {
        const double s = sigma2_of_action[0];
        return build_stabilizer([s](double) { return s; }, lo, hi, quad_tol, knots);
    }
    if (lo < chi_of_action.front() || hi > chi_of_action.back())
        fail(ErrorCode::InvalidParameter, "stabilizer range extends beyond the sampled performances");
    const auto chi = chi_of_action;
    const auto s2 = sigma2_of_action;
    auto interp = [chi, s2](double v) {
        if (v <= chi.front()) return s2.front();
        if (v >= chi.back()) return s2.back();
        const auto it = std::upper_bound(chi.begin(), chi.end(), v);
        const std::size_t i = static_cast<std::size_t>(it - chi.begin()) - 1;
        const double t = (v - chi[i]) / (chi[i + 1] - chi[i]);
        return s2[i] + t * (s2[i + 1] - s2[i]);
    };
    return build_stabilizer(interp, lo, hi, quad_tol, knots, chi_of_action);
}

/// Exact sigma^2(chi^-1(z)) for families where chi is one-to-one in a scalar
/// action: Poisson (z) and the curved Normal (z^4).
inline std::function<double(double)> variance_at_performance(Family family) {
    switch (family) {
        case Family::PoissonIID: return [](double z) { return z; };
        case Family::NormalCurved: return [](double z) { return z * z * z * z; };
        default:
            fail(ErrorCode::NotInvertible, std::string(family_name(family)) +
                                               " has no closed-form sigma^2(chi^-1(z)); sample it from a grid");
    }
}

}  // namespace icdesign
