#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "interference.hpp"
#include "outcome_models.hpp"

namespace icdesign {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

/// Monotone knot table (x_j, nu_j). With `slope` filled the table is a C1
/// cubic Hermite interpolant; otherwise it is piecewise linear. Outside the
/// knot range the value is clamped to the end knots.
struct TabulatedTable {
    std::vector<double> x;
    std::vector<double> nu;
    std::vector<double> slope;
    std::string source;

    void validate() const {
        if (x.size() < 2 || x.size() != nu.size())
            fail(ErrorCode::InvalidParameter, "tabulated transform needs >= 2 knots with matching columns");
        if (!slope.empty() && slope.size() != x.size())
            fail(ErrorCode::InvalidParameter, "tabulated slopes must match knot count");
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (!(x[i] > x[i - 1])) fail(ErrorCode::InvalidParameter, "tabulated knots must be strictly increasing in x");
            if (nu[i] < nu[i - 1]) fail(ErrorCode::InvalidParameter, "tabulated knots must be nondecreasing in nu");
        }
    }

    /// Fritsch-Carlson limiting: keeps the Hermite interpolant monotone.
    void limit_slopes() {
        if (slope.empty()) return;
        for (double& s : slope) s = std::max(s, 0.0);
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            const double delta = (nu[i + 1] - nu[i]) / (x[i + 1] - x[i]);
            if (delta == 0.0) {
                slope[i] = slope[i + 1] = 0.0;
                continue;
            }
            const double a = slope[i] / delta;
            const double b = slope[i + 1] / delta;
            const double r = a * a + b * b;
            if (r > 9.0) {
                const double t = 3.0 / std::sqrt(r);
                slope[i] = t * a * delta;
                slope[i + 1] = t * b * delta;
            }
        }
    }

    double operator()(double v) const {
        if (std::isnan(v)) return kMinusInf;
        if (v <= x.front()) return nu.front();
        if (v >= x.back()) return nu.back();
        const auto it = std::upper_bound(x.begin(), x.end(), v);
        const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
        const double h = x[i + 1] - x[i];
        const double t = (v - x[i]) / h;
        if (slope.empty()) return nu[i] + t * (nu[i + 1] - nu[i]);
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * nu[i] + (t3 - 2 * t2 + t) * h * slope[i] + (-2 * t3 + 3 * t2) * nu[i + 1] +
               (t3 - t2) * h * slope[i + 1];
    }

    /// Derivative of the interpolant; right-sided at interior knots of a
    /// linear table, exact knot slopes for Hermite tables.
    double derivative(double v) const {
        const std::size_t i =
            v >= x.back() ? x.size() - 2 : static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), v) - x.begin()) - 1;
        const double h = x[i + 1] - x[i];
        if (slope.empty()) return (nu[i + 1] - nu[i]) / h;
        const double t = (v - x[i]) / h;
        const double t2 = t * t;
        return (6 * t2 - 6 * t) * (nu[i] - nu[i + 1]) / h + (3 * t2 - 4 * t + 1) * slope[i] +
               (3 * t2 - 2 * t) * slope[i + 1];
    }
};

enum class TransformKind { Identity, Reciprocal, NegReciprocal, ScaledSqrt, Tabulated };

class Transform {
public:
    Transform() = default;
    explicit Transform(TransformKind kind) : kind_(kind) {
        if (kind == TransformKind::Tabulated)
            fail(ErrorCode::InvalidParameter, "tabulated transforms need a knot table");
    }
    explicit Transform(TabulatedTable table) : kind_(TransformKind::Tabulated) {
        table.validate();
        table.limit_slopes();
        table_ = std::make_shared<const TabulatedTable>(std::move(table));
    }

    static Transform identity() { return Transform(TransformKind::Identity); }
    static Transform reciprocal() { return Transform(TransformKind::Reciprocal); }
    static Transform neg_reciprocal() { return Transform(TransformKind::NegReciprocal); }
    static Transform scaled_sqrt() { return Transform(TransformKind::ScaledSqrt); }

    TransformKind kind() const { return kind_; }
    const TabulatedTable* table() const { return table_.get(); }

    /// f(x); out-of-domain inputs map to -inf so the agent loses the round.
    double operator()(double x) const {
        if (std::isnan(x)) return kMinusInf;
        switch (kind_) {
            case TransformKind::Identity: return x;
            case TransformKind::Reciprocal: return x == 0.0 ? kMinusInf : 1.0 / x;
            case TransformKind::NegReciprocal: return x == 0.0 ? kMinusInf : -1.0 / x;
            case TransformKind::ScaledSqrt: return x < 0.0 ? kMinusInf : 2.0 * std::sqrt(x);
            case TransformKind::Tabulated: return (*table_)(x);
        }
        return kMinusInf;
    }

    /// f'(x), or nullopt where the derivative does not exist.
    std::optional<double> derivative(double x) const {
        switch (kind_) {
            case TransformKind::Identity: return 1.0;
            case TransformKind::Reciprocal:
                if (x == 0.0) return std::nullopt;
                return -1.0 / (x * x);
            case TransformKind::NegReciprocal:
                if (x == 0.0) return std::nullopt;
                return 1.0 / (x * x);
            case TransformKind::ScaledSqrt:
                if (!(x > 0.0)) return std::nullopt;
                return 1.0 / std::sqrt(x);
            case TransformKind::Tabulated: {
                const auto& t = *table_;
                if (x < t.x.front() || x > t.x.back()) return std::nullopt;
                return t.derivative(x);
            }
        }
        return std::nullopt;
    }

    /// Config-file name: identity | reciprocal | neg_reciprocal | scaled_sqrt | tabulated:<path>.
    std::string name() const {
        switch (kind_) {
            case TransformKind::Identity: return "identity";
            case TransformKind::Reciprocal: return "reciprocal";
            case TransformKind::NegReciprocal: return "neg_reciprocal";
            case TransformKind::ScaledSqrt: return "scaled_sqrt";
            case TransformKind::Tabulated: return "tabulated:" + table_->source;
        }
        return "unknown";
    }

    /// Same transform shifted by a constant (only meaningful for tables).
    Transform shifted(double c) const {
        if (kind_ != TransformKind::Tabulated) fail(ErrorCode::InvalidParameter, "only tabulated transforms can be shifted");
        TabulatedTable t = *table_;
        for (double& v : t.nu) v += c;
        return Transform(std::move(t));
    }

private:
    TransformKind kind_ = TransformKind::Identity;
    std::shared_ptr<const TabulatedTable> table_;
};

inline double apply_transform(const Transform& t, double x) { return t(x); }

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Reads a whitespace-separated two-column (x, nu) file; '#' starts a comment.
inline TabulatedTable load_tabulated(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open tabulated transform file '" + path + "'");
    TabulatedTable t;
    t.source = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string a, b, extra;
        if (!(fields >> a)) continue;
        if (!(fields >> b) || (fields >> extra))
            fail(ErrorCode::ConfigError, path + ":" + std::to_string(lineno) + ": expected two numeric columns");
        const auto x = detail::parse_double(a);
        const auto nu = detail::parse_double(b);
        if (!x || !nu) fail(ErrorCode::ConfigError, path + ":" + std::to_string(lineno) + ": not a number");
        t.x.push_back(*x);
        t.nu.push_back(*nu);
    }
    try {
        t.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, path + ": " + e.what());
    }
    return t;
}

inline Transform parse_transform(std::string_view name) {
    if (name == "identity") return Transform::identity();
    if (name == "reciprocal") return Transform::reciprocal();
    if (name == "neg_reciprocal") return Transform::neg_reciprocal();
    if (name == "scaled_sqrt") return Transform::scaled_sqrt();
    constexpr std::string_view prefix = "tabulated:";
    if (name.substr(0, prefix.size()) == prefix) {
        const std::string path(name.substr(prefix.size()));
        if (path.empty()) fail(ErrorCode::ConfigError, "tabulated transform needs a path");
        return Transform(load_tabulated(path));
    }
    fail(ErrorCode::ConfigError, "unknown transform '" + std::string(name) + "'");
}

enum class Statistic { SampleMeanPerAgent, InterferenceT };

constexpr std::string_view statistic_name(Statistic s) {
    return s == Statistic::SampleMeanPerAgent ? "sample_mean" : "interference_t";
}

inline std::optional<Statistic> parse_statistic(std::string_view s) {
    if (s == "sample_mean") return Statistic::SampleMeanPerAgent;
    if (s == "interference_t") return Statistic::InterferenceT;
    return std::nullopt;
}

/// Score phi_i = f(T_i).
struct ScoreFunction {
    Statistic statistic = Statistic::SampleMeanPerAgent;
    Transform transform;
};

struct ScoreVector {
    std::vector<double> scores;
    std::size_t size() const { return scores.size(); }
};

/// Identifying statistic from observed outcomes. Sample means need a single
/// block; the interference statistic needs the two-group layout.
inline std::vector<double> compute_statistic(const ScoreFunction& score_fn, const ObservedOutcomes& outcomes,
                                             std::optional<double> gamma = std::nullopt) {
    const auto means = outcomes.cell_means();
    if (score_fn.statistic == Statistic::SampleMeanPerAgent) {
        if (outcomes.assignment.blocks != 1)
            fail(ErrorCode::InvalidDimensions, "per-agent sample means take single-block outcomes");
        return means;
    }
    if (!gamma) fail(ErrorCode::MissingParameter, "the interference statistic needs gamma");
    if (outcomes.assignment.agents != 2 || outcomes.assignment.blocks != 2)
        fail(ErrorCode::InvalidDimensions, "the interference statistic needs 2 agents x 2 groups");
    const auto alg = build_algebra(*gamma);
    const auto t = compute_T(alg, {means[0], means[1], means[2], means[3]});
    return {t[0], t[1]};
}

/// Argmax of the scores, ties (including all -inf) broken uniformly at random.
/// Consumes a draw from `rng` only when there is a tie.
template <class Rng>
std::size_t declare_winner(const ScoreVector& sv, Rng& rng) {
    const auto& s = sv.scores;
    if (s.empty()) fail(ErrorCode::InvalidDimensions, "no scores");
    auto val = [](double v) { return std::isnan(v) ? kMinusInf : v; };
    double best = val(s[0]);
    std::size_t count = 1;
    std::size_t first = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        const double v = val(s[i]);
        if (v > best) {
            best = v;
            first = i;
            count = 1;
        } else if (v == best) {
            ++count;
        }
    }
    if (count == 1) return first;
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    std::size_t target = pick(rng);
    for (std::size_t i = first; i < s.size(); ++i)
        if (val(s[i]) == best && target-- == 0) return i;
    return first;
}

}  // namespace icdesign
