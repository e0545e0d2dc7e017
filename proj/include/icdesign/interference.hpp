#pragma once

#include <array>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "numerics.hpp"
#include "outcome_models.hpp"

namespace icdesign {

/// Linear algebra of the two-group interference design.
///
/// Rate vector layout is (lam1, lamc1, lamc2, lam2); cell layout is
/// (G11, G12, G21, G22). C maps rates to cell means, B aggregates the
/// recovered rates into per-agent performance.
class InterferenceAlgebra {
public:
    double gamma() const { return gamma_; }
    const Matrix& B() const { return b_; }
    const Matrix& C() const { return c_; }
    const Matrix& C_inv() const { return c_inv_; }

    friend InterferenceAlgebra build_algebra(double gamma);

private:
    double gamma_ = 0.0;
    Matrix b_;
    Matrix c_;
    Matrix c_inv_;
};

inline InterferenceAlgebra build_algebra(double gamma) {
    if (!(gamma >= 0.0)) fail(ErrorCode::InvalidParameter, "gamma must be >= 0, got " + std::to_string(gamma));
    if (!(gamma < 1.0)) fail(ErrorCode::SingularC, "C(gamma) is singular for gamma >= 1");

    InterferenceAlgebra alg;
    alg.gamma_ = gamma;
    alg.b_ = Matrix{{1, 1, 0, 0}, {0, 0, 1, 1}};
    alg.c_ = Matrix{{1, 0, gamma, 0}, {gamma, 0, 1, 0}, {0, 1, 0, gamma}, {0, gamma, 0, 1}};
    auto inv = invert(alg.c_);
    if (!inv) fail(ErrorCode::SingularC, "C(gamma) could not be inverted");
    alg.c_inv_ = std::move(*inv);
    return alg;
}

/// Rate vector (lam1, lamc1, lamc2, lam2) of a two-agent profile.
inline std::vector<double> rate_vector(const ActionProfile& profile) {
    if (profile.size() != 2)
        fail(ErrorCode::UnsupportedAgentCount, "the interference design has exactly 2 agents");
    return {profile[0][0], profile[0][1], profile[1][1], profile[1][0]};
}

/// T = B C^-1 Y for cell means Y = (Y11, Y12, Y21, Y22).
inline std::array<double, 2> compute_T(const InterferenceAlgebra& alg, const std::array<double, 4>& cell_means) {
    const std::vector<double> y(cell_means.begin(), cell_means.end());
    const auto t = (alg.B() * alg.C_inv()) * y;
    return {t[0], t[1]};
}

/// Asymptotic covariance of sqrt(m/4) (T - chi): B C^-1 D_A C^-T B^T with
/// D_A = diag(C A).
inline Matrix statistic_covariance(const InterferenceAlgebra& alg, const ActionProfile& profile) {
    const auto rates = rate_vector(profile);
    for (double r : rates)
        if (r < 0.0) fail(ErrorCode::InvalidParameter, "rates must be non-negative");
    const Matrix d = Matrix::diagonal(alg.C() * rates);
    const Matrix bc = alg.B() * alg.C_inv();
    return bc * d * bc.transpose();
}

/// Variance of T1 - T2 in closed form:
/// (1 + gamma)^3 (chi(A1) + chi(A2)) / (1 - gamma^2)^2, i.e. the cell sum
/// (1 + gamma)(chi1 + chi2) scaled by (1 + gamma)^2 / (1 - gamma^2)^2.
inline double pairwise_variance_closed_form(const InterferenceAlgebra& alg, const ActionProfile& profile) {
    const auto r = rate_vector(profile);
    const double g = alg.gamma();
    const double g1 = 1.0 + g;
    const double denom = (1.0 - g * g) * (1.0 - g * g);
    return g1 * g1 * g1 * ((r[0] + r[1]) + (r[2] + r[3])) / denom;
}

}  // namespace icdesign
