#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <vector>

namespace icdesign {

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Dense row-major matrix. Only the handful of operations the covariance
/// algebra needs; sizes here never exceed 4x4.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            assert(r.size() == cols_);
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(const std::vector<double>& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        assert(a.cols_ == b.rows_);
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    friend std::vector<double> operator*(const Matrix& a, const std::vector<double>& x) {
        assert(a.cols_ == x.size());
        std::vector<double> y(a.rows_, 0.0);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t j = 0; j < a.cols_; ++j) y[i] += a(i, j) * x[j];
        return y;
    }

    double max_abs_diff(const Matrix& other) const {
        assert(rows_ == other.rows_ && cols_ == other.cols_);
        double worst = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i)
            worst = std::max(worst, std::abs(data_[i] - other.data_[i]));
        return worst;
    }

    bool is_symmetric(double tol = 0.0) const {
        if (rows_ != cols_) return false;
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = i + 1; j < cols_; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Gauss-Jordan inversion with partial pivoting. Returns nullopt when a
/// pivot falls below `singular_tol` (relative to the largest entry).
inline std::optional<Matrix> invert(const Matrix& a, double singular_tol = 1e-12) {
    const std::size_t n = a.rows();
    assert(n == a.cols());
    Matrix work = a;
    Matrix inv = Matrix::identity(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
    if (scale == 0.0) return std::nullopt;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
        if (std::abs(work(pivot, col)) <= singular_tol * scale) return std::nullopt;
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(work(col, j), work(pivot, j));
                std::swap(inv(col, j), inv(pivot, j));
            }
        }
        const double p = work(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            work(col, j) /= p;
            inv(col, j) /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = work(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                work(r, j) -= f * work(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
};

namespace detail {

struct SimpsonPanel {
    double a, b, fa, fm, fb, whole;
};

inline double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline void adaptive_simpson_step(const std::function<double(double)>& f, const SimpsonPanel& p,
                                  double tol, int depth, QuadratureResult& acc) {
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m);
    const double rm = 0.5 * (m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(p.a, m, p.fa, flm, p.fm);
    const double right = simpson(m, p.b, p.fm, frm, p.fb);
    const double delta = left + right - p.whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        acc.value += left + right + delta / 15.0;
        acc.error_estimate += std::abs(delta) / 15.0;
        if (depth <= 0 && std::abs(delta) > 15.0 * tol) acc.converged = false;
        return;
    }
    adaptive_simpson_step(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1, acc);
    adaptive_simpson_step(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1, acc);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`
/// (Richardson-corrected; error_estimate sums the per-panel corrections).
inline QuadratureResult integrate_adaptive_simpson(const std::function<double(double)>& f, double a,
                                                   double b, double tol, int max_depth = 48) {
    QuadratureResult acc{};
    if (a == b) return acc;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const detail::SimpsonPanel whole{a, b, fa, fm, fb, detail::simpson(a, b, fa, fm, fb)};
    detail::adaptive_simpson_step(f, whole, tol, max_depth, acc);
    return acc;
}

}  // namespace icdesign
