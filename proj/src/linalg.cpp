#include "varisk/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace varisk {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

std::vector<double> multiply(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size())
        throw std::invalid_argument("multiply: dimension mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j)
            acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

double norm_inf(std::span<const double> x) {
    double m = 0.0;
    for (double v : x)
        m = std::max(m, std::abs(v));
    return m;
}

double residual_inf(const Matrix& a, std::span<const double> x, std::span<const double> b) {
    const auto ax = multiply(a, x);
    double m = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i)
        m = std::max(m, std::abs(ax[i] - b[i]));
    return m;
}

namespace {

// LU factorization in place with row permutation; L has unit diagonal.
struct LuFactors {
    Matrix lu;
    std::vector<std::size_t> perm;
};

LuFactors factorize(const Matrix& a) {
    const std::size_t n = a.rows();
    LuFactors f{a, std::vector<std::size_t>(n)};
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    Matrix& lu = f.lu;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        double best = std::abs(lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > best) {
                best = std::abs(lu(i, k));
                pivot = i;
            }
        }
        if (best == 0.0)
            throw SolverError("solve_dense: singular matrix at column " + std::to_string(k));
        if (pivot != k) {
            std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(pivot).begin());
            std::swap(f.perm[k], f.perm[pivot]);
        }
        const double diag = lu(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double factor = lu(i, k) / diag;
            lu(i, k) = factor;
            if (factor == 0.0)
                continue;
            for (std::size_t j = k + 1; j < n; ++j)
                lu(i, j) -= factor * lu(k, j);
        }
    }
    return f;
}

std::vector<double> substitute(const LuFactors& f, std::span<const double> b) {
    const std::size_t n = f.lu.rows();
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = b[f.perm[i]];
        for (std::size_t j = 0; j < i; ++j)
            acc -= f.lu(i, j) * x[j];
        x[i] = acc;
    }
    for (std::size_t i = n; i-- > 0;) {
        double acc = x[i];
        for (std::size_t j = i + 1; j < n; ++j)
            acc -= f.lu(i, j) * x[j];
        x[i] = acc / f.lu(i, i);
    }
    return x;
}

} // namespace

std::vector<double> solve_dense(const Matrix& a, std::span<const double> b, double tolerance) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw std::invalid_argument("solve_dense: dimension mismatch");
    if (a.rows() == 0)
        return {};

    const LuFactors f = factorize(a);
    std::vector<double> x = substitute(f, b);

    if (residual_inf(a, x, b) > tolerance * (1.0 + norm_inf(x))) {
        const auto ax = multiply(a, x);
        std::vector<double> r(b.size());
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = b[i] - ax[i];
        const auto dx = substitute(f, r);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += dx[i];
    }
    return x;
}

} // namespace varisk
