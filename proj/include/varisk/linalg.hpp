#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace varisk {

/// Dense row-major matrix of doubles. Sized for the small systems that show
/// up in per-policy moment computations (tens to a few hundred unknowns).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<double> multiply(const Matrix& a, std::span<const double> x);

/// Infinity norm of (a x - b).
double residual_inf(const Matrix& a, std::span<const double> x, std::span<const double> b);

double norm_inf(std::span<const double> x);

/// Solves a x = b by Gaussian elimination with partial pivoting. When the
/// residual exceeds `tolerance * (1 + |x|_inf)` one step of iterative
/// refinement is applied. Throws SolverError on an exactly singular pivot.
std::vector<double> solve_dense(const Matrix& a, std::span<const double> b,
                                double tolerance = 1e-12);

} // namespace varisk
