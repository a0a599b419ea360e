#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bhash/rng.hpp"

namespace bhash {

// Dense row-major matrix of doubles. All entries are expected to stay finite;
// loaders and training code check for NaN/Inf at their boundaries.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }
    std::span<double> row(std::size_t r) {
        return {data.data() + r * cols, cols};
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    bool all_finite() const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Subtracts per-column means; returns the centered matrix and the mean vector.
std::pair<Matrix, std::vector<double>> center(const Matrix& x);

// i.i.d. standard normal entries, filled row-major so the stream order is fixed.
Matrix random_gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols);

// Orthonormalizes a gaussian matrix with modified Gram-Schmidt. Q^T Q = I
// within 1e-10; determinant sign is not constrained.
Matrix random_orthogonal_matrix(Rng& rng, std::size_t n);

} // namespace bhash
