#include "bhash/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bhash {

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: dimension mismatch " +
                                    std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                    " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t l = 0; l < a.cols; ++l) {
            const double av = a.at(i, l);
            if (av == 0.0) continue;
            const double* brow = b.data.data() + l * b.cols;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
    return out;
}

std::pair<Matrix, std::vector<double>> center(const Matrix& x) {
    if (x.rows == 0) throw std::invalid_argument("center: empty matrix");
    std::vector<double> mean(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) mean[j] += x.at(i, j);
    for (double& m : mean) m /= static_cast<double>(x.rows);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) - mean[j];
    return {std::move(out), std::move(mean)};
}

Matrix random_gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

Matrix random_orthogonal_matrix(Rng& rng, std::size_t n) {
    for (;;) {
        Matrix q = random_gaussian_matrix(rng, n, n);
        bool ok = true;
        // Modified Gram-Schmidt over columns, two projection passes per column
        // to hold orthogonality at the 1e-10 tolerance.
        for (std::size_t j = 0; j < n && ok; ++j) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t p = 0; p < j; ++p) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n; ++i) dot += q.at(i, j) * q.at(i, p);
                    for (std::size_t i = 0; i < n; ++i) q.at(i, j) -= dot * q.at(i, p);
                }
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) norm += q.at(i, j) * q.at(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-10) {
                ok = false; // near-degenerate draw, try again with fresh randomness
                break;
            }
            for (std::size_t i = 0; i < n; ++i) q.at(i, j) /= norm;
        }
        if (ok) return q;
    }
}

} // namespace bhash
