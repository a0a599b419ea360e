#include "bhash/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bhash {

void jacobi_eigen_symmetric(const Matrix& a, Matrix& eigenvectors,
                            std::vector<double>& eigenvalues) {
    if (a.rows != a.cols) throw std::invalid_argument("jacobi: matrix not square");
    const std::size_t n = a.rows;
    Matrix m = a;
    eigenvectors = Matrix::identity(n);

    double frob = 0.0;
    for (double v : m.data) frob += v * v;
    const double tol = 1e-14 * std::max(1.0, std::sqrt(frob));

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (std::sqrt(2.0 * off) <= tol) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) <= tol * 1e-2) continue;
                const double app = m.at(p, p);
                const double aqq = m.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                     : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    const double mip = m.at(i, p);
                    const double miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double mpi = m.at(p, i);
                    const double mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigenvectors.at(i, p);
                    const double viq = eigenvectors.at(i, q);
                    eigenvectors.at(i, p) = c * vip - s * viq;
                    eigenvectors.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = m.at(i, i);
}

PcaModel pca(const Matrix& x, std::size_t c) {
    if (x.rows < 2) throw std::invalid_argument("pca: need at least 2 rows");
    if (c == 0 || c > std::min(x.rows - 1, x.cols)) {
        throw std::invalid_argument("pca: component count " + std::to_string(c) +
                                    " out of range for " + std::to_string(x.rows) + "x" +
                                    std::to_string(x.cols) + " input");
    }

    auto [centered, mean] = center(x);
    const std::size_t d = x.cols;
    Matrix cov(d, d);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* row = centered.data.data() + i * d;
        for (std::size_t a = 0; a < d; ++a) {
            if (row[a] == 0.0) continue;
            for (std::size_t b = a; b < d; ++b) cov.at(a, b) += row[a] * row[b];
        }
    }
    const double norm = 1.0 / static_cast<double>(x.rows - 1);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov.at(a, b) *= norm;
            cov.at(b, a) = cov.at(a, b);
        }

    double total_var = 0.0;
    for (std::size_t a = 0; a < d; ++a) total_var += cov.at(a, a);
    if (total_var <= 1e-12) throw std::runtime_error("pca: zero variance");

    Matrix vecs;
    std::vector<double> vals;
    jacobi_eigen_symmetric(cov, vecs, vals);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });

    PcaModel model;
    model.mean = std::move(mean);
    model.components = Matrix(d, c);
    model.eigenvalues.resize(c);
    for (std::size_t j = 0; j < c; ++j) {
        const std::size_t src = order[j];
        model.eigenvalues[j] = std::max(0.0, vals[src]);
        // Largest-magnitude entry positive.
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double mag = std::abs(vecs.at(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double sign = vecs.at(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) model.components.at(i, j) = sign * vecs.at(i, src);
    }
    return model;
}

} // namespace bhash
