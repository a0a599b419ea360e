#pragma once

#include <vector>

#include "bhash/matrix.hpp"

namespace bhash {

// Principal components of a sample. `components` holds one principal
// direction per column; eigenvalues are sorted descending and non-negative.
struct PcaModel {
    std::vector<double> mean;
    Matrix components; // d x c
    std::vector<double> eigenvalues;
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues (unsorted) and the column eigenvectors.
void jacobi_eigen_symmetric(const Matrix& a, Matrix& eigenvectors,
                            std::vector<double>& eigenvalues);

// Top-c principal components of the rows of x. Covariance is normalized by
// 1/(n-1). Sign convention: the largest-magnitude entry of each component is
// positive, so models are byte-reproducible.
PcaModel pca(const Matrix& x, std::size_t c);

} // namespace bhash
