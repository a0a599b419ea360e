#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bhash/matrix.hpp"
#include "bhash/pca.hpp"
#include "bhash/rng.hpp"

namespace bhash {

enum class HasherKind : std::uint32_t { Lsh = 0, PcaRr = 1, Itq = 2, Sh = 3 };

// One sinusoidal eigenfunction mode along a principal direction.
struct ShMode {
    std::size_t component = 0; // column of `projection` holding the direction
    double frequency = 1.0;    // mode index k
    double min = 0.0;          // training min along the direction
    double extent = 0.0;       // training range along the direction
};

// Linear encoder to b bits: center, project, take signs. SH replaces the sign
// rule with per-mode sinusoids along principal directions.
struct LinearHasher {
    HasherKind kind = HasherKind::Lsh;
    std::vector<double> mean;
    Matrix projection; // d x b
    std::vector<ShMode> sh_modes;

    std::size_t bits() const { return sh_modes.empty() ? projection.cols : sh_modes.size(); }
};

struct ItqState {
    Matrix rotation; // b x b orthogonal
    std::vector<double> loss_history;
    bool degenerate = false; // Procrustes hit a rank-deficient step
};

// Random gaussian projections; mean is the training-set mean so signs are
// taken on centered data.
LinearHasher fit_lsh(const Matrix& train, std::size_t bits, Rng& rng);

// Top-b PCA directions followed by a random orthogonal rotation.
LinearHasher fit_pca_rr(const Matrix& train, std::size_t bits, Rng& rng);

// Iterative quantization: alternate B = sign(V R) with the Procrustes update
// of R. Quantization loss ||B - V R||_F^2 is recorded per iteration and is
// non-increasing.
std::pair<LinearHasher, ItqState> fit_itq(const Matrix& train, std::size_t bits,
                                          std::size_t iterations, Rng& rng);

// Same, with a caller-supplied initial rotation (must be b x b orthogonal).
std::pair<LinearHasher, ItqState> fit_itq_from_rotation(const Matrix& train, std::size_t bits,
                                                        std::size_t iterations,
                                                        Matrix initial_rotation);

// Spectral-style hashing: analytic sinusoidal eigenfunctions along principal
// directions under a uniform-box assumption; selects the b smallest-eigenvalue
// modes. No randomness.
LinearHasher fit_sh(const Matrix& train, std::size_t bits);

std::vector<std::uint8_t> encode_linear(const LinearHasher& hasher, std::span<const double> x);

// Hasher file "BLH1": u32 kind, u32 d, u32 b, mean and projection as
// little-endian f64, then the SH mode table when present.
void save_hasher(const std::string& path, const LinearHasher& hasher);
LinearHasher load_hasher(const std::string& path);

} // namespace bhash
