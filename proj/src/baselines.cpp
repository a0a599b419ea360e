#include "bhash/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace bhash {

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw std::runtime_error(path + ": truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_block(std::ostream& out, const double* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

void read_f64_block(std::istream& in, double* data, std::size_t count, const std::string& path) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw std::runtime_error(path + ": truncated payload");
}

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> mean(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) mean[j] += x.at(i, j);
    for (double& m : mean) m /= static_cast<double>(x.rows);
    return mean;
}

// Orthogonal Procrustes: R = U W^T from the SVD V^T B = U S W^T, computed via
// the symmetric eigendecomposition of (V^T B)^T (V^T B). Near-zero singular
// directions are completed with Gram-Schmidt against the standard basis; a
// 1e-12 ridge keeps the eigensolve stable when that happens.
Matrix procrustes_rotation(const Matrix& v, const Matrix& b, bool* degenerate) {
    const Matrix s = matmul(transpose(v), b); // b x b
    const std::size_t n = s.rows;
    Matrix sts = matmul(transpose(s), s);

    Matrix w;
    std::vector<double> lambda;
    jacobi_eigen_symmetric(sts, w, lambda);

    double lmax = 0.0;
    for (double l : lambda) lmax = std::max(lmax, l);
    const double sigma_tol = 1e-10 * std::sqrt(std::max(lmax, 1e-300));
    bool rank_deficient = false;
    for (double l : lambda)
        if (std::sqrt(std::max(0.0, l)) < sigma_tol) rank_deficient = true;
    double ridge = 0.0;
    if (rank_deficient) {
        if (degenerate) *degenerate = true;
        ridge = 1e-12;
        for (std::size_t i = 0; i < n; ++i) sts.at(i, i) += ridge;
        jacobi_eigen_symmetric(sts, w, lambda);
    }

    // Descending singular values; column sign fixed by largest-magnitude entry.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t c) { return lambda[a] > lambda[c]; });

    Matrix wv(n, n), u(n, n);
    std::vector<bool> filled(n, false);
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t src = order[jj];
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::abs(w.at(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double sign = w.at(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) wv.at(i, jj) = sign * w.at(i, src);

        const double sigma = std::sqrt(std::max(0.0, lambda[src] - ridge));
        if (sigma >= sigma_tol) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t kk = 0; kk < n; ++kk) acc += s.at(i, kk) * wv.at(kk, jj);
                u.at(i, jj) = acc / sigma;
            }
            filled[jj] = true;
        }
    }
    // Complete missing left singular vectors deterministically.
    for (std::size_t jj = 0; jj < n; ++jj) {
        if (filled[jj]) continue;
        for (std::size_t e = 0; e < n; ++e) {
            std::vector<double> cand(n, 0.0);
            cand[e] = 1.0;
            for (std::size_t p = 0; p < n; ++p) {
                if (p == jj || !filled[p]) continue;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += cand[i] * u.at(i, p);
                for (std::size_t i = 0; i < n; ++i) cand[i] -= dot * u.at(i, p);
            }
            double norm = 0.0;
            for (double c : cand) norm += c * c;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t i = 0; i < n; ++i) u.at(i, jj) = cand[i] / norm;
                filled[jj] = true;
                break;
            }
        }
        if (!filled[jj]) throw std::runtime_error("procrustes: failed to complete basis");
    }
    return matmul(u, transpose(wv));
}

double quantization_loss(const Matrix& b, const Matrix& vr) {
    double loss = 0.0;
    for (std::size_t i = 0; i < b.data.size(); ++i) {
        const double diff = b.data[i] - vr.data[i];
        loss += diff * diff;
    }
    return loss;
}

} // namespace

LinearHasher fit_lsh(const Matrix& train, std::size_t bits, Rng& rng) {
    if (train.rows == 0 || train.cols == 0 || bits == 0)
        throw std::invalid_argument("fit_lsh: empty input or zero bits");
    LinearHasher h;
    h.kind = HasherKind::Lsh;
    h.mean = column_means(train);
    h.projection = random_gaussian_matrix(rng, train.cols, bits);
    return h;
}

LinearHasher fit_pca_rr(const Matrix& train, std::size_t bits, Rng& rng) {
    const PcaModel model = pca(train, bits);
    const Matrix rotation = random_orthogonal_matrix(rng, bits);
    LinearHasher h;
    h.kind = HasherKind::PcaRr;
    h.mean = model.mean;
    h.projection = matmul(model.components, rotation);
    return h;
}

std::pair<LinearHasher, ItqState> fit_itq(const Matrix& train, std::size_t bits,
                                          std::size_t iterations, Rng& rng) {
    return fit_itq_from_rotation(train, bits, iterations, random_orthogonal_matrix(rng, bits));
}

std::pair<LinearHasher, ItqState> fit_itq_from_rotation(const Matrix& train, std::size_t bits,
                                                        std::size_t iterations,
                                                        Matrix initial_rotation) {
    if (iterations == 0) throw std::invalid_argument("fit_itq: iterations must be >= 1");
    if (initial_rotation.rows != bits || initial_rotation.cols != bits)
        throw std::invalid_argument("fit_itq: initial rotation must be b x b");
    const PcaModel model = pca(train, bits);
    Matrix rotation = std::move(initial_rotation);

    Matrix centered(train.rows, train.cols);
    for (std::size_t i = 0; i < train.rows; ++i)
        for (std::size_t j = 0; j < train.cols; ++j)
            centered.at(i, j) = train.at(i, j) - model.mean[j];
    const Matrix v = matmul(centered, model.components); // n x b

    ItqState state;
    for (std::size_t it = 0; it < iterations; ++it) {
        const Matrix vr = matmul(v, rotation);
        Matrix b(vr.rows, vr.cols);
        for (std::size_t i = 0; i < vr.data.size(); ++i)
            b.data[i] = vr.data[i] >= 0.0 ? 1.0 : -1.0;
        state.loss_history.push_back(quantization_loss(b, vr));
        rotation = procrustes_rotation(v, b, &state.degenerate);
    }
    state.rotation = rotation;

    LinearHasher h;
    h.kind = HasherKind::Itq;
    h.mean = model.mean;
    h.projection = matmul(model.components, rotation);
    return {std::move(h), std::move(state)};
}

LinearHasher fit_sh(const Matrix& train, std::size_t bits) {
    if (bits == 0) throw std::invalid_argument("fit_sh: bits must be >= 1");
    const std::size_t max_c = std::min(train.rows - 1, train.cols);
    const std::size_t c = std::min(bits, max_c);
    const PcaModel model = pca(train, c);

    Matrix centered(train.rows, train.cols);
    for (std::size_t i = 0; i < train.rows; ++i)
        for (std::size_t j = 0; j < train.cols; ++j)
            centered.at(i, j) = train.at(i, j) - model.mean[j];
    const Matrix v = matmul(centered, model.components); // n x c

    struct ModeCandidate {
        double eigenvalue;
        std::size_t direction;
        std::size_t k;
        double min;
        double extent;
    };
    std::vector<ModeCandidate> candidates;
    for (std::size_t j = 0; j < c; ++j) {
        double lo = v.at(0, j), hi = v.at(0, j);
        for (std::size_t i = 1; i < v.rows; ++i) {
            lo = std::min(lo, v.at(i, j));
            hi = std::max(hi, v.at(i, j));
        }
        const double extent = hi - lo;
        if (extent < 1e-12) continue; // zero-extent direction, skip
        for (std::size_t k = 1; k <= bits; ++k) {
            const double freq = static_cast<double>(k) / extent;
            candidates.push_back({freq * freq, j, k, lo, extent});
        }
    }
    if (candidates.size() < bits)
        throw std::runtime_error("fit_sh: fewer than " + std::to_string(bits) + " usable modes");
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ModeCandidate& a, const ModeCandidate& b) {
                         return std::tie(a.eigenvalue, a.direction, a.k) <
                                std::tie(b.eigenvalue, b.direction, b.k);
                     });

    LinearHasher h;
    h.kind = HasherKind::Sh;
    h.mean = model.mean;
    h.projection = Matrix(train.cols, bits);
    for (std::size_t i = 0; i < bits; ++i) {
        const auto& cand = candidates[i];
        for (std::size_t row = 0; row < train.cols; ++row)
            h.projection.at(row, i) = model.components.at(row, cand.direction);
        h.sh_modes.push_back({i, static_cast<double>(cand.k), cand.min, cand.extent});
    }
    return h;
}

std::vector<std::uint8_t> encode_linear(const LinearHasher& hasher, std::span<const double> x) {
    if (x.size() != hasher.mean.size())
        throw std::invalid_argument("encode_linear: dimension mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(hasher.mean.size()) + ")");
    const std::size_t b = hasher.bits();
    std::vector<std::uint8_t> bits(b);
    for (std::size_t j = 0; j < b; ++j) {
        const std::size_t col = hasher.sh_modes.empty() ? j : hasher.sh_modes[j].component;
        double y = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            y += (x[i] - hasher.mean[i]) * hasher.projection.at(i, col);
        if (hasher.sh_modes.empty()) {
            bits[j] = y >= 0.0 ? 1 : 0;
        } else {
            const auto& mode = hasher.sh_modes[j];
            const double phase =
                M_PI * mode.frequency * (y - mode.min) / mode.extent + M_PI / 2.0;
            bits[j] = std::sin(phase) >= 0.0 ? 1 : 0;
        }
    }
    return bits;
}

void save_hasher(const std::string& path, const LinearHasher& hasher) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write hasher file: " + path);
    out.write("BLH1", 4);
    write_u32_le(out, static_cast<std::uint32_t>(hasher.kind));
    write_u32_le(out, static_cast<std::uint32_t>(hasher.mean.size()));
    write_u32_le(out, static_cast<std::uint32_t>(hasher.bits()));
    write_f64_block(out, hasher.mean.data(), hasher.mean.size());
    write_f64_block(out, hasher.projection.data.data(), hasher.projection.data.size());
    for (const auto& mode : hasher.sh_modes) {
        write_u32_le(out, static_cast<std::uint32_t>(mode.component));
        write_f64_block(out, &mode.frequency, 1);
        write_f64_block(out, &mode.min, 1);
        write_f64_block(out, &mode.extent, 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

LinearHasher load_hasher(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open hasher file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "BLH1", 4) != 0)
        throw std::runtime_error(path + ": bad magic bytes (expected BLH1)");
    const std::uint32_t kind = read_u32_le(in, path);
    if (kind > 3) throw std::runtime_error(path + ": unknown hasher kind " + std::to_string(kind));
    const std::uint32_t d = read_u32_le(in, path);
    const std::uint32_t b = read_u32_le(in, path);

    LinearHasher h;
    h.kind = static_cast<HasherKind>(kind);
    h.mean.resize(d);
    read_f64_block(in, h.mean.data(), d, path);
    h.projection = Matrix(d, b);
    read_f64_block(in, h.projection.data.data(), h.projection.data.size(), path);
    if (h.kind == HasherKind::Sh) {
        for (std::uint32_t i = 0; i < b; ++i) {
            ShMode mode;
            mode.component = read_u32_le(in, path);
            read_f64_block(in, &mode.frequency, 1, path);
            read_f64_block(in, &mode.min, 1, path);
            read_f64_block(in, &mode.extent, 1, path);
            h.sh_modes.push_back(mode);
        }
    }
    return h;
}

} // namespace bhash
