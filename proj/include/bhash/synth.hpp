#pragma once

#include <cstdint>
#include <vector>

#include "bhash/dataset.hpp"
#include "bhash/matrix.hpp"

namespace bhash {

// Desk-scale synthetic stand-in for real video feature sets: class centers on
// a scaled simplex (all pairwise center distances equal cluster_separation),
// frames = center + isotropic gaussian noise.
struct SyntheticSpec {
    std::size_t classes = 5;
    std::size_t videos_per_class = 100;
    std::size_t frames_per_video = 8;
    std::size_t dim = 64;
    double cluster_separation = 4.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Matrix frame_features;
    Manifest manifest;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

} // namespace bhash
