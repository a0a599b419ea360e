#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bhash/matrix.hpp"
#include "bhash/rng.hpp"

namespace bhash {

// One video's frame span inside a frame-level feature matrix.
struct VideoRecord {
    std::string video_id;
    int label = 0;
    std::size_t frame_start = 0;
    std::size_t frame_count = 0;
};

struct Manifest {
    std::vector<VideoRecord> records;
    int num_classes = 0;
};

// Fused per-video features plus labels. One row per video.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;
    std::vector<std::string> ids;

    std::size_t size() const { return labels.size(); }
};

struct FusionWeights {
    enum class Mode { Uniform, Custom };
    Mode mode = Mode::Uniform;
    std::vector<double> weights; // custom only: non-negative, sums to 1

    static FusionWeights uniform() { return {}; }
    static FusionWeights custom(std::vector<double> w);
};

// FVEC binary feature file: magic "FVEC", u32 version=1, u32 n, u32 d, then
// n*d little-endian f32 row-major. Files ending in .csv fall back to the CSV
// reader (one comma-separated row per line).
Matrix load_features(const std::string& path);
void write_features(const std::string& path, const Matrix& m);

// Manifest CSV with header video_id,label,frame_start,frame_count. Labels must
// form a contiguous 0..K-1 set and frame ranges must not overlap. Pass the
// feature row count to bounds-check ranges (0 skips the check).
Manifest load_manifest(const std::string& path, std::size_t feature_rows = 0);

// Weighted average of one video's frames.
std::vector<double> fuse_frames(const Matrix& features, const VideoRecord& rec,
                                const FusionWeights& w);

// Fuses every record into a per-video Dataset (all frames, given weights mode).
Dataset build_dataset(const Matrix& features, const Manifest& manifest,
                      const FusionWeights& w = FusionWeights::uniform());

// Stratified per-class split into database and query index sets; deterministic
// per seed. Every class must have at least 2 videos.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const Dataset& ds, Rng& rng, double query_fraction);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, Rng& rng,
                                          double query_fraction);

} // namespace bhash
