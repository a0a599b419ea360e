#include "bhash/synth.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bhash/rng.hpp"

namespace bhash {

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.videos_per_class < 1 || spec.frames_per_video < 1 ||
        spec.dim < 1)
        throw std::invalid_argument("synth: all counts must be >= 1");
    if (spec.dim < spec.classes)
        throw std::invalid_argument("synth: dim must be >= classes for simplex centers");
    if (spec.cluster_separation <= 0.0 || spec.noise_sigma < 0.0)
        throw std::invalid_argument("synth: separation must be > 0 and sigma >= 0");

    // Centers s*e_c: pairwise distance s*sqrt(2) = separation.
    const double scale = spec.cluster_separation / std::sqrt(2.0);

    const std::size_t videos = spec.classes * spec.videos_per_class;
    const std::size_t frames = videos * spec.frames_per_video;
    SyntheticData data;
    data.frame_features = Matrix(frames, spec.dim);
    data.manifest.num_classes = static_cast<int>(spec.classes);

    Rng rng(spec.seed);
    std::size_t frame_row = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t v = 0; v < spec.videos_per_class; ++v) {
            VideoRecord rec;
            rec.video_id = "c" + std::to_string(c) + "_v" + std::to_string(v);
            rec.label = static_cast<int>(c);
            rec.frame_start = frame_row;
            rec.frame_count = spec.frames_per_video;
            for (std::size_t f = 0; f < spec.frames_per_video; ++f, ++frame_row) {
                auto row = data.frame_features.row(frame_row);
                for (std::size_t j = 0; j < spec.dim; ++j)
                    row[j] = (j == c ? scale : 0.0) + spec.noise_sigma * rng.next_gaussian();
            }
            data.manifest.records.push_back(std::move(rec));
        }
    }
    return data;
}

} // namespace bhash
