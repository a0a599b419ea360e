#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bhash/dataset.hpp"
#include "bhash/matrix.hpp"
#include "bhash/rng.hpp"

namespace bhash {

// Two-layer hashing head: a fully connected code layer with sigmoid
// activations (the binary-like code), then a fully connected classifier over
// the code. Trained with a triplet hinge on the codes plus cross-entropy on
// the classifier.
struct HashHeadParams {
    std::size_t input_dim = 0;   // d
    std::size_t code_bits = 0;   // b
    std::size_t num_classes = 0; // K
    Matrix w1;                   // b x d
    std::vector<double> b1;      // b
    Matrix w2;                   // K x b
    std::vector<double> b2;      // K

    static HashHeadParams zeros(std::size_t d, std::size_t b, std::size_t k);
    // Symmetric uniform init scaled by 1/sqrt(fan_in), biases zero.
    static HashHeadParams init(std::size_t d, std::size_t b, std::size_t k, Rng& rng);
};

using HashHeadGrads = HashHeadParams; // same shapes

struct ForwardTrace {
    std::vector<double> input;  // x
    std::vector<double> preact; // W1 x + b1
    std::vector<double> code;   // sigmoid(preact), entries in (0,1)
    std::vector<double> logits; // W2 code + b2
    std::vector<double> probs;  // softmax(logits)
};

struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
};

struct TrainConfig {
    double margin = 1.0;
    double alpha = 1.0;
    double beta = 1.0;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t epochs = 100;
    std::size_t batch_triplets = 32; // N
    std::size_t frames_per_sample = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

ForwardTrace forward(const HashHeadParams& params, std::span<const double> x);

// Hinge on the gap between anchor-positive and anchor-negative squared L2
// distances of the codes, margin m. At the exact hinge boundary the zero
// branch applies.
double triplet_loss(std::span<const double> anchor_code, std::span<const double> positive_code,
                    std::span<const double> negative_code, double margin);

// Sum (not mean) of -ln p[true] over all traces. Probabilities that underflow
// are clamped at 1e-300; `underflow_flag` is set when that happens.
double classification_loss(const std::vector<ForwardTrace>& traces,
                           const std::vector<int>& labels, bool* underflow_flag = nullptr);

// alpha * sum of triplet losses + beta * classification loss.
double total_loss(const std::vector<double>& triplet_losses, double classification,
                  const TrainConfig& cfg);

// One triplet's forward traces and labels, as produced during a batch.
struct TripletTrace {
    ForwardTrace anchor, positive, negative;
    int anchor_label = 0, positive_label = 0, negative_label = 0;
};

// Exact analytic gradient of the combined loss over the batch.
HashHeadGrads backward(const HashHeadParams& params, const std::vector<TripletTrace>& batch,
                       const TrainConfig& cfg);

// Classical momentum: v <- momentum*v - lr*g; params <- params + v.
void sgd_step(HashHeadParams& params, const HashHeadGrads& grads, HashHeadGrads& velocity,
              const TrainConfig& cfg);

// Uniform triplet sampling: anchor uniform over videos, positive uniform over
// same-class others, negative uniform over other classes.
std::vector<Triplet> sample_triplets(const Dataset& ds, Rng& rng, std::size_t count);

struct TrainResult {
    HashHeadParams params;
    std::vector<double> loss_history; // summed batch losses per epoch
};

// Full training loop. Per epoch: resample triplets, resample
// `frames_per_sample` frames per triplet member (uniform average), run
// forward/backward/sgd over mini-batches. Deterministic per seed.
TrainResult train(const Dataset& ds, const Matrix& frame_features,
                  const std::vector<VideoRecord>& records, const TrainConfig& cfg,
                  std::size_t code_bits);

// Model file "BHH1": u32 version, u32 d, u32 b, u32 K, then W1,b1,W2,b2 as
// little-endian f64 row-major, then a u32-length-prefixed JSON TrainConfig.
void save_model(const std::string& path, const HashHeadParams& params, const TrainConfig& cfg);
std::pair<HashHeadParams, TrainConfig> load_model(const std::string& path);

} // namespace bhash
