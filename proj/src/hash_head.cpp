#include "bhash/hash_head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bhash {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

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
    // Little-endian host assumed for the fast path; byte-swap otherwise.
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

void read_f64_block(std::istream& in, double* data, std::size_t count, const std::string& path) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw std::runtime_error(path + ": truncated payload");
}

} // namespace

void TrainConfig::validate() const {
    if (margin <= 0.0) throw std::invalid_argument("config: margin must be > 0");
    if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("config: alpha/beta must be >= 0");
    if (alpha == 0.0 && beta == 0.0)
        throw std::invalid_argument("config: alpha and beta cannot both be 0");
    if (learning_rate < 0.0) throw std::invalid_argument("config: learning_rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("config: momentum must be in [0,1)");
    if (batch_triplets == 0) throw std::invalid_argument("config: batch_triplets must be >= 1");
    if (frames_per_sample == 0) throw std::invalid_argument("config: frames_per_sample must be >= 1");
}

HashHeadParams HashHeadParams::zeros(std::size_t d, std::size_t b, std::size_t k) {
    HashHeadParams p;
    p.input_dim = d;
    p.code_bits = b;
    p.num_classes = k;
    p.w1 = Matrix(b, d);
    p.b1.assign(b, 0.0);
    p.w2 = Matrix(k, b);
    p.b2.assign(k, 0.0);
    return p;
}

HashHeadParams HashHeadParams::init(std::size_t d, std::size_t b, std::size_t k, Rng& rng) {
    HashHeadParams p = zeros(d, b, k);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : p.w1.data) v = (2.0 * rng.next_double() - 1.0) * s1;
    const double s2 = 1.0 / std::sqrt(static_cast<double>(b));
    for (double& v : p.w2.data) v = (2.0 * rng.next_double() - 1.0) * s2;
    return p;
}

ForwardTrace forward(const HashHeadParams& params, std::span<const double> x) {
    if (x.size() != params.input_dim)
        throw std::invalid_argument("forward: input dim " + std::to_string(x.size()) +
                                    " != model dim " + std::to_string(params.input_dim));
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");

    ForwardTrace t;
    t.input.assign(x.begin(), x.end());
    t.preact.resize(params.code_bits);
    t.code.resize(params.code_bits);
    for (std::size_t i = 0; i < params.code_bits; ++i) {
        double a = params.b1[i];
        const double* wrow = params.w1.data.data() + i * params.input_dim;
        for (std::size_t j = 0; j < params.input_dim; ++j) a += wrow[j] * x[j];
        t.preact[i] = a;
        t.code[i] = sigmoid(a);
    }
    t.logits.resize(params.num_classes);
    for (std::size_t kk = 0; kk < params.num_classes; ++kk) {
        double z = params.b2[kk];
        const double* wrow = params.w2.data.data() + kk * params.code_bits;
        for (std::size_t j = 0; j < params.code_bits; ++j) z += wrow[j] * t.code[j];
        t.logits[kk] = z;
    }
    // Softmax with max subtraction.
    const double zmax = *std::max_element(t.logits.begin(), t.logits.end());
    t.probs.resize(params.num_classes);
    double sum = 0.0;
    for (std::size_t kk = 0; kk < params.num_classes; ++kk) {
        t.probs[kk] = std::exp(t.logits[kk] - zmax);
        sum += t.probs[kk];
    }
    for (double& p : t.probs) p /= sum;
    return t;
}

double triplet_loss(std::span<const double> anchor_code, std::span<const double> positive_code,
                    std::span<const double> negative_code, double margin) {
    if (anchor_code.size() != positive_code.size() ||
        anchor_code.size() != negative_code.size())
        throw std::invalid_argument("triplet_loss: code length mismatch");
    if (margin <= 0.0) throw std::invalid_argument("triplet_loss: margin must be > 0");
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < anchor_code.size(); ++i) {
        const double dp = anchor_code[i] - positive_code[i];
        const double dn = anchor_code[i] - negative_code[i];
        pos += dp * dp;
        neg += dn * dn;
    }
    return std::max(pos - neg + margin, 0.0);
}

double classification_loss(const std::vector<ForwardTrace>& traces,
                           const std::vector<int>& labels, bool* underflow_flag) {
    if (traces.size() != labels.size())
        throw std::invalid_argument("classification_loss: trace/label count mismatch");
    if (underflow_flag) *underflow_flag = false;
    double loss = 0.0;
    for (std::size_t n = 0; n < traces.size(); ++n) {
        const auto& p = traces[n].probs;
        const auto label = static_cast<std::size_t>(labels[n]);
        if (label >= p.size()) throw std::invalid_argument("classification_loss: label out of range");
        double pt = p[label];
        if (pt < 1e-300) {
            pt = 1e-300;
            if (underflow_flag) *underflow_flag = true;
        }
        loss -= std::log(pt);
    }
    return loss;
}

double total_loss(const std::vector<double>& triplet_losses, double classification,
                  const TrainConfig& cfg) {
    double l1 = 0.0;
    for (double v : triplet_losses) l1 += v;
    return cfg.alpha * l1 + cfg.beta * classification;
}

namespace {

// Accumulates one sample's classifier + code gradient. `code_grad_extra` is
// the triplet-loss derivative w.r.t. this sample's code (already alpha-scaled).
void accumulate_sample(const HashHeadParams& params, const ForwardTrace& t, int label,
                       const std::vector<double>& code_grad_extra, double beta,
                       HashHeadGrads& g) {
    const std::size_t b = params.code_bits;
    const std::size_t k = params.num_classes;
    const std::size_t d = params.input_dim;

    // dl/dz = beta * (p - onehot)
    std::vector<double> dz(k);
    for (std::size_t i = 0; i < k; ++i)
        dz[i] = beta * (t.probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));

    for (std::size_t i = 0; i < k; ++i) {
        g.b2[i] += dz[i];
        double* grow = g.w2.data.data() + i * b;
        for (std::size_t j = 0; j < b; ++j) grow[j] += dz[i] * t.code[j];
    }

    // dl/dF = W2^T dz + triplet term, then through the sigmoid.
    std::vector<double> df(code_grad_extra);
    for (std::size_t i = 0; i < k; ++i) {
        const double* wrow = params.w2.data.data() + i * b;
        for (std::size_t j = 0; j < b; ++j) df[j] += dz[i] * wrow[j];
    }
    for (std::size_t j = 0; j < b; ++j) {
        const double da = df[j] * t.code[j] * (1.0 - t.code[j]);
        g.b1[j] += da;
        double* grow = g.w1.data.data() + j * d;
        for (std::size_t i = 0; i < d; ++i) grow[i] += da * t.input[i];
    }
}

} // namespace

HashHeadGrads backward(const HashHeadParams& params, const std::vector<TripletTrace>& batch,
                       const TrainConfig& cfg) {
    HashHeadGrads g = HashHeadParams::zeros(params.input_dim, params.code_bits, params.num_classes);
    const std::size_t b = params.code_bits;

    for (const auto& trip : batch) {
        const auto& fa = trip.anchor.code;
        const auto& fp = trip.positive.code;
        const auto& fn = trip.negative.code;
        double pos = 0.0, neg = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            pos += (fa[i] - fp[i]) * (fa[i] - fp[i]);
            neg += (fa[i] - fn[i]) * (fa[i] - fn[i]);
        }
        // Zero branch at the exact boundary: strict inequality.
        const bool active = (pos - neg + cfg.margin) > 0.0;

        std::vector<double> da(b, 0.0), dp(b, 0.0), dn(b, 0.0);
        if (active) {
            for (std::size_t i = 0; i < b; ++i) {
                da[i] = cfg.alpha * 2.0 * (fn[i] - fp[i]);
                dp[i] = cfg.alpha * -2.0 * (fa[i] - fp[i]);
                dn[i] = cfg.alpha * 2.0 * (fa[i] - fn[i]);
            }
        }
        accumulate_sample(params, trip.anchor, trip.anchor_label, da, cfg.beta, g);
        accumulate_sample(params, trip.positive, trip.positive_label, dp, cfg.beta, g);
        accumulate_sample(params, trip.negative, trip.negative_label, dn, cfg.beta, g);
    }
    return g;
}

void sgd_step(HashHeadParams& params, const HashHeadGrads& grads, HashHeadGrads& velocity,
              const TrainConfig& cfg) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            p[i] += v[i];
            if (!std::isfinite(p[i]))
                throw std::runtime_error("sgd_step: non-finite parameter update");
        }
    };
    update(params.w1.data, grads.w1.data, velocity.w1.data);
    update(params.b1, grads.b1, velocity.b1);
    update(params.w2.data, grads.w2.data, velocity.w2.data);
    update(params.b2, grads.b2, velocity.b2);
}

std::vector<Triplet> sample_triplets(const Dataset& ds, Rng& rng, std::size_t count) {
    if (ds.num_classes < 2) throw std::runtime_error("sample_triplets: need at least 2 classes");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        if (by_class[k].size() < 2)
            throw std::runtime_error("sample_triplets: class " + std::to_string(k) +
                                     " has fewer than 2 videos");
    }

    std::vector<Triplet> out;
    out.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        Triplet trip;
        trip.anchor = rng.next_below(ds.size());
        const auto cls = static_cast<std::size_t>(ds.labels[trip.anchor]);
        const auto& same = by_class[cls];
        do {
            trip.positive = same[rng.next_below(same.size())];
        } while (trip.positive == trip.anchor);
        do {
            trip.negative = rng.next_below(ds.size());
        } while (static_cast<std::size_t>(ds.labels[trip.negative]) == cls);
        out.push_back(trip);
    }
    return out;
}

TrainResult train(const Dataset& ds, const Matrix& frame_features,
                  const std::vector<VideoRecord>& records, const TrainConfig& cfg,
                  std::size_t code_bits) {
    cfg.validate();
    if (records.size() != ds.size())
        throw std::invalid_argument("train: record/dataset size mismatch");
    if (cfg.epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");

    const std::size_t d = frame_features.cols;
    Rng rng(cfg.seed);
    TrainResult result;
    result.params = HashHeadParams::init(d, code_bits, static_cast<std::size_t>(ds.num_classes), rng);
    HashHeadGrads velocity =
        HashHeadParams::zeros(d, code_bits, static_cast<std::size_t>(ds.num_classes));

    const std::size_t batches_per_epoch =
        std::max<std::size_t>(1, (ds.size() + cfg.batch_triplets - 1) / cfg.batch_triplets);

    // Random frame subsample of one video, fused uniformly.
    auto sample_member = [&](std::size_t video) {
        const auto& rec = records[video];
        std::vector<double> fused(d, 0.0);
        const double w = 1.0 / static_cast<double>(cfg.frames_per_sample);
        for (std::size_t f = 0; f < cfg.frames_per_sample; ++f) {
            const std::size_t fi = rec.frame_start + rng.next_below(rec.frame_count);
            const auto frame = frame_features.row(fi);
            for (std::size_t j = 0; j < d; ++j) fused[j] += w * frame[j];
        }
        return fused;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t batch = 0; batch < batches_per_epoch; ++batch) {
            const auto triplets = sample_triplets(ds, rng, cfg.batch_triplets);
            std::vector<TripletTrace> traces;
            traces.reserve(triplets.size());
            std::vector<double> l1s;
            std::vector<ForwardTrace> flat;
            std::vector<int> flat_labels;
            for (const auto& trip : triplets) {
                TripletTrace tt;
                tt.anchor = forward(result.params, sample_member(trip.anchor));
                tt.positive = forward(result.params, sample_member(trip.positive));
                tt.negative = forward(result.params, sample_member(trip.negative));
                tt.anchor_label = ds.labels[trip.anchor];
                tt.positive_label = ds.labels[trip.positive];
                tt.negative_label = ds.labels[trip.negative];
                l1s.push_back(triplet_loss(tt.anchor.code, tt.positive.code, tt.negative.code,
                                           cfg.margin));
                flat.push_back(tt.anchor);
                flat.push_back(tt.positive);
                flat.push_back(tt.negative);
                flat_labels.push_back(tt.anchor_label);
                flat_labels.push_back(tt.positive_label);
                flat_labels.push_back(tt.negative_label);
                traces.push_back(std::move(tt));
            }
            const double l2 = classification_loss(flat, flat_labels);
            const double loss = total_loss(l1s, l2, cfg);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
            epoch_loss += loss;

            const HashHeadGrads grads = backward(result.params, traces, cfg);
            sgd_step(result.params, grads, velocity, cfg);
        }
        result.loss_history.push_back(epoch_loss);
    }
    return result;
}

void save_model(const std::string& path, const HashHeadParams& params, const TrainConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out.write("BHH1", 4);
    write_u32_le(out, 1);
    write_u32_le(out, static_cast<std::uint32_t>(params.input_dim));
    write_u32_le(out, static_cast<std::uint32_t>(params.code_bits));
    write_u32_le(out, static_cast<std::uint32_t>(params.num_classes));
    write_f64_block(out, params.w1.data.data(), params.w1.data.size());
    write_f64_block(out, params.b1.data(), params.b1.size());
    write_f64_block(out, params.w2.data.data(), params.w2.data.size());
    write_f64_block(out, params.b2.data(), params.b2.size());

    nlohmann::json j{{"margin", cfg.margin},
                     {"alpha", cfg.alpha},
                     {"beta", cfg.beta},
                     {"learning_rate", cfg.learning_rate},
                     {"momentum", cfg.momentum},
                     {"epochs", cfg.epochs},
                     {"batch_triplets", cfg.batch_triplets},
                     {"frames_per_sample", cfg.frames_per_sample},
                     {"seed", cfg.seed}};
    const std::string blob = j.dump();
    write_u32_le(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<HashHeadParams, TrainConfig> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "BHH1", 4) != 0)
        throw std::runtime_error(path + ": bad magic bytes (expected BHH1)");
    const std::uint32_t version = read_u32_le(in, path);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported model version " + std::to_string(version));
    const std::uint32_t d = read_u32_le(in, path);
    const std::uint32_t b = read_u32_le(in, path);
    const std::uint32_t k = read_u32_le(in, path);

    HashHeadParams params = HashHeadParams::zeros(d, b, k);
    read_f64_block(in, params.w1.data.data(), params.w1.data.size(), path);
    read_f64_block(in, params.b1.data(), params.b1.size(), path);
    read_f64_block(in, params.w2.data.data(), params.w2.data.size(), path);
    read_f64_block(in, params.b2.data(), params.b2.size(), path);

    const std::uint32_t blob_len = read_u32_le(in, path);
    std::string blob(blob_len, '\0');
    in.read(blob.data(), blob_len);
    if (static_cast<std::uint32_t>(in.gcount()) != blob_len)
        throw std::runtime_error(path + ": truncated config blob");
    const auto j = nlohmann::json::parse(blob);
    TrainConfig cfg;
    cfg.margin = j.value("margin", cfg.margin);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_triplets = j.value("batch_triplets", cfg.batch_triplets);
    cfg.frames_per_sample = j.value("frames_per_sample", cfg.frames_per_sample);
    cfg.seed = j.value("seed", cfg.seed);
    return {std::move(params), cfg};
}

} // namespace bhash
