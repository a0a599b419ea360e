#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "bhash/hash_head.hpp"
#include "bhash/synth.hpp"

using namespace bhash;

namespace {

// A random batch of triplet member inputs with labels; the anchor and positive
// share a label, the negative differs.
struct RawBatch {
    std::vector<std::array<std::vector<double>, 3>> inputs;
    std::vector<std::array<int, 3>> labels;
};

RawBatch random_batch(Rng& rng, std::size_t triplets, std::size_t d, std::size_t num_classes) {
    RawBatch batch;
    for (std::size_t t = 0; t < triplets; ++t) {
        std::array<std::vector<double>, 3> xs;
        for (auto& x : xs) {
            x.resize(d);
            for (auto& v : x) v = rng.next_gaussian();
        }
        const int same = static_cast<int>(rng.next_below(num_classes));
        int other = static_cast<int>(rng.next_below(num_classes));
        while (other == same) other = static_cast<int>(rng.next_below(num_classes));
        batch.inputs.push_back(std::move(xs));
        batch.labels.push_back({same, same, other});
    }
    return batch;
}

std::vector<TripletTrace> forward_batch(const HashHeadParams& params, const RawBatch& raw) {
    std::vector<TripletTrace> traces;
    for (std::size_t t = 0; t < raw.inputs.size(); ++t) {
        TripletTrace tt;
        tt.anchor = forward(params, raw.inputs[t][0]);
        tt.positive = forward(params, raw.inputs[t][1]);
        tt.negative = forward(params, raw.inputs[t][2]);
        tt.anchor_label = raw.labels[t][0];
        tt.positive_label = raw.labels[t][1];
        tt.negative_label = raw.labels[t][2];
        traces.push_back(std::move(tt));
    }
    return traces;
}

// Batch loss recomputed from scratch through the forward path only; this is
// the independent oracle the analytic gradient is checked against.
double batch_loss(const HashHeadParams& params, const RawBatch& raw, const TrainConfig& cfg) {
    std::vector<double> l1s;
    std::vector<ForwardTrace> flat;
    std::vector<int> flat_labels;
    for (std::size_t t = 0; t < raw.inputs.size(); ++t) {
        const auto fa = forward(params, raw.inputs[t][0]);
        const auto fp = forward(params, raw.inputs[t][1]);
        const auto fn = forward(params, raw.inputs[t][2]);
        l1s.push_back(triplet_loss(fa.code, fp.code, fn.code, cfg.margin));
        flat.push_back(fa);
        flat.push_back(fp);
        flat.push_back(fn);
        flat_labels.push_back(raw.labels[t][0]);
        flat_labels.push_back(raw.labels[t][1]);
        flat_labels.push_back(raw.labels[t][2]);
    }
    return total_loss(l1s, classification_loss(flat, flat_labels), cfg);
}

// Max relative error between analytic and central finite-difference gradients.
double gradient_check(HashHeadParams params, const RawBatch& raw, const TrainConfig& cfg,
                      double h = 1e-5) {
    const auto traces = forward_batch(params, raw);
    const HashHeadGrads grads = backward(params, traces, cfg);

    double worst = 0.0;
    auto check_block = [&](std::vector<double>& block, const std::vector<double>& grad_block) {
        for (std::size_t i = 0; i < block.size(); ++i) {
            const double saved = block[i];
            block[i] = saved + h;
            const double lp = batch_loss(params, raw, cfg);
            block[i] = saved - h;
            const double lm = batch_loss(params, raw, cfg);
            block[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double denom = std::max({1e-5, std::abs(fd), std::abs(grad_block[i])});
            worst = std::max(worst, std::abs(fd - grad_block[i]) / denom);
        }
    };
    check_block(params.w1.data, grads.w1.data);
    check_block(params.b1, grads.b1);
    check_block(params.w2.data, grads.w2.data);
    check_block(params.b2, grads.b2);
    return worst;
}

ForwardTrace trace_with_probs(std::vector<double> probs) {
    ForwardTrace t;
    t.probs = std::move(probs);
    return t;
}

} // namespace

TEST_CASE("forward degenerate weights") {
    HashHeadParams p = HashHeadParams::zeros(3, 4, 5);
    const std::vector<double> x{0.1, -0.2, 0.3};
    const ForwardTrace t = forward(p, x);
    for (double f : t.code) CHECK(f == 0.5);
    for (double pr : t.probs) CHECK(pr == doctest::Approx(0.2).epsilon(1e-12));
    const double sum = std::accumulate(t.probs.begin(), t.probs.end(), 0.0);
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("forward matches the scalar sigmoid oracle") {
    HashHeadParams p = HashHeadParams::zeros(1, 1, 2);
    p.w1.at(0, 0) = 1.0;
    p.w2.at(0, 0) = 2.0;
    p.w2.at(1, 0) = -1.0;
    const double x = std::log(0.7 / 0.3); // sigmoid^{-1}(0.7)
    const ForwardTrace t = forward(p, std::vector<double>{x});
    CHECK(t.code[0] == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(t.logits[0] == doctest::Approx(1.4).epsilon(1e-9));
    CHECK(t.logits[1] == doctest::Approx(-0.7).epsilon(1e-9));
    const double expected_p0 = std::exp(1.4) / (std::exp(1.4) + std::exp(-0.7));
    CHECK(t.probs[0] == doctest::Approx(expected_p0).epsilon(1e-12));
}

TEST_CASE("forward rejects bad input") {
    const HashHeadParams p = HashHeadParams::zeros(2, 2, 2);
    CHECK_THROWS(forward(p, std::vector<double>{1.0}));
    CHECK_THROWS(forward(p, std::vector<double>{1.0, std::nan("")}));
}

TEST_CASE("triplet loss examples") {
    const std::vector<double> f{0.3, 0.4};
    CHECK(triplet_loss(f, f, f, 1.0) == 1.0); // collapse case: loss = margin

    const std::vector<double> a{1, 0}, pos{1, 0}, neg{0, 1};
    CHECK(triplet_loss(a, pos, neg, 1.0) == 0.0);

    const std::vector<double> sa{0.2}, sp{0.8}, sn{0.3};
    CHECK(triplet_loss(sa, sp, sn, 0.5) == doctest::Approx(0.85).epsilon(1e-12));

    CHECK_THROWS(triplet_loss(a, pos, std::vector<double>{1.0}, 1.0));
}

TEST_CASE("triplet loss properties") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 1 + rng.next_below(16);
        std::vector<double> fa(b), fp(b), fn(b);
        for (std::size_t i = 0; i < b; ++i) {
            fa[i] = rng.next_double();
            fp[i] = rng.next_double();
            fn[i] = rng.next_double();
        }
        const double m = 0.1 + rng.next_double();
        const double loss = triplet_loss(fa, fp, fn, m);
        CHECK(loss >= 0.0);

        double dpos = 0.0, dneg = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            dpos += (fa[i] - fp[i]) * (fa[i] - fp[i]);
            dneg += (fa[i] - fn[i]) * (fa[i] - fn[i]);
        }
        if (dpos + m <= dneg) CHECK(loss == 0.0);

        // Invariance under a common coordinate permutation.
        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = b - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.next_below(i + 1)]);
        std::vector<double> pa(b), pp(b), pn(b);
        for (std::size_t i = 0; i < b; ++i) {
            pa[i] = fa[perm[i]];
            pp[i] = fp[perm[i]];
            pn[i] = fn[perm[i]];
        }
        CHECK(triplet_loss(pa, pp, pn, m) == doctest::Approx(loss).epsilon(1e-12));
    }
}

TEST_CASE("classification loss examples") {
    CHECK(classification_loss({trace_with_probs({0.25, 0.25, 0.25, 0.25})}, {2}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(classification_loss({trace_with_probs({0.0, 1.0})}, {1}) == 0.0);
    CHECK(classification_loss({trace_with_probs({0.5, 0.5}), trace_with_probs({0.25, 0.75})},
                              {0, 0}) ==
          doctest::Approx(std::log(2.0) + std::log(4.0)).epsilon(1e-12));

    bool underflow = false;
    const double clamped = classification_loss({trace_with_probs({0.0, 1.0})}, {0}, &underflow);
    CHECK(underflow);
    CHECK(clamped == doctest::Approx(-std::log(1e-300)));
}

TEST_CASE("total loss composition and linearity") {
    TrainConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = 1.0;
    CHECK(total_loss({0.85}, std::log(4.0), cfg) ==
          doctest::Approx(0.85 + std::log(4.0)).epsilon(1e-12));

    cfg.alpha = 0.0;
    cfg.beta = 2.5;
    CHECK(total_loss({10.0, 20.0}, 3.0, cfg) == doctest::Approx(7.5).epsilon(1e-12));

    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    CHECK(total_loss({0.0, 0.0}, 99.0, cfg) == 0.0);

    // Linear in alpha and beta separately.
    Rng rng(2);
    const std::vector<double> l1s{rng.next_double(), rng.next_double()};
    const double l2 = rng.next_double();
    TrainConfig a1, a2;
    a1.alpha = 0.4;
    a2.alpha = 0.8;
    a1.beta = a2.beta = 0.3;
    const double base = total_loss(l1s, l2, TrainConfig{.margin = 1, .alpha = 0, .beta = 0.3});
    CHECK(total_loss(l1s, l2, a2) - base ==
          doctest::Approx(2.0 * (total_loss(l1s, l2, a1) - base)).epsilon(1e-12));
}

TEST_CASE("backward is zero on the flat region") {
    TrainConfig cfg;
    cfg.beta = 0.0;
    Rng rng(7);
    HashHeadParams params = HashHeadParams::init(4, 3, 2, rng);

    // Make every triplet inactive: positive equals anchor, negative far away.
    RawBatch raw;
    std::vector<double> near{0.1, 0.2, 0.3, 0.4};
    std::vector<double> far{-30.0, 30.0, -30.0, 30.0};
    raw.inputs.push_back({near, near, far});
    raw.labels.push_back({0, 0, 1});
    cfg.margin = 1e-9; // tiny margin so the hinge stays inactive
    const auto traces = forward_batch(params, raw);
    REQUIRE(triplet_loss(traces[0].anchor.code, traces[0].positive.code,
                         traces[0].negative.code, cfg.margin) == 0.0);
    const HashHeadGrads g = backward(params, traces, cfg);
    for (double v : g.w1.data) CHECK(v == 0.0);
    for (double v : g.b1) CHECK(v == 0.0);
    for (double v : g.w2.data) CHECK(v == 0.0);
    for (double v : g.b2) CHECK(v == 0.0);
}

TEST_CASE("analytic gradient matches finite differences") {
    int active_seen = 0, inactive_seen = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        HashHeadParams params = HashHeadParams::init(10, 8, 4, rng);
        const RawBatch raw = random_batch(rng, 2, 10, 4);
        TrainConfig cfg;
        cfg.margin = 0.5 + rng.next_double();
        cfg.alpha = 0.5 + rng.next_double();
        cfg.beta = 0.5 + rng.next_double();

        const auto traces = forward_batch(params, raw);
        for (const auto& tt : traces) {
            const double l1 = triplet_loss(tt.anchor.code, tt.positive.code, tt.negative.code,
                                           cfg.margin);
            (l1 > 0.0 ? active_seen : inactive_seen) += 1;
        }
        CHECK(gradient_check(params, raw, cfg) < 1e-4);
    }
    CHECK(active_seen > 0); // the sweep must exercise both hinge branches
}

TEST_CASE("doubling alpha doubles the triplet gradient") {
    Rng rng(99);
    HashHeadParams params = HashHeadParams::init(6, 4, 3, rng);
    const RawBatch raw = random_batch(rng, 3, 6, 3);
    const auto traces = forward_batch(params, raw);

    TrainConfig c1, c2;
    c1.beta = c2.beta = 0.0;
    c1.alpha = 1.0;
    c2.alpha = 2.0;
    const HashHeadGrads g1 = backward(params, traces, c1);
    const HashHeadGrads g2 = backward(params, traces, c2);
    for (std::size_t i = 0; i < g1.w1.data.size(); ++i)
        CHECK(g2.w1.data[i] == 2.0 * g1.w1.data[i]);
    for (std::size_t i = 0; i < g1.b1.size(); ++i) CHECK(g2.b1[i] == 2.0 * g1.b1[i]);
}

TEST_CASE("sgd step examples") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    HashHeadParams p = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads g = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads v = HashHeadParams::zeros(1, 1, 1);
    g.w1.at(0, 0) = 2.0;
    sgd_step(p, g, v, cfg);
    CHECK(p.w1.at(0, 0) == doctest::Approx(-0.2).epsilon(1e-12)); // plain descent

    // Zero gradient leaves parameters unchanged.
    HashHeadParams q = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads zero = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads v2 = HashHeadParams::zeros(1, 1, 1);
    sgd_step(q, zero, v2, cfg);
    CHECK(q.w1.at(0, 0) == 0.0);

    // Two momentum steps on a constant gradient: -0.1g then -0.19g.
    cfg.momentum = 0.9;
    HashHeadParams r = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads cg = HashHeadParams::zeros(1, 1, 1);
    HashHeadGrads v3 = HashHeadParams::zeros(1, 1, 1);
    cg.w1.at(0, 0) = 1.0;
    sgd_step(r, cg, v3, cfg);
    CHECK(r.w1.at(0, 0) == doctest::Approx(-0.1).epsilon(1e-12));
    sgd_step(r, cg, v3, cfg);
    CHECK(r.w1.at(0, 0) == doctest::Approx(-0.29).epsilon(1e-12));
}

namespace {

Dataset labeled_dataset(std::size_t classes, std::size_t per_class) {
    Dataset ds;
    ds.num_classes = static_cast<int>(classes);
    ds.features = Matrix(classes * per_class, 2);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t v = 0; v < per_class; ++v) {
            ds.labels.push_back(static_cast<int>(c));
            ds.ids.push_back("c" + std::to_string(c) + "v" + std::to_string(v));
        }
    return ds;
}

} // namespace

TEST_CASE("triplet sampling invariants and statistics") {
    const Dataset ds = labeled_dataset(2, 2);
    Rng rng(5);
    const auto triplets = sample_triplets(ds, rng, 1000);
    REQUIRE(triplets.size() == 1000);
    std::vector<int> anchor_counts(4, 0);
    for (const auto& t : triplets) {
        CHECK(ds.labels[t.anchor] == ds.labels[t.positive]);
        CHECK(ds.labels[t.anchor] != ds.labels[t.negative]);
        CHECK(t.anchor != t.positive);
        ++anchor_counts[t.anchor];
    }
    for (int c : anchor_counts) {
        const double freq = c / 1000.0;
        CHECK(freq > 0.20);
        CHECK(freq < 0.30);
    }

    Rng rng2(5);
    const auto again = sample_triplets(ds, rng2, 1000);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        CHECK(triplets[i].anchor == again[i].anchor);
        CHECK(triplets[i].positive == again[i].positive);
        CHECK(triplets[i].negative == again[i].negative);
    }

    const Dataset single = labeled_dataset(1, 4);
    Rng rng3(0);
    CHECK_THROWS(sample_triplets(single, rng3, 1));
}

TEST_CASE("training loop on synthetic clusters") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.videos_per_class = 10;
    spec.frames_per_video = 4;
    spec.dim = 8;
    spec.cluster_separation = 6.0;
    spec.noise_sigma = 0.5;
    spec.seed = 1;
    const auto data = make_synthetic(spec);
    const Dataset ds = build_dataset(data.frame_features, data.manifest);

    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_triplets = 8;
    cfg.frames_per_sample = 4;
    cfg.seed = 7;

    const auto result = train(ds, data.frame_features, data.manifest.records, cfg, 8);
    REQUIRE(result.loss_history.size() == 50);
    CHECK(result.loss_history.back() < result.loss_history.front());

    // Bit-identical rerun.
    const auto again = train(ds, data.frame_features, data.manifest.records, cfg, 8);
    CHECK(result.params.w1.data == again.params.w1.data);
    CHECK(result.params.b1 == again.params.b1);
    CHECK(result.params.w2.data == again.params.w2.data);
    CHECK(result.params.b2 == again.params.b2);
    CHECK(result.loss_history == again.loss_history);

    // lr = 0 leaves the initialization untouched.
    TrainConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    frozen.epochs = 3;
    const auto untouched = train(ds, data.frame_features, data.manifest.records, frozen, 8);
    Rng init_rng(frozen.seed);
    const auto init = HashHeadParams::init(8, 8, 3, init_rng);
    CHECK(untouched.params.w1.data == init.w1.data);
    CHECK(untouched.params.w2.data == init.w2.data);
}

TEST_CASE("model file roundtrip") {
    Rng rng(13);
    HashHeadParams params = HashHeadParams::init(5, 4, 3, rng);
    TrainConfig cfg;
    cfg.margin = 0.7;
    cfg.seed = 13;

    const std::string path = "/tmp/bhash_model_test.bhh";
    save_model(path, params, cfg);
    const auto [loaded, loaded_cfg] = load_model(path);
    CHECK(loaded.input_dim == 5);
    CHECK(loaded.code_bits == 4);
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.w1.data == params.w1.data);
    CHECK(loaded.b2 == params.b2);
    CHECK(loaded_cfg.margin == 0.7);
    CHECK(loaded_cfg.seed == 13);
    std::remove(path.c_str());
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.margin = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS(cfg.validate());
}
