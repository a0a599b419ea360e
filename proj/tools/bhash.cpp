// Command-line surface for the hashing toolkit: synthetic data generation,
// head training, baseline fitting, encoding, search, evaluation, and a
// Hamming-scan benchmark.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bhash/baselines.hpp"
#include "bhash/dataset.hpp"
#include "bhash/eval.hpp"
#include "bhash/hash_head.hpp"
#include "bhash/index.hpp"
#include "bhash/rng.hpp"
#include "bhash/synth.hpp"

namespace {

using bhash::Dataset;
using bhash::Matrix;
using bhash::Rng;
using bhash::TrainConfig;

// Precedence: flag > config file > default. Options the user did not pass on
// the command line are overwritten from the JSON config when present.
void apply_config_file(CLI::App* cmd, const std::string& config_path, TrainConfig& cfg,
                       std::size_t* bits, std::size_t* k) {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    nlohmann::json j;
    in >> j;
    auto take = [&](const char* flag, const char* key, auto& target) {
        const auto* opt = cmd->get_option_no_throw(flag);
        const bool passed = opt != nullptr && opt->count() > 0;
        if (!passed && j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    take("--margin", "margin", cfg.margin);
    take("--alpha", "alpha", cfg.alpha);
    take("--beta", "beta", cfg.beta);
    take("--lr", "learning_rate", cfg.learning_rate);
    take("--momentum", "momentum", cfg.momentum);
    take("--epochs", "epochs", cfg.epochs);
    take("--batch-triplets", "batch_triplets", cfg.batch_triplets);
    take("--frames-per-sample", "frames_per_sample", cfg.frames_per_sample);
    take("--seed", "seed", cfg.seed);
    if (bits) take("--bits", "bits", *bits);
    if (k) take("--k", "k", *k);
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
    cmd->add_option("--margin", cfg.margin, "triplet margin m (> 0)");
    cmd->add_option("--alpha", cfg.alpha, "triplet loss weight");
    cmd->add_option("--beta", cfg.beta, "classification loss weight");
    cmd->add_option("--lr", cfg.learning_rate, "learning rate");
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum in [0,1)");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--batch-triplets", cfg.batch_triplets, "triplets per mini-batch");
    cmd->add_option("--frames-per-sample", cfg.frames_per_sample,
                    "frames sampled per triplet member");
}

Dataset load_fused(const std::string& features_path, const std::string& manifest_path) {
    const Matrix features = bhash::load_features(features_path);
    const auto manifest = bhash::load_manifest(manifest_path, features.rows);
    return bhash::build_dataset(features, manifest);
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    if (out.empty()) throw std::runtime_error("empty list: " + csv);
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (out.empty()) throw std::runtime_error("empty list: " + csv);
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Learned binary hashing retrieval toolkit"};
    app.require_subcommand(1);

    // ---- synth ----
    bhash::SyntheticSpec spec;
    std::string synth_features, synth_manifest;
    auto* synth = app.add_subcommand("synth", "generate a synthetic FVEC + manifest dataset");
    synth->add_option("--classes", spec.classes, "number of classes");
    synth->add_option("--videos-per-class", spec.videos_per_class, "videos per class");
    synth->add_option("--frames", spec.frames_per_video, "frames per video");
    synth->add_option("--dim", spec.dim, "feature dimension");
    synth->add_option("--separation", spec.cluster_separation, "pairwise center distance");
    synth->add_option("--sigma", spec.noise_sigma, "frame noise sigma");
    synth->add_option("--seed", spec.seed, "random seed");
    synth->add_option("--features", synth_features, "output FVEC path")->required();
    synth->add_option("--manifest", synth_manifest, "output manifest CSV path")->required();

    // ---- train ----
    TrainConfig train_cfg;
    std::string train_features, train_manifest, train_out, train_config;
    std::size_t train_bits = 32;
    auto* train_cmd = app.add_subcommand("train", "train the hashing head");
    train_cmd->add_option("--features", train_features, "FVEC frame features")->required();
    train_cmd->add_option("--manifest", train_manifest, "manifest CSV")->required();
    train_cmd->add_option("--out", train_out, "output model file (BHH1)")->required();
    train_cmd->add_option("--bits", train_bits, "code length in bits");
    train_cmd->add_option("--seed", train_cfg.seed, "random seed");
    train_cmd->add_option("--config", train_config, "JSON config file");
    add_train_flags(train_cmd, train_cfg);

    // ---- fit-baseline ----
    std::string fb_method = "lsh", fb_features, fb_manifest, fb_out;
    std::size_t fb_bits = 32, fb_itq_iters = 50;
    std::uint64_t fb_seed = 0;
    auto* fit_cmd = app.add_subcommand("fit-baseline", "fit a classic hashing baseline");
    fit_cmd->add_option("--method", fb_method, "lsh | pca_rr | itq | sh")->required();
    fit_cmd->add_option("--features", fb_features, "FVEC frame features")->required();
    fit_cmd->add_option("--manifest", fb_manifest, "manifest CSV")->required();
    fit_cmd->add_option("--out", fb_out, "output hasher file (BLH1)")->required();
    fit_cmd->add_option("--bits", fb_bits, "code length in bits");
    fit_cmd->add_option("--itq-iterations", fb_itq_iters, "ITQ iterations");
    fit_cmd->add_option("--seed", fb_seed, "random seed");

    // ---- encode ----
    std::string enc_model, enc_hasher, enc_features, enc_manifest, enc_out;
    auto* enc_cmd = app.add_subcommand("encode", "encode fused videos into packed codes");
    enc_cmd->add_option("--model", enc_model, "trained head file (BHH1)");
    enc_cmd->add_option("--hasher", enc_hasher, "baseline hasher file (BLH1)");
    enc_cmd->add_option("--features", enc_features, "FVEC frame features")->required();
    enc_cmd->add_option("--manifest", enc_manifest, "manifest CSV")->required();
    enc_cmd->add_option("--out", enc_out, "output code file (BHC1)")->required();

    // ---- search ----
    std::string srch_db, srch_queries;
    std::size_t srch_k = 10, srch_threads = 1;
    auto* srch_cmd = app.add_subcommand("search", "top-k Hamming search");
    srch_cmd->add_option("--db", srch_db, "database code file (BHC1)")->required();
    srch_cmd->add_option("--queries", srch_queries, "query code file (BHC1)")->required();
    srch_cmd->add_option("--k", srch_k, "neighbors per query");
    srch_cmd->add_option("--threads", srch_threads, "scan shards");

    // ---- eval ----
    TrainConfig eval_cfg;
    std::string eval_features, eval_manifest, eval_methods = "ours,lsh,pca_rr,itq,sh";
    std::string eval_bits = "32", eval_csv, eval_config;
    std::size_t eval_k = 10, eval_itq_iters = 50;
    double eval_query_fraction = 0.2;
    bool eval_no_timing = false;
    auto* eval_cmd = app.add_subcommand("eval", "method x code-length mAP comparison");
    eval_cmd->add_option("--features", eval_features, "FVEC frame features")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV")->required();
    eval_cmd->add_option("--methods", eval_methods, "comma list: ours,lsh,pca_rr,itq,sh");
    eval_cmd->add_option("--bits", eval_bits, "comma list of code lengths");
    eval_cmd->add_option("--k", eval_k, "mAP cutoff");
    eval_cmd->add_option("--query-fraction", eval_query_fraction, "query share per class");
    eval_cmd->add_option("--itq-iterations", eval_itq_iters, "ITQ iterations");
    eval_cmd->add_option("--csv", eval_csv, "output report CSV path");
    eval_cmd->add_option("--seed", eval_cfg.seed, "random seed");
    eval_cmd->add_option("--config", eval_config, "JSON config file");
    eval_cmd->add_flag("--no-timing", eval_no_timing,
                       "write zero seconds so report bytes are reproducible");
    add_train_flags(eval_cmd, eval_cfg);

    // ---- bench ----
    std::size_t bench_n = 100000, bench_bits = 64, bench_k = 10, bench_threads = 1,
                bench_queries = 100;
    std::uint64_t bench_seed = 0;
    auto* bench_cmd = app.add_subcommand("bench", "Hamming scan throughput benchmark");
    bench_cmd->add_option("--n", bench_n, "database size");
    bench_cmd->add_option("--bits", bench_bits, "code length");
    bench_cmd->add_option("--k", bench_k, "neighbors per query");
    bench_cmd->add_option("--queries", bench_queries, "number of benchmark queries");
    bench_cmd->add_option("--threads", bench_threads, "scan shards");
    bench_cmd->add_option("--seed", bench_seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        const auto data = bhash::make_synthetic(spec);
        bhash::write_features(synth_features, data.frame_features);
        std::ofstream out(synth_manifest);
        if (!out) throw std::runtime_error("cannot write manifest: " + synth_manifest);
        out << "video_id,label,frame_start,frame_count\n";
        for (const auto& rec : data.manifest.records)
            out << rec.video_id << ',' << rec.label << ',' << rec.frame_start << ','
                << rec.frame_count << '\n';
        std::cout << "wrote " << data.frame_features.rows << " frames ("
                  << data.manifest.records.size() << " videos, " << spec.dim << " dims) to "
                  << synth_features << "\n";
    } else if (train_cmd->parsed()) {
        apply_config_file(train_cmd, train_config, train_cfg, &train_bits, nullptr);
        const Matrix features = bhash::load_features(train_features);
        const auto manifest = bhash::load_manifest(train_manifest, features.rows);
        const Dataset ds = bhash::build_dataset(features, manifest);
        const auto result = bhash::train(ds, features, manifest.records, train_cfg, train_bits);
        bhash::save_model(train_out, result.params, train_cfg);
        std::cout << "epoch,loss\n";
        for (std::size_t e = 0; e < result.loss_history.size(); ++e)
            std::cout << e << ',' << result.loss_history[e] << '\n';
        std::cout << "model written to " << train_out << "\n";
    } else if (fit_cmd->parsed()) {
        const Dataset ds = load_fused(fb_features, fb_manifest);
        Rng rng(fb_seed);
        bhash::LinearHasher hasher;
        if (fb_method == "lsh") {
            hasher = bhash::fit_lsh(ds.features, fb_bits, rng);
        } else if (fb_method == "pca_rr") {
            hasher = bhash::fit_pca_rr(ds.features, fb_bits, rng);
        } else if (fb_method == "itq") {
            auto [h, state] = bhash::fit_itq(ds.features, fb_bits, fb_itq_iters, rng);
            hasher = std::move(h);
            std::cout << "itq loss: " << state.loss_history.front() << " -> "
                      << state.loss_history.back() << "\n";
        } else if (fb_method == "sh") {
            hasher = bhash::fit_sh(ds.features, fb_bits);
        } else {
            throw std::runtime_error("unknown baseline method '" + fb_method + "'");
        }
        bhash::save_hasher(fb_out, hasher);
        std::cout << "hasher written to " << fb_out << "\n";
    } else if (enc_cmd->parsed()) {
        if (enc_model.empty() == enc_hasher.empty())
            throw std::runtime_error("encode: pass exactly one of --model / --hasher");
        const Dataset ds = load_fused(enc_features, enc_manifest);
        bhash::PackedCodeSet codes = bhash::PackedCodeSet::empty(1);
        if (!enc_model.empty()) {
            const auto [params, cfg] = bhash::load_model(enc_model);
            codes = bhash::encode_dataset(params, ds);
        } else {
            const auto hasher = bhash::load_hasher(enc_hasher);
            codes = bhash::encode_dataset(hasher, ds);
        }
        bhash::save_codes(enc_out, codes);
        std::cout << "wrote " << codes.count << " codes of " << codes.bits << " bits to "
                  << enc_out << "\n";
    } else if (srch_cmd->parsed()) {
        const auto db = bhash::load_codes(srch_db);
        const auto queries = bhash::load_codes(srch_queries);
        if (db.bits != queries.bits)
            throw std::runtime_error("search: bit length mismatch (db " + std::to_string(db.bits) +
                                     " vs queries " + std::to_string(queries.bits) + ")");
        for (std::size_t q = 0; q < queries.count; ++q) {
            const auto result =
                bhash::search_topk_sharded(db, queries.code(q), srch_k, srch_threads);
            for (std::size_t r = 0; r < result.hits.size(); ++r)
                std::cout << queries.ids[q] << '\t' << (r + 1) << '\t' << result.hits[r].id
                          << '\t' << result.hits[r].distance << '\n';
        }
    } else if (eval_cmd->parsed()) {
        std::size_t dummy_bits = 0;
        apply_config_file(eval_cmd, eval_config, eval_cfg, &dummy_bits, &eval_k);
        const Matrix features = bhash::load_features(eval_features);
        const auto manifest = bhash::load_manifest(eval_manifest, features.rows);
        const Dataset fused = bhash::build_dataset(features, manifest);
        Rng split_rng(eval_cfg.seed);
        auto [db_idx, q_idx] = bhash::split_indices(fused, split_rng, eval_query_fraction);

        bhash::ComparisonInput input;
        input.frame_features = &features;
        input.records = &manifest.records;
        input.fused = &fused;
        input.database_indices = std::move(db_idx);
        input.query_indices = std::move(q_idx);
        input.train_cfg = eval_cfg;
        input.k = eval_k;
        input.itq_iterations = eval_itq_iters;

        const auto report = bhash::run_comparison(parse_string_list(eval_methods),
                                                  parse_size_list(eval_bits), input);
        std::cout << bhash::format_report_table(report, !eval_no_timing);
        if (!eval_csv.empty()) bhash::write_report_csv(eval_csv, report, !eval_no_timing);
        for (const auto& cell : report.cells)
            if (!cell.error.empty()) return 2;
    } else if (bench_cmd->parsed()) {
        Rng rng(bench_seed);
        bhash::PackedCodeSet db = bhash::PackedCodeSet::empty(bench_bits);
        const std::size_t words = db.words_per_code;
        std::vector<std::uint64_t> code(words);
        for (std::size_t i = 0; i < bench_n; ++i) {
            for (auto& w : code) w = rng.next_u64();
            if (bench_bits % 64 != 0) code.back() &= (std::uint64_t{1} << (bench_bits % 64)) - 1;
            db.add(code, "item" + std::to_string(i), -1);
        }
        std::vector<std::vector<std::uint64_t>> queries(bench_queries,
                                                        std::vector<std::uint64_t>(words));
        for (auto& q : queries) {
            for (auto& w : q) w = rng.next_u64();
            if (bench_bits % 64 != 0) q.back() &= (std::uint64_t{1} << (bench_bits % 64)) - 1;
        }

        // Single-thread and sharded scans must agree exactly.
        for (std::size_t q = 0; q < std::min<std::size_t>(bench_queries, 5); ++q) {
            const auto single = bhash::search_topk(db, queries[q], bench_k);
            const auto sharded = bhash::search_topk_sharded(db, queries[q], bench_k, bench_threads);
            for (std::size_t r = 0; r < single.hits.size(); ++r) {
                if (single.hits[r].index != sharded.hits[r].index ||
                    single.hits[r].distance != sharded.hits[r].distance)
                    throw std::runtime_error("bench: sharded scan diverged from single-thread scan");
            }
        }

        const auto t0 = std::chrono::steady_clock::now();
        std::uint64_t checksum = 0;
        for (const auto& q : queries) {
            const auto result = bhash::search_topk_sharded(db, q, bench_k, bench_threads);
            checksum += result.hits.front().distance;
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double throughput =
            static_cast<double>(bench_n) * static_cast<double>(bench_queries) / seconds;
        std::cout << "n=" << bench_n << " bits=" << bench_bits << " k=" << bench_k
                  << " threads=" << bench_threads << " queries=" << bench_queries << "\n";
        std::cout << "scan throughput: " << static_cast<std::uint64_t>(throughput)
                  << " codes/s (checksum " << checksum << ")\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
