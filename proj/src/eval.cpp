#include "bhash/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bhash/baselines.hpp"
#include "bhash/index.hpp"

namespace bhash {

double average_precision(const std::vector<int>& relevance, std::size_t k,
                         std::size_t relevant_total) {
    if (k == 0) throw std::invalid_argument("average_precision: cutoff must be >= 1");
    if (relevant_total == 0) return 0.0;
    const std::size_t depth = std::min(k, relevance.size());
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (relevance[i]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(relevant_total, k));
}

double map_at_k(const RetrievalRun& run) {
    if (run.query_labels.empty()) throw std::invalid_argument("map_at_k: empty query set");
    if (run.neighbor_labels.size() != run.query_labels.size() ||
        run.relevant_counts.size() != run.query_labels.size())
        throw std::invalid_argument("map_at_k: inconsistent run");
    double sum = 0.0;
    for (std::size_t q = 0; q < run.query_labels.size(); ++q) {
        std::vector<int> rel(run.neighbor_labels[q].size());
        for (std::size_t i = 0; i < rel.size(); ++i)
            rel[i] = run.neighbor_labels[q][i] == run.query_labels[q] ? 1 : 0;
        sum += average_precision(rel, run.cutoff, run.relevant_counts[q]);
    }
    return sum / static_cast<double>(run.query_labels.size());
}

namespace {

// Builds a retrieval run from packed code sets; queries already present in the
// database (same id) are dropped from their own result list.
RetrievalRun run_queries(const PackedCodeSet& db, const PackedCodeSet& queries, std::size_t k) {
    RetrievalRun run;
    run.cutoff = k;
    std::map<int, std::size_t> label_counts;
    for (int label : db.labels) ++label_counts[label];
    std::set<std::string> db_ids(db.ids.begin(), db.ids.end());

    for (std::size_t q = 0; q < queries.count; ++q) {
        const bool self_in_db = db_ids.count(queries.ids[q]) > 0;
        // Fetch one extra when the query may appear in its own results.
        const auto result = search_topk(db, queries.code(q), k + (self_in_db ? 1 : 0));
        std::vector<int> labels;
        for (const auto& hit : result.hits) {
            if (self_in_db && hit.id == queries.ids[q]) continue;
            labels.push_back(hit.label);
            if (labels.size() == k) break;
        }
        const int qlabel = queries.labels[q];
        std::size_t relevant = label_counts.count(qlabel) ? label_counts[qlabel] : 0;
        if (self_in_db && relevant > 0) --relevant;
        run.neighbor_labels.push_back(std::move(labels));
        run.query_labels.push_back(qlabel);
        run.relevant_counts.push_back(relevant);
    }
    return run;
}

} // namespace

ComparisonReport run_comparison(const std::vector<std::string>& methods,
                                const std::vector<std::size_t>& bit_lengths,
                                const ComparisonInput& input) {
    if (!input.frame_features || !input.records || !input.fused)
        throw std::invalid_argument("run_comparison: missing input data");

    const Dataset database = subset(*input.fused, input.database_indices);
    const Dataset queries = subset(*input.fused, input.query_indices);
    std::vector<VideoRecord> db_records;
    db_records.reserve(input.database_indices.size());
    for (std::size_t i : input.database_indices) db_records.push_back((*input.records)[i]);

    ComparisonReport report;
    {
        std::ostringstream echo;
        echo << "k=" << input.k << " seed=" << input.train_cfg.seed
             << " database=" << database.size() << " queries=" << queries.size();
        report.config_echo = echo.str();
    }

    for (const auto& method : methods) {
        for (std::size_t bits : bit_lengths) {
            ComparisonCell cell;
            cell.method = method;
            cell.bits = bits;
            cell.k = input.k;
            cell.queries = queries.size();
            const auto t0 = std::chrono::steady_clock::now();
            try {
                PackedCodeSet db_codes = PackedCodeSet::empty(1);
                PackedCodeSet query_codes = PackedCodeSet::empty(1);
                Rng rng(input.train_cfg.seed);
                if (method == "ours") {
                    TrainConfig cfg = input.train_cfg;
                    auto trained = train(database, *input.frame_features, db_records, cfg, bits);
                    db_codes = encode_dataset(trained.params, database);
                    query_codes = encode_dataset(trained.params, queries);
                } else if (method == "lsh") {
                    const auto h = fit_lsh(database.features, bits, rng);
                    db_codes = encode_dataset(h, database);
                    query_codes = encode_dataset(h, queries);
                } else if (method == "pca_rr") {
                    const auto h = fit_pca_rr(database.features, bits, rng);
                    db_codes = encode_dataset(h, database);
                    query_codes = encode_dataset(h, queries);
                } else if (method == "itq") {
                    const auto [h, state] =
                        fit_itq(database.features, bits, input.itq_iterations, rng);
                    db_codes = encode_dataset(h, database);
                    query_codes = encode_dataset(h, queries);
                } else if (method == "sh") {
                    const auto h = fit_sh(database.features, bits);
                    db_codes = encode_dataset(h, database);
                    query_codes = encode_dataset(h, queries);
                } else {
                    throw std::invalid_argument("unknown method '" + method + "'");
                }
                const auto run = run_queries(db_codes, query_codes, input.k);
                cell.map = map_at_k(run);
            } catch (const std::exception& e) {
                cell.error = e.what();
                cell.map = std::nan("");
            }
            cell.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

void write_report_csv(const std::string& path, const ComparisonReport& report,
                      bool include_timing) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << "method,bits,map,queries,k,seconds\n";
    for (const auto& cell : report.cells) {
        out << cell.method << ',' << cell.bits << ',';
        if (cell.error.empty())
            out << std::setprecision(12) << cell.map;
        else
            out << "nan";
        out << ',' << cell.queries << ',' << cell.k << ',';
        if (include_timing)
            out << std::setprecision(6) << cell.seconds;
        else
            out << 0;
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string format_report_table(const ComparisonReport& report, bool include_timing) {
    // One row per method, one column per code length, mirroring the usual
    // method x bits comparison layout.
    std::vector<std::string> methods;
    std::vector<std::size_t> bit_lengths;
    for (const auto& cell : report.cells) {
        if (std::find(methods.begin(), methods.end(), cell.method) == methods.end())
            methods.push_back(cell.method);
        if (std::find(bit_lengths.begin(), bit_lengths.end(), cell.bits) == bit_lengths.end())
            bit_lengths.push_back(cell.bits);
    }

    std::ostringstream out;
    out << "# " << report.config_echo << "\n";
    out << std::left << std::setw(10) << "method";
    for (std::size_t b : bit_lengths) out << std::right << std::setw(10) << (std::to_string(b) + "bits");
    if (include_timing) out << std::right << std::setw(12) << "seconds";
    out << "\n";
    for (const auto& method : methods) {
        out << std::left << std::setw(10) << method;
        double total_seconds = 0.0;
        for (std::size_t b : bit_lengths) {
            const auto it = std::find_if(report.cells.begin(), report.cells.end(),
                                         [&](const ComparisonCell& c) {
                                             return c.method == method && c.bits == b;
                                         });
            if (it == report.cells.end()) {
                out << std::right << std::setw(10) << "-";
                continue;
            }
            total_seconds += it->seconds;
            if (!it->error.empty())
                out << std::right << std::setw(10) << "ERR";
            else
                out << std::right << std::setw(10) << std::fixed << std::setprecision(4) << it->map;
        }
        if (include_timing)
            out << std::right << std::setw(12) << std::fixed << std::setprecision(3)
                << total_seconds;
        out << "\n";
    }
    for (const auto& cell : report.cells) {
        if (!cell.error.empty())
            out << "# " << cell.method << "@" << cell.bits << " failed: " << cell.error << "\n";
    }
    return out.str();
}

} // namespace bhash
