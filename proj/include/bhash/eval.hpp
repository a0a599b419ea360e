#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bhash/dataset.hpp"
#include "bhash/hash_head.hpp"
#include "bhash/matrix.hpp"

namespace bhash {

// Ranked retrieval results for a query set, with class-label relevance.
struct RetrievalRun {
    std::vector<std::vector<int>> neighbor_labels; // per query, ranked
    std::vector<int> query_labels;
    std::size_t cutoff = 10;                   // k
    std::vector<std::size_t> relevant_counts;  // R_q per query
};

// AP@k = sum of precision-at-hit over the first k ranks, normalized by
// min(R, k). Defined as 0 when R = 0.
double average_precision(const std::vector<int>& relevance, std::size_t k,
                         std::size_t relevant_total);

// Mean of per-query AP@k.
double map_at_k(const RetrievalRun& run);

struct ComparisonCell {
    std::string method;
    std::size_t bits = 0;
    double map = 0.0;
    std::size_t queries = 0;
    std::size_t k = 0;
    double seconds = 0.0;
    std::string error; // empty on success
};

struct ComparisonReport {
    std::vector<ComparisonCell> cells;
    std::string config_echo;
};

// Everything run_comparison needs: the frame-level features for training the
// head, the fused dataset, and a database/query split of it.
struct ComparisonInput {
    const Matrix* frame_features = nullptr;
    const std::vector<VideoRecord>* records = nullptr; // aligned with `fused` rows
    const Dataset* fused = nullptr;
    std::vector<std::size_t> database_indices;
    std::vector<std::size_t> query_indices;
    TrainConfig train_cfg;
    std::size_t k = 10;
    std::size_t itq_iterations = 50;
};

// For each (method, bits): fit or train, encode database and queries, search,
// and compute mAP@k. Failures are recorded per cell; other cells still run.
// Methods: ours, lsh, pca_rr, itq, sh.
ComparisonReport run_comparison(const std::vector<std::string>& methods,
                                const std::vector<std::size_t>& bit_lengths,
                                const ComparisonInput& input);

// CSV with header method,bits,map,queries,k,seconds. With include_timing off
// the seconds column is written as 0 so report bytes are seed-reproducible.
void write_report_csv(const std::string& path, const ComparisonReport& report,
                      bool include_timing = true);
std::string format_report_table(const ComparisonReport& report, bool include_timing = true);

} // namespace bhash
