#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bhash/dataset.hpp"
#include "bhash/hash_head.hpp"

namespace bhash {

struct LinearHasher;

// Threshold binary-like values at 0.5; the boundary maps to 1.
std::vector<std::uint8_t> binarize(std::span<const double> code);

// LSB-first packing: bit i lives in word i/64 at position i%64.
std::vector<std::uint64_t> pack_bits(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> unpack_bits(std::span<const std::uint64_t> words, std::size_t bits);

// Popcount of XOR over the packed words.
std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

// Immutable set of packed codes with ids and optional labels (-1 = absent).
struct PackedCodeSet {
    std::size_t count = 0;
    std::size_t bits = 0;
    std::size_t words_per_code = 0;
    std::vector<std::uint64_t> payload;
    std::vector<std::string> ids;
    std::vector<int> labels;

    static PackedCodeSet empty(std::size_t bits);
    void add(std::span<const std::uint64_t> code, std::string id, int label);
    std::span<const std::uint64_t> code(std::size_t i) const {
        return {payload.data() + i * words_per_code, words_per_code};
    }
};

struct SearchHit {
    std::string id;
    std::uint32_t distance = 0;
    int label = -1;
    std::size_t index = 0;
};

struct SearchResult {
    std::vector<SearchHit> hits; // sorted by (distance, insertion index)
};

// Exact linear scan with a bounded max-heap; identical ordering to sorting all
// items by (distance, insertion index) and truncating to k.
SearchResult search_topk(const PackedCodeSet& db, std::span<const std::uint64_t> query,
                         std::size_t k);

// Sharded scan with deterministic merge; result equals the single-thread scan.
SearchResult search_topk_sharded(const PackedCodeSet& db, std::span<const std::uint64_t> query,
                                 std::size_t k, std::size_t threads);

PackedCodeSet encode_dataset(const HashHeadParams& params, const Dataset& ds);
PackedCodeSet encode_dataset(const LinearHasher& hasher, const Dataset& ds);

// Code file "BHC1": u32 version, u32 n, u32 bits, then per item u16 id length,
// the UTF-8 id, i32 label, and the packed little-endian words.
void save_codes(const std::string& path, const PackedCodeSet& set);
PackedCodeSet load_codes(const std::string& path);

} // namespace bhash
