#include "bhash/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <thread>

#include "bhash/baselines.hpp"

namespace bhash {

namespace {

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

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw std::runtime_error(path + ": truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

// Candidate ordering for the bounded heap: worst = largest (distance, index).
struct Candidate {
    std::uint32_t distance;
    std::size_t index;
    bool operator<(const Candidate& other) const {
        return distance != other.distance ? distance < other.distance : index < other.index;
    }
};

std::vector<Candidate> scan_range(const PackedCodeSet& db, std::span<const std::uint64_t> query,
                                  std::size_t k, std::size_t begin, std::size_t end) {
    std::priority_queue<Candidate> heap; // max at top
    for (std::size_t i = begin; i < end; ++i) {
        const Candidate c{hamming(db.code(i), query), i};
        if (heap.size() < k) {
            heap.push(c);
        } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
        }
    }
    std::vector<Candidate> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

SearchResult to_result(const PackedCodeSet& db, std::vector<Candidate> candidates) {
    SearchResult result;
    result.hits.reserve(candidates.size());
    for (const auto& c : candidates) {
        result.hits.push_back({db.ids[c.index], c.distance,
                               db.labels.empty() ? -1 : db.labels[c.index], c.index});
    }
    return result;
}

} // namespace

std::vector<std::uint8_t> binarize(std::span<const double> code) {
    std::vector<std::uint8_t> bits(code.size());
    for (std::size_t i = 0; i < code.size(); ++i) {
        if (!std::isfinite(code[i]))
            throw std::invalid_argument("binarize: non-finite entry at " + std::to_string(i));
        bits[i] = code[i] >= 0.5 ? 1 : 0;
    }
    return bits;
}

std::vector<std::uint64_t> pack_bits(const std::vector<std::uint8_t>& bits) {
    if (bits.empty()) throw std::invalid_argument("pack_bits: empty bit list");
    std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) words[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    return words;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint64_t> words, std::size_t bits) {
    std::vector<std::uint8_t> out(bits);
    for (std::size_t i = 0; i < bits; ++i)
        out[i] = static_cast<std::uint8_t>((words[i / 64] >> (i % 64)) & 1);
    return out;
}

std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("hamming: word count mismatch");
    std::uint32_t dist = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        dist += static_cast<std::uint32_t>(std::popcount(a[i] ^ b[i]));
    return dist;
}

PackedCodeSet PackedCodeSet::empty(std::size_t bits) {
    if (bits == 0) throw std::invalid_argument("PackedCodeSet: bits must be >= 1");
    PackedCodeSet set;
    set.bits = bits;
    set.words_per_code = (bits + 63) / 64;
    return set;
}

void PackedCodeSet::add(std::span<const std::uint64_t> code, std::string id, int label) {
    if (code.size() != words_per_code)
        throw std::invalid_argument("PackedCodeSet::add: word count mismatch");
    payload.insert(payload.end(), code.begin(), code.end());
    ids.push_back(std::move(id));
    labels.push_back(label);
    ++count;
}

SearchResult search_topk(const PackedCodeSet& db, std::span<const std::uint64_t> query,
                         std::size_t k) {
    if (db.count == 0) throw std::runtime_error("search: empty database");
    if (k == 0) throw std::invalid_argument("search: k must be >= 1");
    if (query.size() != db.words_per_code)
        throw std::invalid_argument("search: query word count mismatch");
    return to_result(db, scan_range(db, query, k, 0, db.count));
}

SearchResult search_topk_sharded(const PackedCodeSet& db, std::span<const std::uint64_t> query,
                                 std::size_t k, std::size_t threads) {
    if (db.count == 0) throw std::runtime_error("search: empty database");
    if (k == 0) throw std::invalid_argument("search: k must be >= 1");
    if (query.size() != db.words_per_code)
        throw std::invalid_argument("search: query word count mismatch");
    threads = std::clamp<std::size_t>(threads, 1, db.count);
    if (threads == 1) return search_topk(db, query, k);

    std::vector<std::vector<Candidate>> partials(threads);
    std::vector<std::thread> workers;
    const std::size_t chunk = (db.count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(db.count, begin + chunk);
        workers.emplace_back([&, t, begin, end] {
            partials[t] = scan_range(db, query, k, begin, end);
        });
    }
    for (auto& w : workers) w.join();

    std::vector<Candidate> merged;
    for (const auto& part : partials) merged.insert(merged.end(), part.begin(), part.end());
    std::sort(merged.begin(), merged.end());
    if (merged.size() > k) merged.resize(k);
    return to_result(db, std::move(merged));
}

PackedCodeSet encode_dataset(const HashHeadParams& params, const Dataset& ds) {
    if (ds.features.cols != params.input_dim)
        throw std::invalid_argument("encode: feature dim " + std::to_string(ds.features.cols) +
                                    " != model dim " + std::to_string(params.input_dim));
    PackedCodeSet set = PackedCodeSet::empty(params.code_bits);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const ForwardTrace trace = forward(params, ds.features.row(i));
        const auto words = pack_bits(binarize(trace.code));
        set.add(words, ds.ids[i], ds.labels.empty() ? -1 : ds.labels[i]);
    }
    return set;
}

PackedCodeSet encode_dataset(const LinearHasher& hasher, const Dataset& ds) {
    if (ds.features.cols != hasher.mean.size())
        throw std::invalid_argument("encode: feature dim " + std::to_string(ds.features.cols) +
                                    " != hasher dim " + std::to_string(hasher.mean.size()));
    PackedCodeSet set = PackedCodeSet::empty(hasher.bits());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto bits = encode_linear(hasher, ds.features.row(i));
        const auto words = pack_bits(bits);
        set.add(words, ds.ids[i], ds.labels.empty() ? -1 : ds.labels[i]);
    }
    return set;
}

void save_codes(const std::string& path, const PackedCodeSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write code file: " + path);
    out.write("BHC1", 4);
    write_u32_le(out, 1);
    write_u32_le(out, static_cast<std::uint32_t>(set.count));
    write_u32_le(out, static_cast<std::uint32_t>(set.bits));
    for (std::size_t i = 0; i < set.count; ++i) {
        const std::string& id = set.ids[i];
        const auto len = static_cast<std::uint16_t>(id.size());
        unsigned char lb[2] = {static_cast<unsigned char>(len & 0xFF),
                               static_cast<unsigned char>((len >> 8) & 0xFF)};
        out.write(reinterpret_cast<const char*>(lb), 2);
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        const std::int32_t label = set.labels.empty() ? -1 : set.labels[i];
        write_u32_le(out, static_cast<std::uint32_t>(label));
        for (std::uint64_t w : set.code(i)) write_u64_le(out, w);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

PackedCodeSet load_codes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open code file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "BHC1", 4) != 0)
        throw std::runtime_error(path + ": bad magic bytes (expected BHC1)");
    const std::uint32_t version = read_u32_le(in, path);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported code file version " +
                                 std::to_string(version));
    const std::uint32_t n = read_u32_le(in, path);
    const std::uint32_t bits = read_u32_le(in, path);
    PackedCodeSet set = PackedCodeSet::empty(bits);
    for (std::uint32_t i = 0; i < n; ++i) {
        unsigned char lb[2];
        in.read(reinterpret_cast<char*>(lb), 2);
        if (in.gcount() != 2) throw std::runtime_error(path + ": truncated id length");
        const std::uint16_t len =
            static_cast<std::uint16_t>(lb[0]) | (static_cast<std::uint16_t>(lb[1]) << 8);
        std::string id(len, '\0');
        in.read(id.data(), len);
        if (in.gcount() != len) throw std::runtime_error(path + ": truncated id");
        const auto label = static_cast<std::int32_t>(read_u32_le(in, path));
        std::vector<std::uint64_t> words(set.words_per_code);
        for (auto& w : words) w = read_u64_le(in, path);
        set.add(words, std::move(id), label);
    }
    return set;
}

} // namespace bhash
