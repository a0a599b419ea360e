#include "bhash/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bhash {

namespace {

constexpr char kFvecMagic[4] = {'F', 'V', 'E', 'C'};

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool has_csv_extension(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

Matrix load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    std::vector<double> data;
    std::size_t rows = 0, cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            double v;
            try {
                v = std::stod(cell);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ": bad number '" + cell + "' at row " +
                                         std::to_string(rows) + " col " + std::to_string(col));
            }
            if (!std::isfinite(v)) {
                throw std::runtime_error(path + ": non-finite entry at row " +
                                         std::to_string(rows) + " col " + std::to_string(col));
            }
            data.push_back(v);
            ++col;
        }
        if (rows == 0) {
            cols = col;
        } else if (col != cols) {
            throw std::runtime_error(path + ": ragged row " + std::to_string(rows));
        }
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(path + ": empty feature file");
    Matrix m(rows, cols);
    m.data = std::move(data);
    return m;
}

} // namespace

Matrix load_features(const std::string& path) {
    if (has_csv_extension(path)) return load_features_csv(path);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    unsigned char header[16];
    in.read(reinterpret_cast<char*>(header), 16);
    if (in.gcount() < 16) throw std::runtime_error(path + ": truncated header (offset 0)");
    if (std::memcmp(header, kFvecMagic, 4) != 0)
        throw std::runtime_error(path + ": bad magic bytes (offset 0)");
    const std::uint32_t version = read_u32_le(header + 4);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported FVEC version " + std::to_string(version) +
                                 " (offset 4)");
    const std::uint32_t n = read_u32_le(header + 8);
    const std::uint32_t d = read_u32_le(header + 12);

    Matrix m(n, d);
    std::vector<float> buf(static_cast<std::size_t>(n) * d);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float)) {
        throw std::runtime_error(path + ": truncated payload (offset " +
                                 std::to_string(16 + in.gcount()) + ")");
    }
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double v = static_cast<double>(buf[i]);
        if (!std::isfinite(v)) {
            throw std::runtime_error(path + ": non-finite entry at row " +
                                     std::to_string(i / d) + " col " + std::to_string(i % d));
        }
        m.data[i] = v;
    }
    return m;
}

void write_features(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write feature file: " + path);
    out.write(kFvecMagic, 4);
    write_u32_le(out, 1);
    write_u32_le(out, static_cast<std::uint32_t>(m.rows));
    write_u32_le(out, static_cast<std::uint32_t>(m.cols));
    std::vector<float> buf(m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) buf[i] = static_cast<float>(m.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Manifest load_manifest(const std::string& path, std::size_t feature_rows) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty manifest");
    if (line != "video_id,label,frame_start,frame_count")
        throw std::runtime_error(path + ": bad manifest header '" + line + "'");

    Manifest manifest;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, label_s, start_s, count_s;
        if (!std::getline(ss, id, ',') || !std::getline(ss, label_s, ',') ||
            !std::getline(ss, start_s, ',') || !std::getline(ss, count_s)) {
            throw std::runtime_error(path + ": malformed line " + std::to_string(lineno));
        }
        VideoRecord rec;
        rec.video_id = id;
        try {
            rec.label = std::stoi(label_s);
            rec.frame_start = std::stoul(start_s);
            rec.frame_count = std::stoul(count_s);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": bad numeric field at line " + std::to_string(lineno));
        }
        if (rec.label < 0)
            throw std::runtime_error(path + ": negative label at line " + std::to_string(lineno));
        if (rec.frame_count < 1)
            throw std::runtime_error(path + ": empty frame range at line " + std::to_string(lineno));
        manifest.records.push_back(std::move(rec));
    }
    if (manifest.records.empty()) throw std::runtime_error(path + ": no records");

    // Non-overlap of frame ranges: sort spans and check neighbours.
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    spans.reserve(manifest.records.size());
    for (const auto& r : manifest.records) {
        spans.emplace_back(r.frame_start, r.frame_start + r.frame_count);
        if (feature_rows > 0 && r.frame_start + r.frame_count > feature_rows) {
            throw std::runtime_error(path + ": frame range of '" + r.video_id +
                                     "' exceeds feature rows (" + std::to_string(feature_rows) + ")");
        }
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first < spans[i - 1].second)
            throw std::runtime_error(path + ": overlapping frame ranges");
    }

    int max_label = 0;
    for (const auto& r : manifest.records) max_label = std::max(max_label, r.label);
    std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
    for (const auto& r : manifest.records) seen[static_cast<std::size_t>(r.label)] = true;
    for (std::size_t k = 0; k < seen.size(); ++k) {
        if (!seen[k]) throw std::runtime_error(path + ": label gap at " + std::to_string(k));
    }
    manifest.num_classes = max_label + 1;
    return manifest;
}

FusionWeights FusionWeights::custom(std::vector<double> w) {
    double sum = 0.0;
    for (double v : w) {
        if (v < 0.0) throw std::invalid_argument("fusion weights must be non-negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("fusion weights must sum to 1 (got " + std::to_string(sum) + ")");
    FusionWeights fw;
    fw.mode = Mode::Custom;
    fw.weights = std::move(w);
    return fw;
}

std::vector<double> fuse_frames(const Matrix& features, const VideoRecord& rec,
                                const FusionWeights& w) {
    if (rec.frame_start + rec.frame_count > features.rows)
        throw std::invalid_argument("fuse_frames: frame range out of bounds");
    if (w.mode == FusionWeights::Mode::Custom && w.weights.size() != rec.frame_count)
        throw std::invalid_argument("fuse_frames: weight length " +
                                    std::to_string(w.weights.size()) + " != frame count " +
                                    std::to_string(rec.frame_count));
    std::vector<double> out(features.cols, 0.0);
    const double uniform = 1.0 / static_cast<double>(rec.frame_count);
    for (std::size_t f = 0; f < rec.frame_count; ++f) {
        const double wf = w.mode == FusionWeights::Mode::Uniform ? uniform : w.weights[f];
        const auto frame = features.row(rec.frame_start + f);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += wf * frame[j];
    }
    return out;
}

Dataset build_dataset(const Matrix& features, const Manifest& manifest, const FusionWeights& w) {
    Dataset ds;
    ds.num_classes = manifest.num_classes;
    ds.features = Matrix(manifest.records.size(), features.cols);
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& rec = manifest.records[i];
        const auto fused = fuse_frames(features, rec, w);
        std::copy(fused.begin(), fused.end(), ds.features.row(i).begin());
        ds.labels.push_back(rec.label);
        ds.ids.push_back(rec.video_id);
    }
    return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const Dataset& ds, Rng& rng, double query_fraction) {
    if (query_fraction <= 0.0 || query_fraction >= 1.0)
        throw std::invalid_argument("split: query_fraction must be in (0,1)");

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::vector<std::size_t> database, queries;
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        auto& members = by_class[k];
        if (members.size() < 2)
            throw std::runtime_error("split: class " + std::to_string(k) + " has fewer than 2 videos");
        // Fisher-Yates on the class members, then peel off the query share.
        for (std::size_t i = members.size() - 1; i > 0; --i) {
            const std::size_t j = rng.next_below(i + 1);
            std::swap(members[i], members[j]);
        }
        std::size_t n_query = static_cast<std::size_t>(
            std::llround(query_fraction * static_cast<double>(members.size())));
        n_query = std::clamp<std::size_t>(n_query, 1, members.size() - 1);
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < n_query ? queries : database).push_back(members[i]);
        }
    }
    std::sort(database.begin(), database.end());
    std::sort(queries.begin(), queries.end());
    return {std::move(database), std::move(queries)};
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.features = Matrix(indices.size(), ds.features.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = ds.features.row(indices[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(ds.labels[indices[i]]);
        out.ids.push_back(ds.ids[indices[i]]);
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, Rng& rng, double query_fraction) {
    auto [db_idx, q_idx] = split_indices(ds, rng, query_fraction);
    return {subset(ds, db_idx), subset(ds, q_idx)};
}

} // namespace bhash
