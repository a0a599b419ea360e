#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "bhash/index.hpp"

namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("bhash_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }
};

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string out_file = fs::temp_directory_path() /
                                 ("bhash_cli_out_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd = std::string(BHASH_CLI_PATH) + " " + args + " >" + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(out_file);
        std::stringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    fs::remove(out_file);
    return WEXITSTATUS(status);
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("full pipeline: synth, train, encode, search, eval, bench") {
    Workspace ws;
    const std::string features = ws.file("data.fvec");
    const std::string manifest = ws.file("data.csv");

    CHECK(run_cli("synth --classes 3 --videos-per-class 8 --frames 3 --dim 12 "
                  "--separation 6 --sigma 0.8 --seed 1 --features " + features +
                  " --manifest " + manifest) == 0);
    CHECK(fs::exists(features));
    CHECK(fs::exists(manifest));

    const std::string model = ws.file("model.bhh");
    CHECK(run_cli("train --features " + features + " --manifest " + manifest +
                  " --out " + model + " --bits 16 --epochs 5 --seed 3") == 0);

    // Byte-identical model on rerun.
    const std::string model2 = ws.file("model2.bhh");
    CHECK(run_cli("train --features " + features + " --manifest " + manifest +
                  " --out " + model2 + " --bits 16 --epochs 5 --seed 3") == 0);
    CHECK(read_bytes(model) == read_bytes(model2));

    const std::string codes = ws.file("db.bhc");
    CHECK(run_cli("encode --model " + model + " --features " + features +
                  " --manifest " + manifest + " --out " + codes) == 0);
    const auto set = bhash::load_codes(codes);
    CHECK(set.count == 24);
    CHECK(set.bits == 16);

    // Re-encoding is idempotent.
    const std::string codes2 = ws.file("db2.bhc");
    CHECK(run_cli("encode --model " + model + " --features " + features +
                  " --manifest " + manifest + " --out " + codes2) == 0);
    CHECK(read_bytes(codes) == read_bytes(codes2));

    // Searching the database against itself puts each item first at distance 0.
    std::string search_out;
    CHECK(run_cli("search --db " + codes + " --queries " + codes + " --k 3", &search_out) == 0);
    std::stringstream ss(search_out);
    std::string line;
    bool first_line_checked = false;
    while (std::getline(ss, line) && !first_line_checked) {
        std::stringstream ls(line);
        std::string qid, rank, hit, dist;
        ls >> qid >> rank >> hit >> dist;
        CHECK(qid == hit);
        CHECK(dist == "0");
        first_line_checked = true;
    }
    CHECK(first_line_checked);

    const std::string report = ws.file("report.csv");
    std::string eval_out;
    CHECK(run_cli("eval --features " + features + " --manifest " + manifest +
                  " --methods lsh,pca_rr --bits 4,8 --k 5 --seed 9 --no-timing --csv " + report,
                  &eval_out) == 0);
    CHECK(eval_out.find("lsh") != std::string::npos);
    std::ifstream rep(report);
    std::string header;
    std::getline(rep, header);
    CHECK(header == "method,bits,map,queries,k,seconds");
    std::size_t rows = 0;
    while (std::getline(rep, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4); // |methods| x |bits|

    std::string bench_out;
    CHECK(run_cli("bench --n 2000 --bits 64 --k 5 --queries 10 --threads 2 --seed 4",
                  &bench_out) == 0);
    CHECK(bench_out.find("codes/s") != std::string::npos);
}

TEST_CASE("fit-baseline writes loadable hashers") {
    Workspace ws;
    const std::string features = ws.file("data.fvec");
    const std::string manifest = ws.file("data.csv");
    REQUIRE(run_cli("synth --classes 2 --videos-per-class 6 --frames 2 --dim 6 "
                    "--separation 4 --sigma 1 --seed 2 --features " + features +
                    " --manifest " + manifest) == 0);
    for (const std::string method : {"lsh", "pca_rr", "itq", "sh"}) {
        const std::string out = ws.file(method + ".blh");
        CHECK(run_cli("fit-baseline --method " + method + " --features " + features +
                      " --manifest " + manifest + " --bits 4 --seed 1 --out " + out) == 0);
        const std::string codes = ws.file(method + ".bhc");
        CHECK(run_cli("encode --hasher " + out + " --features " + features + " --manifest " +
                      manifest + " --out " + codes) == 0);
        CHECK(bhash::load_codes(codes).bits == 4);
    }
}

TEST_CASE("config file values are overridden by flags") {
    Workspace ws;
    const std::string features = ws.file("data.fvec");
    const std::string manifest = ws.file("data.csv");
    REQUIRE(run_cli("synth --classes 2 --videos-per-class 6 --frames 2 --dim 6 "
                    "--separation 4 --sigma 1 --seed 2 --features " + features +
                    " --manifest " + manifest) == 0);

    const std::string config = ws.file("cfg.json");
    {
        std::ofstream out(config);
        out << R"({"epochs": 2, "bits": 8, "seed": 5, "margin": 0.25})";
    }
    const std::string m1 = ws.file("m1.bhh");
    CHECK(run_cli("train --features " + features + " --manifest " + manifest + " --config " +
                  config + " --out " + m1) == 0);
    const auto [p1, c1] = bhash::load_model(m1);
    CHECK(p1.code_bits == 8);    // from file
    CHECK(c1.epochs == 2);       // from file
    CHECK(c1.margin == 0.25);    // from file
    CHECK(c1.seed == 5);         // from file

    const std::string m2 = ws.file("m2.bhh");
    CHECK(run_cli("train --features " + features + " --manifest " + manifest + " --config " +
                  config + " --bits 4 --seed 6 --out " + m2) == 0);
    const auto [p2, c2] = bhash::load_model(m2);
    CHECK(p2.code_bits == 4); // flag wins
    CHECK(c2.seed == 6);      // flag wins
    CHECK(c2.epochs == 2);    // file still applies where no flag given
}

TEST_CASE("error paths exit nonzero with a diagnostic") {
    Workspace ws;
    const std::string bad = ws.file("bad.fvec");
    {
        std::ofstream out(bad, std::ios::binary);
        out.write("FVEC", 4);
        const std::uint32_t header[3] = {1, 100, 100};
        out.write(reinterpret_cast<const char*>(header), 12);
        out.write("short", 5);
    }
    const std::string manifest = ws.file("m.csv");
    {
        std::ofstream out(manifest);
        out << "video_id,label,frame_start,frame_count\nv0,0,0,1\nv1,1,1,1\n";
    }
    std::string output;
    CHECK(run_cli("train --features " + bad + " --manifest " + manifest + " --out " +
                  ws.file("m.bhh"), &output) == 1);
    CHECK(output.find("error:") != std::string::npos);
    CHECK(output.find("offset") != std::string::npos);

    // Dimension mismatch between model and features names both dims.
    const std::string features = ws.file("ok.fvec");
    const std::string manifest2 = ws.file("ok.csv");
    REQUIRE(run_cli("synth --classes 2 --videos-per-class 4 --frames 2 --dim 6 "
                    "--separation 4 --sigma 1 --seed 2 --features " + features +
                    " --manifest " + manifest2) == 0);
    const std::string model = ws.file("ok.bhh");
    REQUIRE(run_cli("train --features " + features + " --manifest " + manifest2 +
                    " --out " + model + " --bits 4 --epochs 1 --seed 1") == 0);
    const std::string other = ws.file("other.fvec");
    const std::string other_manifest = ws.file("other.csv");
    REQUIRE(run_cli("synth --classes 2 --videos-per-class 4 --frames 2 --dim 3 "
                    "--separation 4 --sigma 1 --seed 2 --features " + other +
                    " --manifest " + other_manifest) == 0);
    CHECK(run_cli("encode --model " + model + " --features " + other + " --manifest " +
                  other_manifest + " --out " + ws.file("x.bhc"), &output) == 1);
    CHECK(output.find("3") != std::string::npos);
    CHECK(output.find("6") != std::string::npos);

    // Bit-length mismatch in search.
    const std::string c4 = ws.file("c4.bhc");
    REQUIRE(run_cli("encode --model " + model + " --features " + features + " --manifest " +
                    manifest2 + " --out " + c4) == 0);
    const std::string model8 = ws.file("m8.bhh");
    REQUIRE(run_cli("train --features " + features + " --manifest " + manifest2 +
                    " --out " + model8 + " --bits 8 --epochs 1 --seed 1") == 0);
    const std::string c8 = ws.file("c8.bhc");
    REQUIRE(run_cli("encode --model " + model8 + " --features " + features + " --manifest " +
                    manifest2 + " --out " + c8) == 0);
    CHECK(run_cli("search --db " + c4 + " --queries " + c8 + " --k 2", &output) == 1);
    CHECK(output.find("mismatch") != std::string::npos);
}
