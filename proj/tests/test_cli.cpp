#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dckit/cli.hpp"
#include "dckit/diffusion.hpp"
#include "dckit/embedding_store.hpp"
#include "dckit/metrics.hpp"
#include "dckit/rng.hpp"
#include "test_util.hpp"

using namespace dckit;
using testutil::TempDir;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// labeled identity fixture: `classes` tight clusters around random directions
LabeledEmbeddingSet make_id_fixture(std::size_t classes, std::size_t per_class, std::size_t dim,
                                    std::uint64_t seed) {
    Rng rng(seed);
    LabeledEmbeddingSet set(static_cast<std::uint32_t>(dim));
    for (std::uint32_t c = 0; c < classes; ++c) {
        const auto center = testutil::random_unit_vector(dim, rng);
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<float> v = center;
            for (auto& x : v) x += 0.05f * static_cast<float>(rng.next_gaussian());
            set.add(c, v);
        }
    }
    return set;
}

StyleFeatureSet make_style_fixture(std::size_t classes, std::size_t per_class, std::size_t dim,
                                   std::uint64_t seed, double spread = 1.0) {
    Rng rng(seed);
    StyleFeatureSet set(static_cast<std::uint32_t>(dim));
    for (std::uint32_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<float> v(dim);
            for (auto& x : v)
                x = static_cast<float>(10.0 * c + spread * rng.next_gaussian());
            set.add(c, v);
        }
    return set;
}

} // namespace

TEST_CASE("metrics command writes a report matching direct library calls") {
    TempDir tmp("cli_metrics");
    const auto ids = make_id_fixture(4, 6, 8, 901);
    const auto real = make_style_fixture(4, 8, 3, 902);
    const auto gen = make_style_fixture(4, 8, 3, 903);
    write_embedding_file(ids, tmp.path("ids.dceb"));
    write_style_file(real, tmp.path("real.dceb"));
    write_style_file(gen, tmp.path("gen.dceb"));

    const int rc = cli::run({"metrics", "--ids", tmp.path("ids.dceb"), "--real-styles",
                             tmp.path("real.dceb"), "--gen-styles", tmp.path("gen.dceb"),
                             "--tau", "0.3", "--knn", "3", "--out", tmp.path("report.json")});
    REQUIRE(rc == 0);

    const auto j = nlohmann::json::parse(slurp(tmp.path("report.json")));
    CHECK(j.at("u_class").get<double>() == u_class(ids, 0.3));
    CHECK(j.at("c_intra").get<double>() == c_intra(ids, 0.3));
    CHECK(j.at("d_intra").get<double>() == d_intra(real, gen, 3));
    CHECK(j.at("fid").get<double>() == fid(real, gen));
    CHECK(j.at("tau").get<double>() == 0.3);
    CHECK(j.at("k_nn").get<int>() == 3);
    CHECK(j.at("class_count").get<int>() == 4);
    CHECK(j.at("input_digests").size() == 3);

    // styles omitted: d_intra and fid become null
    const int rc2 = cli::run({"metrics", "--ids", tmp.path("ids.dceb"), "--out",
                              tmp.path("report2.json")});
    REQUIRE(rc2 == 0);
    const auto j2 = nlohmann::json::parse(slurp(tmp.path("report2.json")));
    CHECK(j2.at("d_intra").is_null());
    CHECK(j2.at("fid").is_null());
}

TEST_CASE("metrics command exit codes") {
    TempDir tmp("cli_metrics_err");
    CHECK(cli::run({"metrics", "--ids", tmp.path("missing.dceb"), "--out",
                    tmp.path("r.json")}) == 1);

    spit(tmp.path("garbage.dceb"), "XXXXnotavalidfile");
    CHECK(cli::run({"metrics", "--ids", tmp.path("garbage.dceb"), "--out",
                    tmp.path("r.json")}) == 1);

    // precondition violation: diversity requires k+1 generated points per class
    const auto ids = make_id_fixture(3, 5, 8, 904);
    const auto real = make_style_fixture(3, 6, 3, 905);
    const auto thin_gen = make_style_fixture(3, 2, 3, 906);
    write_embedding_file(ids, tmp.path("ids.dceb"));
    write_style_file(real, tmp.path("real.dceb"));
    write_style_file(thin_gen, tmp.path("thin.dceb"));
    CHECK(cli::run({"metrics", "--ids", tmp.path("ids.dceb"), "--real-styles",
                    tmp.path("real.dceb"), "--gen-styles", tmp.path("thin.dceb"), "--out",
                    tmp.path("r.json")}) == 2);

    // out-of-range tau is a precondition violation as well
    CHECK(cli::run({"metrics", "--ids", tmp.path("ids.dceb"), "--tau", "1.0", "--out",
                    tmp.path("r.json")}) == 2);
}

TEST_CASE("sample command emits pairs, stage counts and reproducible bytes") {
    TempDir tmp("cli_sample");
    Rng rng(907);
    LabeledEmbeddingSet cands(16);
    for (std::uint32_t i = 0; i < 40; ++i)
        cands.add(i, testutil::random_unit_vector(16, rng));
    LabeledEmbeddingSet refs(16);
    for (std::uint32_t i = 0; i < 5; ++i) refs.add(i, testutil::random_unit_vector(16, rng));
    LabeledEmbeddingSet bank(16);
    for (std::uint32_t i = 0; i < 12; ++i) bank.add(i, testutil::random_unit_vector(16, rng));
    write_embedding_file(cands, tmp.path("cands.dceb"));
    write_embedding_file(refs, tmp.path("refs.dceb"));
    write_embedding_file(bank, tmp.path("bank.dceb"));
    spit(tmp.path("plan.json"),
         R"({"id_mode":"random","style_mode":"random","subjects":2,)"
         R"("images_per_subject":3,"seed":11,"tau":0.3})");

    const std::vector<std::string> args = {
        "sample",     "--candidates", tmp.path("cands.dceb"), "--reference",
        tmp.path("refs.dceb"), "--style-bank", tmp.path("bank.dceb"), "--plan",
        tmp.path("plan.json"), "--out", tmp.path("pairs.jsonl")};
    REQUIRE(cli::run(args) == 0);

    const std::string first = slurp(tmp.path("pairs.jsonl"));
    std::size_t lines = 0;
    std::istringstream stream(first);
    std::string line;
    std::vector<nlohmann::json> parsed;
    while (std::getline(stream, line)) {
        ++lines;
        parsed.push_back(nlohmann::json::parse(line));
    }
    CHECK(lines == 6); // subjects x images, no oversampling configured
    CHECK(parsed[0].at("label") == 0);
    CHECK(parsed[5].at("label") == 1);

    const auto meta = nlohmann::json::parse(slurp(tmp.path("pairs.jsonl.meta.json")));
    CHECK(meta.at("stage_counts").at("total") == 40);
    CHECK(meta.at("stage_counts").at("selected") == 2);
    CHECK(meta.at("input_digests").size() == 4);

    // byte reproducibility across runs
    std::filesystem::remove(tmp.path("pairs.jsonl"));
    REQUIRE(cli::run(args) == 0);
    CHECK(slurp(tmp.path("pairs.jsonl")) == first);

    // tau just below 1: nothing merges with anything, dedup removes nothing
    spit(tmp.path("plan_keep.json"),
         R"({"id_mode":"random","style_mode":"random","subjects":2,)"
         R"("images_per_subject":3,"seed":11,"tau":0.999999})");
    REQUIRE(cli::run({"sample", "--candidates", tmp.path("cands.dceb"), "--reference",
                      tmp.path("refs.dceb"), "--style-bank", tmp.path("bank.dceb"), "--plan",
                      tmp.path("plan_keep.json"), "--out", tmp.path("pairs2.jsonl")}) == 0);
    const auto meta2 = nlohmann::json::parse(slurp(tmp.path("pairs2.jsonl.meta.json")));
    CHECK(meta2.at("stage_counts").at("after_dedup") == 40);
    CHECK(meta2.at("stage_counts").at("after_unique") == 40);

    // oversampling appends per-label self pairs
    spit(tmp.path("plan_over.json"),
         R"({"id_mode":"random","style_mode":"random","subjects":2,)"
         R"("images_per_subject":3,"seed":11,"tau":0.3,"oversample_count":5})");
    REQUIRE(cli::run({"sample", "--candidates", tmp.path("cands.dceb"), "--reference",
                      tmp.path("refs.dceb"), "--style-bank", tmp.path("bank.dceb"), "--plan",
                      tmp.path("plan_over.json"), "--out", tmp.path("pairs3.jsonl")}) == 0);
    std::istringstream stream3(slurp(tmp.path("pairs3.jsonl")));
    std::size_t self_lines = 0, total_lines = 0;
    while (std::getline(stream3, line)) {
        ++total_lines;
        if (line.find("\"self\"") != std::string::npos) ++self_lines;
    }
    CHECK(total_lines == 6 + 2 * 5);
    CHECK(self_lines == 10);

    CHECK(cli::run({"sample", "--candidates", tmp.path("cands.dceb"), "--reference",
                    tmp.path("refs.dceb"), "--style-bank", tmp.path("bank.dceb"), "--plan",
                    tmp.path("nonexistent.json"), "--out", tmp.path("x.jsonl")}) == 1);
}

TEST_CASE("unique-curve command matches the library and flattens on duplicates") {
    TempDir tmp("cli_curve");
    LabeledEmbeddingSet ortho(3);
    ortho.add(0, std::vector<float>{1, 0, 0});
    ortho.add(1, std::vector<float>{0, 1, 0});
    ortho.add(2, std::vector<float>{0, 0, 1});
    write_embedding_file(ortho, tmp.path("ortho.dceb"));

    REQUIRE(cli::run({"unique-curve", "--features", tmp.path("ortho.dceb"), "--tau", "0.3",
                      "--checkpoints", "1,2,3", "--out", tmp.path("curve.csv")}) == 0);
    const std::string csv = slurp(tmp.path("curve.csv"));
    CHECK(csv.find("n,unique_count\n1,1\n2,2\n3,3\n") != std::string::npos);

    // duplicate-heavy: the tail goes flat
    LabeledEmbeddingSet dupes(2);
    for (int i = 0; i < 6; ++i) dupes.add(0, std::vector<float>{1, 0});
    write_embedding_file(dupes, tmp.path("dupes.dceb"));
    REQUIRE(cli::run({"unique-curve", "--features", tmp.path("dupes.dceb"), "--tau", "0.3",
                      "--checkpoints", "1,3,6", "--out", tmp.path("flat.csv")}) == 0);
    const std::string flat = slurp(tmp.path("flat.csv"));
    CHECK(flat.find("1,1\n3,1\n6,1\n") != std::string::npos);

    // checkpoint beyond the record count violates the preconditions
    CHECK(cli::run({"unique-curve", "--features", tmp.path("ortho.dceb"), "--tau", "0.3",
                    "--checkpoints", "5", "--out", tmp.path("bad.csv")}) == 2);
}

TEST_CASE("kernel-check command reports the registry and honors the bad-schedule hook") {
    TempDir tmp("cli_kernel");
    REQUIRE(cli::run({"kernel-check", "--seed", "7", "--out", tmp.path("check.json")}) == 0);
    const auto j = nlohmann::json::parse(slurp(tmp.path("check.json")));
    for (const auto& name : kernel_check_names()) {
        REQUIRE(j.contains(name));
        CHECK(j.at(name).at("pass").get<bool>());
        CHECK(j.at(name).contains("max_abs_error"));
    }

    CHECK(cli::run({"kernel-check", "--seed", "7", "--inject-bad-schedule", "--out",
                    tmp.path("bad.json")}) == 3);
    const auto bad = nlohmann::json::parse(slurp(tmp.path("bad.json")));
    CHECK_FALSE(bad.at("schedule_alpha_bar_strictly_decreasing").at("pass").get<bool>());
}

TEST_CASE("fid command computes the distance between two style files") {
    TempDir tmp("cli_fid");
    const auto a = make_style_fixture(2, 20, 3, 908);
    const auto b = make_style_fixture(2, 20, 3, 909);
    write_style_file(a, tmp.path("a.dceb"));
    write_style_file(b, tmp.path("b.dceb"));

    REQUIRE(cli::run({"fid", "--a", tmp.path("a.dceb"), "--b", tmp.path("b.dceb"), "--out",
                      tmp.path("fid.json")}) == 0);
    const auto j = nlohmann::json::parse(slurp(tmp.path("fid.json")));
    CHECK(j.at("fid").get<double>() == fid(a, b));
    CHECK(j.at("input_digests").size() == 2);
}

TEST_CASE("outputs are written atomically (no temp litter)") {
    TempDir tmp("cli_atomic");
    const auto ids = make_id_fixture(3, 4, 8, 910);
    write_embedding_file(ids, tmp.path("ids.dceb"));
    REQUIRE(cli::run({"metrics", "--ids", tmp.path("ids.dceb"), "--out",
                      tmp.path("report.json")}) == 0);
    CHECK(std::filesystem::exists(tmp.path("report.json")));
    CHECK(!std::filesystem::exists(tmp.path("report.json.tmp")));
}

TEST_CASE("unknown subcommands and missing required flags do not crash") {
    CHECK(cli::run({"frobnicate"}) != 0);
    CHECK(cli::run({"metrics"}) != 0);
    CHECK(cli::run({}) != 0);
}
