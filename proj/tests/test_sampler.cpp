#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dckit/errors.hpp"
#include "dckit/sampler.hpp"
#include "test_util.hpp"

using namespace dckit;

namespace {

double oracle_cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

LabeledEmbeddingSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed,
                               std::size_t label_pool = 1000000) {
    Rng rng(seed);
    LabeledEmbeddingSet set(static_cast<std::uint32_t>(dim));
    for (std::size_t i = 0; i < n; ++i)
        set.add(static_cast<std::uint32_t>(i % label_pool),
                testutil::random_unit_vector(dim, rng));
    return set;
}

LabeledEmbeddingSet tagged_set(const std::vector<std::string>& tags, std::size_t dim,
                               std::uint64_t seed) {
    Rng rng(seed);
    LabeledEmbeddingSet set(static_cast<std::uint32_t>(dim));
    for (std::size_t i = 0; i < tags.size(); ++i)
        set.add(static_cast<std::uint32_t>(i), testutil::random_unit_vector(dim, rng));
    for (std::size_t i = 0; i < tags.size(); ++i)
        set.set_attribute(static_cast<std::uint32_t>(i), tags[i]);
    return set;
}

} // namespace

TEST_CASE("dedup removes reference matches and keeps orthogonal candidates") {
    LabeledEmbeddingSet cands(3);
    cands.add(0, std::vector<float>{1, 0, 0}); // equals a reference vector
    cands.add(1, std::vector<float>{0, 0, 1}); // orthogonal to all references
    LabeledEmbeddingSet refs(3);
    refs.add(0, std::vector<float>{1, 0, 0});
    refs.add(1, std::vector<float>{0, 1, 0});

    const auto kept = dedup_against_reference(cands, refs, 0.3);
    CHECK(kept == std::vector<std::size_t>{1});

    LabeledEmbeddingSet wrong(2);
    wrong.add(0, std::vector<float>{1, 0});
    CHECK_THROWS_AS(dedup_against_reference(cands, wrong, 0.3), DimensionError);
}

TEST_CASE("dedup equals the brute-force all-pairs filter") {
    const auto cands = random_set(100, 8, 7101);
    const auto refs = random_set(50, 8, 7102);
    const auto kept = dedup_against_reference(cands, refs, 0.3);

    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        bool hit = false;
        for (std::size_t j = 0; j < refs.size() && !hit; ++j)
            if (oracle_cosine(cands.vec(i), refs.vec(j)) >= 0.3) hit = true;
        if (!hit) expect.push_back(i);
    }
    CHECK(kept == expect);
    CHECK(std::is_sorted(kept.begin(), kept.end())); // order preserved
}

TEST_CASE("dedup is idempotent") {
    const auto cands = random_set(80, 6, 7103);
    const auto refs = random_set(40, 6, 7104);
    const auto once = dedup_against_reference(cands, refs, 0.3);

    LabeledEmbeddingSet survivors(6);
    for (const std::size_t i : once) survivors.add(cands.label(i), cands.vec(i));
    const auto twice = dedup_against_reference(survivors, refs, 0.3);
    std::vector<std::size_t> all(once.size());
    for (std::size_t i = 0; i < once.size(); ++i) all[i] = i;
    CHECK(twice == all); // nothing further removed
}

TEST_CASE("attribute filter selects by tag") {
    const auto set = tagged_set({"sunglasses", "none", "none"}, 4, 7105);
    const auto kept = attribute_filter(set, [](const std::string& t) { return t != "sunglasses"; });
    CHECK(kept == std::vector<std::size_t>{1, 2});

    const auto all = attribute_filter(set, [](const std::string&) { return true; });
    CHECK(all == std::vector<std::size_t>{0, 1, 2});

    LabeledEmbeddingSet untagged(4);
    Rng rng(1);
    untagged.add(0, testutil::random_unit_vector(4, rng));
    CHECK_THROWS_AS(attribute_filter(untagged, [](const std::string&) { return true; }),
                    MissingAttributeError);
}

TEST_CASE("attribute filter agrees with a direct scan on random tags") {
    Rng rng(7106);
    std::vector<std::string> tags;
    const std::vector<std::string> pool = {"a", "b", "c", "d"};
    for (int i = 0; i < 60; ++i) tags.push_back(pool[rng.next_below(4)]);
    const auto set = tagged_set(tags, 4, 7107);
    const auto kept = attribute_filter(set, [](const std::string& t) { return t < "c"; });
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < tags.size(); ++i)
        if (tags[i] < "c") expect.push_back(i);
    CHECK(kept == expect);
}

TEST_CASE("balanced sample hits equal group counts when groups suffice") {
    std::vector<std::string> tags;
    for (int g = 0; g < 5; ++g)
        for (int i = 0; i < 100; ++i) tags.push_back(std::string(1, static_cast<char>('a' + g)));
    const auto set = tagged_set(tags, 4, 7108);
    std::vector<std::size_t> kept(set.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

    const auto selected = balanced_sample(set, kept, 100, 99);
    REQUIRE(selected.size() == 100);
    std::map<std::string, int> counts;
    for (const std::size_t i : selected) counts[set.attributes().at(set.label(i))]++;
    for (const auto& [tag, count] : counts) CHECK(count == 20); // 0.200 per group
}

TEST_CASE("balanced sample with a single group draws everything from it") {
    const auto set = tagged_set(std::vector<std::string>(20, "only"), 4, 7109);
    std::vector<std::size_t> kept(set.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
    CHECK(balanced_sample(set, kept, 10, 1).size() == 10);
}

TEST_CASE("balanced sample redistributes deficits round-robin in tag order") {
    // group sizes a:3, b:50, c:50 and n=30: targets are 10 each, group a caps
    // at 3, the 7-seat deficit alternates b,c,b,c,b,c,b -> (3, 14, 13)
    std::vector<std::string> tags;
    for (int i = 0; i < 3; ++i) tags.push_back("a");
    for (int i = 0; i < 50; ++i) tags.push_back("b");
    for (int i = 0; i < 50; ++i) tags.push_back("c");
    const auto set = tagged_set(tags, 4, 7110);
    std::vector<std::size_t> kept(set.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

    const auto selected = balanced_sample(set, kept, 30, 5);
    REQUIRE(selected.size() == 30);
    std::map<std::string, int> counts;
    for (const std::size_t i : selected) counts[set.attributes().at(set.label(i))]++;
    CHECK(counts["a"] == 3);
    CHECK(counts["b"] == 14);
    CHECK(counts["c"] == 13);

    CHECK_THROWS_AS(balanced_sample(set, kept, 104, 5), ValidationError);
}

TEST_CASE("balanced sample spread stays within one for ample groups") {
    Rng rng(7111);
    std::vector<std::string> tags;
    const std::vector<std::string> pool = {"p", "q", "r"};
    for (int i = 0; i < 120; ++i) tags.push_back(pool[rng.next_below(3)]);
    const auto set = tagged_set(tags, 4, 7112);
    std::vector<std::size_t> kept(set.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

    for (const std::size_t n : {7u, 30u, 31u, 32u}) {
        const auto selected = balanced_sample(set, kept, n, 123);
        std::map<std::string, std::size_t> counts;
        for (const auto& tag : pool) counts[tag] = 0;
        for (const std::size_t i : selected) counts[set.attributes().at(set.label(i))]++;
        std::size_t lo = n, hi = 0;
        for (const auto& [tag, count] : counts) {
            lo = std::min(lo, count);
            hi = std::max(hi, count);
        }
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("balanced and random sampling are deterministic under the seed") {
    const auto set = tagged_set({"a", "a", "b", "b", "b", "c", "c", "c", "c"}, 4, 7113);
    std::vector<std::size_t> kept(set.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

    CHECK(balanced_sample(set, kept, 6, 77) == balanced_sample(set, kept, 6, 77));
    CHECK(random_sample(kept, 5, 88) == random_sample(kept, 5, 88));
    const auto sampled = random_sample(kept, 5, 88);
    CHECK(std::is_sorted(sampled.begin(), sampled.end()));
    CHECK_THROWS_AS(random_sample(kept, 10, 88), ValidationError);
}

TEST_CASE("pair_styles counts, labels and reproducibility") {
    const auto cands = random_set(10, 4, 7114);
    const auto bank = random_set(25, 4, 7115);
    SamplingPlan plan;
    plan.subjects = 2;
    plan.images_per_subject = 3;
    plan.seed = 4242;
    const std::vector<std::size_t> ids = {4, 7};

    const auto pairs = pair_styles(ids, cands, bank, plan);
    REQUIRE(pairs.size() == 6);
    const std::vector<std::uint32_t> expect_labels = {0, 0, 0, 1, 1, 1};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].label == expect_labels[i]);
        CHECK(pairs[i].id_index == (i < 3 ? 4u : 7u));
        REQUIRE(pairs[i].style_index.has_value());
        CHECK(*pairs[i].style_index < bank.size());
    }

    CHECK(pair_styles(ids, cands, bank, plan) == pairs); // bit-reproducible
    SamplingPlan other = plan;
    other.seed = 4243;
    CHECK(pair_styles(ids, cands, bank, other) != pairs);

    SamplingPlan bad = plan;
    bad.subjects = 3;
    CHECK_THROWS_AS(pair_styles(ids, cands, bank, bad), ValidationError);
}

TEST_CASE("match mode draws styles with the id's tag") {
    Rng rng(7116);
    const std::vector<std::string> pool = {"x", "y", "z"};
    std::vector<std::string> cand_tags, bank_tags;
    for (int i = 0; i < 12; ++i) cand_tags.push_back(pool[rng.next_below(3)]);
    for (int i = 0; i < 30; ++i) bank_tags.push_back(pool[rng.next_below(3)]);
    const auto cands = tagged_set(cand_tags, 4, 7117);
    const auto bank = tagged_set(bank_tags, 4, 7118);

    SamplingPlan plan;
    plan.style_mode = StyleMode::match;
    plan.subjects = 5;
    plan.images_per_subject = 4;
    plan.seed = 31;
    const std::vector<std::size_t> ids = {0, 2, 5, 7, 11};
    const auto pairs = pair_styles(ids, cands, bank, plan);
    REQUIRE(pairs.size() == 20);
    for (const auto& p : pairs) {
        REQUIRE(p.style_index.has_value());
        CHECK(bank.attributes().at(bank.label(*p.style_index)) ==
              cands.attributes().at(cands.label(p.id_index)));
    }

    // bank lacking the id's tag
    const auto narrow_bank = tagged_set({"x", "x", "x"}, 4, 7119);
    const auto y_cands = tagged_set({"y"}, 4, 7120);
    SamplingPlan one = plan;
    one.subjects = 1;
    const std::vector<std::size_t> one_id = {0};
    CHECK_THROWS_AS(pair_styles(one_id, y_cands, narrow_bank, one), UnmatchedAttributeError);
}

TEST_CASE("oversample appends self-pairs per label") {
    const auto cands = random_set(6, 4, 7121);
    const auto bank = random_set(9, 4, 7122);
    SamplingPlan plan;
    plan.subjects = 2;
    plan.images_per_subject = 2;
    plan.seed = 9;
    const std::vector<std::size_t> ids = {1, 3};
    const auto pairs = pair_styles(ids, cands, bank, plan);

    CHECK(oversample_ids(pairs, 0) == pairs);

    const auto m5 = oversample_ids(pairs, 5);
    REQUIRE(m5.size() == pairs.size() + 2 * 5);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(m5[i] == pairs[i]); // originals intact
    std::map<std::uint32_t, int> self_counts;
    for (std::size_t i = pairs.size(); i < m5.size(); ++i) {
        CHECK(!m5[i].style_index.has_value()); // sentinel: id doubles as style
        self_counts[m5[i].label]++;
        CHECK(m5[i].id_index == (m5[i].label == 0 ? 1u : 3u));
    }
    CHECK(self_counts[0] == 5);
    CHECK(self_counts[1] == 5);

    // default appends five per label
    CHECK(oversample_ids(pairs).size() == pairs.size() + 2 * 5);
}

TEST_CASE("every label keeps a single id origin through the pipeline") {
    Rng rng(7123);
    std::vector<std::string> tags;
    const std::vector<std::string> pool = {"g1", "g2"};
    for (int i = 0; i < 40; ++i) tags.push_back(pool[rng.next_below(2)]);
    const auto cands = tagged_set(tags, 64, 7124);
    const auto refs = random_set(10, 64, 7125);
    const auto bank = tagged_set(tags, 64, 7126);

    SamplingPlan plan;
    plan.id_mode = IdMode::balance;
    plan.style_mode = StyleMode::match;
    plan.subjects = 6;
    plan.images_per_subject = 3;
    plan.oversample_count = 2;
    plan.seed = 1234;
    const auto result = run_sampling_pipeline(cands, refs, bank, plan);

    std::map<std::uint32_t, std::set<std::size_t>> origins;
    for (const auto& p : result.pairs) origins[p.label].insert(p.id_index);
    CHECK(origins.size() == 6);
    for (const auto& [label, ids] : origins) CHECK(ids.size() == 1);
    CHECK(result.pairs.size() == 6 * 3 + 6 * 2);
}

TEST_CASE("pipeline stage counts match the component calls") {
    const auto cands = random_set(60, 64, 7127);
    const auto refs = random_set(30, 64, 7128);
    const auto bank = random_set(20, 64, 7129);

    SamplingPlan plan;
    plan.subjects = 4;
    plan.images_per_subject = 2;
    plan.seed = 5150;
    plan.tau = 0.3;
    const auto result = run_sampling_pipeline(cands, refs, bank, plan);

    const auto dedup = dedup_against_reference(cands, refs, 0.3);
    CHECK(result.counts.total == 60);
    CHECK(result.counts.after_dedup == dedup.size());
    CHECK(result.counts.after_attribute == dedup.size()); // no predicate configured
    std::vector<float> flat;
    for (const std::size_t i : dedup)
        flat.insert(flat.end(), cands.vec(i).begin(), cands.vec(i).end());
    const auto scan = uniqueness_unlabeled(std::span<const float>(flat), 64, 0.3);
    CHECK(result.counts.after_unique == scan.count);
    CHECK(result.counts.selected == 4);
    CHECK(result.pairs.size() == 8);
}

TEST_CASE("plan json round trip and validation") {
    const std::string text = R"({
        "id_mode": "balance", "style_mode": "match", "oversample_count": 5,
        "subjects": 10, "images_per_subject": 50, "seed": 7, "tau": 0.25,
        "stage_order": "attribute_first", "exclude_attribute": "sunglasses"
    })";
    const SamplingPlan plan = plan_from_json(text);
    CHECK(plan.id_mode == IdMode::balance);
    CHECK(plan.style_mode == StyleMode::match);
    CHECK(plan.oversample_count == 5);
    CHECK(plan.subjects == 10);
    CHECK(plan.images_per_subject == 50);
    CHECK(plan.seed == 7);
    CHECK(plan.tau == doctest::Approx(0.25));
    CHECK(plan.stage_order == StageOrder::attribute_first);
    REQUIRE(plan.exclude_attribute.has_value());
    CHECK(*plan.exclude_attribute == "sunglasses");

    CHECK_THROWS_AS(plan_from_json("not json"), FormatError);
    CHECK_THROWS_AS(plan_from_json(R"({"subjects": 2})"), FormatError);
    CHECK_THROWS_AS(plan_from_json(R"({"id_mode": "noise", "subjects": 2,
                                       "images_per_subject": 1})"),
                    FormatError);
}

TEST_CASE("pair json lines use the documented field order") {
    CHECK(pair_to_json_line(ConditionPair{3, 17, 42}) ==
          R"({"label": 3, "id_index": 17, "style_index": 42})");
    CHECK(pair_to_json_line(ConditionPair{0, 5, std::nullopt}) ==
          R"({"label": 0, "id_index": 5, "style_index": "self"})");
}
