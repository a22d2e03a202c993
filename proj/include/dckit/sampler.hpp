#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dckit/embedding_store.hpp"
#include "dckit/metrics.hpp"

namespace dckit {

// One (ID image, style image) assignment. style_index == nullopt is the
// self-pair sentinel: use the ID image itself as the style source.
struct ConditionPair {
    std::uint32_t label = 0;
    std::size_t id_index = 0;
    std::optional<std::size_t> style_index;

    bool operator==(const ConditionPair&) const = default;
};

enum class IdMode { random, balance };
enum class StyleMode { random, match };
enum class StageOrder { dedup_first, attribute_first };

struct SamplingPlan {
    IdMode id_mode = IdMode::random;
    StyleMode style_mode = StyleMode::random;
    std::size_t oversample_count = 0;
    std::size_t subjects = 0;
    std::size_t images_per_subject = 0;
    std::uint64_t seed = 0;
    double tau = 0.3;
    StageOrder stage_order = StageOrder::dedup_first;
    std::optional<std::string> exclude_attribute;
};

// Candidate kept iff its max cosine similarity to every reference vector
// stays below tau (no match under `mode`). Order preserved.
std::vector<std::size_t> dedup_against_reference(const LabeledEmbeddingSet& candidates,
                                                 const LabeledEmbeddingSet& reference, double tau,
                                                 MatchMode mode = MatchMode::similarity);

// Keeps exactly the candidates whose attribute tag satisfies the predicate.
// A candidate without a tag is an error naming the label.
std::vector<std::size_t> attribute_filter(const LabeledEmbeddingSet& candidates,
                                          const std::function<bool(const std::string&)>& predicate);

// Uniform sample of n entries from kept, without replacement; result sorted
// ascending. Deterministic under seed.
std::vector<std::size_t> random_sample(std::span<const std::size_t> kept, std::size_t n,
                                       std::uint64_t seed);

// Selects n of the kept candidates with per-attribute-group counts as equal
// as possible (spread <= 1 when every group is large enough). Groups that run
// out contribute all members; the deficit is redistributed round-robin over
// the remaining groups in tag lexicographic order. Result sorted ascending.
std::vector<std::size_t> balanced_sample(const LabeledEmbeddingSet& candidates,
                                         std::span<const std::size_t> kept, std::size_t n,
                                         std::uint64_t seed);

// Emits subjects x images_per_subject pairs, labels 0..subjects-1 in ID
// order. Style draws are uniform over the bank (random mode) or over the
// subset of the bank sharing the ID's tag (match mode), seeded by the plan.
std::vector<ConditionPair> pair_styles(std::span<const std::size_t> id_indices,
                                       const LabeledEmbeddingSet& id_candidates,
                                       const LabeledEmbeddingSet& style_bank,
                                       const SamplingPlan& plan);

// Appends m self-pairs per label (ascending label order); originals unchanged.
std::vector<ConditionPair> oversample_ids(const std::vector<ConditionPair>& pairs,
                                          std::size_t m = 5);

struct StageCounts {
    std::size_t total = 0;
    std::size_t after_dedup = 0;
    std::size_t after_attribute = 0;
    std::size_t after_unique = 0;
    std::size_t selected = 0;
};

struct SamplingResult {
    StageCounts counts;
    std::vector<std::size_t> selected_ids;
    std::vector<ConditionPair> pairs;
};

// Full stage-1 pipeline: dedup and attribute filtering (order per plan),
// greedy unique filtering, ID selection, style pairing, oversampling.
SamplingResult run_sampling_pipeline(const LabeledEmbeddingSet& candidates,
                                     const LabeledEmbeddingSet& reference,
                                     const LabeledEmbeddingSet& style_bank,
                                     const SamplingPlan& plan,
                                     MatchMode mode = MatchMode::similarity);

SamplingPlan plan_from_json(const std::string& json_text);
std::string pair_to_json_line(const ConditionPair& pair);

} // namespace dckit
