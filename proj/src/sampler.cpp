#include "dckit/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dckit/errors.hpp"
#include "dckit/kernels.hpp"
#include "dckit/parallel.hpp"
#include "dckit/rng.hpp"

namespace dckit {
namespace {

const std::string& tag_of(const LabeledEmbeddingSet& set, std::size_t index) {
    const auto it = set.attributes().find(set.label(index));
    if (it == set.attributes().end())
        throw MissingAttributeError("candidate label " + std::to_string(set.label(index)) +
                                    " has no attribute tag");
    return it->second;
}

// Partial Fisher-Yates: the first `take` slots of pool end up as the chosen
// subset, selection order seed-dependent.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t take, Rng& rng) {
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.next_below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

} // namespace

std::vector<std::size_t> dedup_against_reference(const LabeledEmbeddingSet& candidates,
                                                 const LabeledEmbeddingSet& reference, double tau,
                                                 MatchMode mode) {
    if (candidates.dim() != reference.dim())
        throw DimensionError("dedup: candidate dim " + std::to_string(candidates.dim()) +
                             " != reference dim " + std::to_string(reference.dim()));
    const std::size_t dim = candidates.dim();
    const auto& k = kern::active();

    std::vector<double> ref_sq(reference.size());
    for (std::size_t j = 0; j < reference.size(); ++j) {
        const auto r = reference.vec(j);
        ref_sq[j] = k.dot_f32(r.data(), r.data(), dim);
    }

    std::vector<unsigned char> keep(candidates.size(), 0);
    parallel_for(candidates.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto c = candidates.vec(i);
            const double csq = k.dot_f32(c.data(), c.data(), dim);
            bool matched = false;
            for (std::size_t j = 0; j < reference.size(); ++j) {
                const double dot = k.dot_f32(c.data(), reference.vec(j).data(), dim);
                const double sim =
                    std::clamp(dot / (std::sqrt(csq) * std::sqrt(ref_sq[j])), -1.0, 1.0);
                if (pair_matches(sim, tau, mode)) {
                    matched = true;
                    break;
                }
            }
            keep[i] = matched ? 0 : 1;
        }
    });

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (keep[i]) kept.push_back(i);
    return kept;
}

std::vector<std::size_t> attribute_filter(
    const LabeledEmbeddingSet& candidates,
    const std::function<bool(const std::string&)>& predicate) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (predicate(tag_of(candidates, i))) kept.push_back(i);
    return kept;
}

std::vector<std::size_t> random_sample(std::span<const std::size_t> kept, std::size_t n,
                                       std::uint64_t seed) {
    if (n > kept.size())
        throw ValidationError("random_sample: n=" + std::to_string(n) + " exceeds " +
                              std::to_string(kept.size()) + " candidates");
    Rng rng(seed);
    auto chosen = choose(std::vector<std::size_t>(kept.begin(), kept.end()), n, rng);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<std::size_t> balanced_sample(const LabeledEmbeddingSet& candidates,
                                         std::span<const std::size_t> kept, std::size_t n,
                                         std::uint64_t seed) {
    if (n > kept.size())
        throw ValidationError("balanced_sample: n=" + std::to_string(n) + " exceeds " +
                              std::to_string(kept.size()) + " candidates");
    // std::map keys give the tag-lexicographic group order the deficit
    // redistribution is defined over.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (const std::size_t i : kept) groups[tag_of(candidates, i)].push_back(i);
    const std::size_t n_groups = groups.size();
    if (n_groups == 0) throw ValidationError("balanced_sample: no attribute groups");

    std::vector<std::size_t> sizes;
    sizes.reserve(n_groups);
    for (const auto& [tag, members] : groups) sizes.push_back(members.size());

    const std::size_t base = n / n_groups;
    const std::size_t rem = n % n_groups;
    std::vector<std::size_t> take(n_groups);
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        take[g] = std::min(sizes[g], base + (g < rem ? 1 : 0));
        assigned += take[g];
    }
    // groups that ran short leave a deficit; hand it out one seat at a time
    while (assigned < n) {
        bool progressed = false;
        for (std::size_t g = 0; g < n_groups && assigned < n; ++g) {
            if (take[g] < sizes[g]) {
                ++take[g];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break; // unreachable given n <= kept.size()
    }

    Rng rng(seed);
    std::vector<std::size_t> selected;
    selected.reserve(n);
    std::size_t g = 0;
    for (const auto& [tag, members] : groups) {
        const auto chosen = choose(members, take[g], rng);
        selected.insert(selected.end(), chosen.begin(), chosen.end());
        ++g;
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<ConditionPair> pair_styles(std::span<const std::size_t> id_indices,
                                       const LabeledEmbeddingSet& id_candidates,
                                       const LabeledEmbeddingSet& style_bank,
                                       const SamplingPlan& plan) {
    if (style_bank.empty()) throw EmptySetError("pair_styles: style bank is empty");
    if (plan.subjects != id_indices.size())
        throw ValidationError("pair_styles: plan.subjects=" + std::to_string(plan.subjects) +
                              " != selected ids " + std::to_string(id_indices.size()));
    if (plan.images_per_subject == 0)
        throw ValidationError("pair_styles: images_per_subject must be positive");

    std::map<std::string, std::vector<std::size_t>> bank_by_tag;
    if (plan.style_mode == StyleMode::match) {
        for (std::size_t j = 0; j < style_bank.size(); ++j)
            bank_by_tag[tag_of(style_bank, j)].push_back(j);
    }

    Rng rng(plan.seed);
    std::vector<ConditionPair> pairs;
    pairs.reserve(id_indices.size() * plan.images_per_subject);
    for (std::size_t s = 0; s < id_indices.size(); ++s) {
        const std::size_t id_index = id_indices[s];
        const std::vector<std::size_t>* pool = nullptr;
        if (plan.style_mode == StyleMode::match) {
            const std::string& tag = tag_of(id_candidates, id_index);
            const auto it = bank_by_tag.find(tag);
            if (it == bank_by_tag.end())
                throw UnmatchedAttributeError("pair_styles: no style-bank entry with tag '" +
                                              tag + "' for id index " + std::to_string(id_index));
            pool = &it->second;
        }
        for (std::size_t img = 0; img < plan.images_per_subject; ++img) {
            ConditionPair pair;
            pair.label = static_cast<std::uint32_t>(s);
            pair.id_index = id_index;
            if (pool != nullptr)
                pair.style_index = (*pool)[rng.next_below(pool->size())];
            else
                pair.style_index = rng.next_below(style_bank.size());
            pairs.push_back(pair);
        }
    }
    return pairs;
}

std::vector<ConditionPair> oversample_ids(const std::vector<ConditionPair>& pairs,
                                          std::size_t m) {
    std::vector<ConditionPair> out = pairs;
    if (m == 0) return out;
    std::map<std::uint32_t, std::size_t> id_of_label;
    for (const auto& p : pairs) id_of_label.emplace(p.label, p.id_index);
    for (const auto& [label, id_index] : id_of_label)
        for (std::size_t i = 0; i < m; ++i)
            out.push_back(ConditionPair{label, id_index, std::nullopt});
    return out;
}

SamplingResult run_sampling_pipeline(const LabeledEmbeddingSet& candidates,
                                     const LabeledEmbeddingSet& reference,
                                     const LabeledEmbeddingSet& style_bank,
                                     const SamplingPlan& plan, MatchMode mode) {
    SamplingResult result;
    result.counts.total = candidates.size();

    const auto apply_attribute = [&](const std::vector<std::size_t>& in) {
        if (!plan.exclude_attribute) return in;
        std::vector<std::size_t> out;
        for (const std::size_t i : in)
            if (tag_of(candidates, i) != *plan.exclude_attribute) out.push_back(i);
        return out;
    };
    const auto apply_dedup = [&](const std::vector<std::size_t>& in) {
        const auto whole = dedup_against_reference(candidates, reference, plan.tau, mode);
        std::vector<std::size_t> out;
        std::set_intersection(in.begin(), in.end(), whole.begin(), whole.end(),
                              std::back_inserter(out));
        return out;
    };

    std::vector<std::size_t> kept(candidates.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;

    if (plan.stage_order == StageOrder::dedup_first) {
        kept = apply_dedup(kept);
        result.counts.after_dedup = kept.size();
        kept = apply_attribute(kept);
        result.counts.after_attribute = kept.size();
    } else {
        kept = apply_attribute(kept);
        result.counts.after_attribute = kept.size();
        kept = apply_dedup(kept);
        result.counts.after_dedup = kept.size();
    }

    // greedy unique filtering over the surviving subsequence, original order
    const std::size_t dim = candidates.dim();
    std::vector<float> flat(kept.size() * dim);
    for (std::size_t i = 0; i < kept.size(); ++i)
        std::copy_n(candidates.vec(kept[i]).data(), dim, flat.data() + i * dim);
    const auto scan = uniqueness_unlabeled(std::span<const float>(flat), dim, plan.tau, mode);
    std::vector<std::size_t> unique_kept;
    unique_kept.reserve(scan.kept.size());
    for (const std::size_t local : scan.kept) unique_kept.push_back(kept[local]);
    result.counts.after_unique = unique_kept.size();

    if (plan.id_mode == IdMode::balance)
        result.selected_ids = balanced_sample(candidates, unique_kept, plan.subjects, plan.seed);
    else
        result.selected_ids = random_sample(unique_kept, plan.subjects, plan.seed);
    result.counts.selected = result.selected_ids.size();

    result.pairs = pair_styles(result.selected_ids, candidates, style_bank, plan);
    if (plan.oversample_count > 0)
        result.pairs = oversample_ids(result.pairs, plan.oversample_count);
    return result;
}

SamplingPlan plan_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad plan JSON: ") + e.what());
    }
    SamplingPlan plan;
    try {
        const std::string id_mode = j.value("id_mode", "random");
        if (id_mode == "random")
            plan.id_mode = IdMode::random;
        else if (id_mode == "balance")
            plan.id_mode = IdMode::balance;
        else
            throw FormatError("plan: unknown id_mode '" + id_mode + "'");
        const std::string style_mode = j.value("style_mode", "random");
        if (style_mode == "random")
            plan.style_mode = StyleMode::random;
        else if (style_mode == "match")
            plan.style_mode = StyleMode::match;
        else
            throw FormatError("plan: unknown style_mode '" + style_mode + "'");
        plan.oversample_count = j.value("oversample_count", 0u);
        plan.subjects = j.at("subjects").get<std::size_t>();
        plan.images_per_subject = j.at("images_per_subject").get<std::size_t>();
        plan.seed = j.value("seed", 0ull);
        plan.tau = j.value("tau", 0.3);
        const std::string order = j.value("stage_order", "dedup_first");
        if (order == "dedup_first")
            plan.stage_order = StageOrder::dedup_first;
        else if (order == "attribute_first")
            plan.stage_order = StageOrder::attribute_first;
        else
            throw FormatError("plan: unknown stage_order '" + order + "'");
        if (j.contains("exclude_attribute"))
            plan.exclude_attribute = j.at("exclude_attribute").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad plan JSON: ") + e.what());
    }
    if (plan.subjects == 0) throw ValidationError("plan: subjects must be positive");
    if (plan.images_per_subject == 0)
        throw ValidationError("plan: images_per_subject must be positive");
    return plan;
}

std::string pair_to_json_line(const ConditionPair& pair) {
    std::ostringstream out;
    out << "{\"label\": " << pair.label << ", \"id_index\": " << pair.id_index
        << ", \"style_index\": ";
    if (pair.style_index)
        out << *pair.style_index;
    else
        out << "\"self\"";
    out << "}";
    return out.str();
}

} // namespace dckit
