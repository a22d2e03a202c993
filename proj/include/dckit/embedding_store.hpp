#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dckit {

// A single labeled feature vector, used when building sets record by record.
struct EmbeddingRecord {
    std::uint32_t label = 0;
    std::vector<float> vector;
};

// Identity-space feature set: unit-scale vectors with cosine semantics,
// grouped by subject label. Record order is significant (the greedy
// uniqueness scan is order-dependent). Immutable once built; vectors are
// stored contiguously, dim floats per record.
class LabeledEmbeddingSet {
public:
    LabeledEmbeddingSet() = default;
    explicit LabeledEmbeddingSet(std::uint32_t dim) : dim_(dim) {}

    // Validates length, finiteness and nonzero norm before accepting.
    void add(std::uint32_t label, std::span<const float> vec);
    void add(const EmbeddingRecord& rec) { add(rec.label, rec.vector); }

    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::uint32_t label(std::size_t i) const { return labels_[i]; }
    std::span<const float> vec(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    const std::vector<float>& flat() const { return data_; }

    // label -> attribute tag (e.g. demographic group), from the manifest.
    const std::map<std::uint32_t, std::string>& attributes() const { return attributes_; }
    // label -> display name, round-tripped from the manifest.
    const std::map<std::uint32_t, std::string>& names() const { return names_; }

    // Every referenced label must exist among the records.
    void set_attribute(std::uint32_t label, const std::string& tag);
    void set_name(std::uint32_t label, const std::string& name);

    bool has_label(std::uint32_t label) const;

private:
    std::uint32_t dim_ = 0;
    std::vector<std::uint32_t> labels_;
    std::vector<float> data_;
    std::map<std::uint32_t, std::string> attributes_;
    std::map<std::uint32_t, std::string> names_;
};

// Style-space feature set: Euclidean semantics, finite values only
// (zero vectors are legal here, unlike the identity space).
class StyleFeatureSet {
public:
    StyleFeatureSet() = default;
    explicit StyleFeatureSet(std::uint32_t dim) : dim_(dim) {}

    void add(std::uint32_t label, std::span<const float> vec);

    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::uint32_t label(std::size_t i) const { return labels_[i]; }
    std::span<const float> vec(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    const std::vector<float>& flat() const { return data_; }

private:
    std::uint32_t dim_ = 0;
    std::vector<std::uint32_t> labels_;
    std::vector<float> data_;
};

// Binary container, little-endian:
//   magic "DCEB" | version u32 = 1 | dim u32 | count u64 |
//   count x (label u32, dim x f32)
// Optional JSON sidecar "<path>.manifest.json":
//   { "labels": { "<id>": { "name": str, "attribute": str } } }
LabeledEmbeddingSet read_embedding_file(const std::string& path);
void write_embedding_file(const LabeledEmbeddingSet& set, const std::string& path);

// Same container, relaxed validation (finite values only).
StyleFeatureSet read_style_file(const std::string& path);
void write_style_file(const StyleFeatureSet& set, const std::string& path);

// Partition of record indices by label; within-group record order preserved.
std::map<std::uint32_t, std::vector<std::size_t>> group_by_label(const LabeledEmbeddingSet& set);
std::map<std::uint32_t, std::vector<std::size_t>> group_by_label(const StyleFeatureSet& set);

std::string manifest_path_for(const std::string& embedding_path);

} // namespace dckit
