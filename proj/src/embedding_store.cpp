#include "dckit/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dckit/errors.hpp"
#include "dckit/kernels.hpp"

namespace dckit {
namespace {

constexpr char kMagic[4] = {'D', 'C', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

// Explicit little-endian packing keeps the format byte-identical on any host.
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n) throw CorruptionError("embedding file truncated");
    }

    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void validate_vector(std::span<const float> vec, std::uint32_t dim, bool require_nonzero,
                     std::size_t record_index) {
    if (vec.size() != dim)
        throw DimensionError("record " + std::to_string(record_index) + ": vector length " +
                             std::to_string(vec.size()) + " != dim " + std::to_string(dim));
    for (const float v : vec)
        if (!std::isfinite(v))
            throw ValidationError("record " + std::to_string(record_index) +
                                  ": non-finite value in vector");
    if (require_nonzero) {
        const double sq = kern::active().dot_f32(vec.data(), vec.data(), vec.size());
        if (sq == 0.0)
            throw ValidationError("record " + std::to_string(record_index) +
                                  ": zero-norm identity vector (cosine undefined)");
    }
}

struct RawSet {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> labels;
    std::vector<float> data;
};

RawSet read_raw(const std::string& path) {
    const std::string bytes = slurp(path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("bad magic in " + path);
    Reader r(bytes.data() + 4, bytes.size() - 4);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version) + " in " + path);
    RawSet raw;
    raw.dim = r.u32();
    const std::uint64_t count = r.u64();
    if (raw.dim == 0 || count == 0) throw EmptySetError("empty embedding set in " + path);
    raw.labels.reserve(count);
    raw.data.reserve(count * raw.dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        raw.labels.push_back(r.u32());
        for (std::uint32_t d = 0; d < raw.dim; ++d) raw.data.push_back(r.f32());
    }
    if (r.remaining() != 0)
        throw CorruptionError("trailing bytes after declared records in " + path);
    return raw;
}

std::string encode_payload(std::uint32_t dim, const std::vector<std::uint32_t>& labels,
                           const std::vector<float>& flat) {
    std::string out;
    out.reserve(16 + labels.size() * (4 + dim * 4ull));
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, dim);
    put_u64(out, labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        put_u32(out, labels[i]);
        for (std::uint32_t d = 0; d < dim; ++d) put_f32(out, flat[i * dim + d]);
    }
    return out;
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

} // namespace

void LabeledEmbeddingSet::add(std::uint32_t label, std::span<const float> vec) {
    if (dim_ == 0) {
        if (vec.empty()) throw DimensionError("embedding dim must be positive");
        dim_ = static_cast<std::uint32_t>(vec.size());
    }
    validate_vector(vec, dim_, /*require_nonzero=*/true, labels_.size());
    labels_.push_back(label);
    data_.insert(data_.end(), vec.begin(), vec.end());
}

void LabeledEmbeddingSet::set_attribute(std::uint32_t label, const std::string& tag) {
    if (!has_label(label))
        throw ValidationError("attribute references unknown label " + std::to_string(label));
    attributes_[label] = tag;
}

void LabeledEmbeddingSet::set_name(std::uint32_t label, const std::string& name) {
    if (!has_label(label))
        throw ValidationError("name references unknown label " + std::to_string(label));
    names_[label] = name;
}

bool LabeledEmbeddingSet::has_label(std::uint32_t label) const {
    for (const auto l : labels_)
        if (l == label) return true;
    return false;
}

void StyleFeatureSet::add(std::uint32_t label, std::span<const float> vec) {
    if (dim_ == 0) {
        if (vec.empty()) throw DimensionError("style dim must be positive");
        dim_ = static_cast<std::uint32_t>(vec.size());
    }
    validate_vector(vec, dim_, /*require_nonzero=*/false, labels_.size());
    labels_.push_back(label);
    data_.insert(data_.end(), vec.begin(), vec.end());
}

std::string manifest_path_for(const std::string& embedding_path) {
    return embedding_path + ".manifest.json";
}

LabeledEmbeddingSet read_embedding_file(const std::string& path) {
    RawSet raw = read_raw(path);
    LabeledEmbeddingSet set(raw.dim);
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
        set.add(raw.labels[i], std::span<const float>(raw.data.data() + i * raw.dim, raw.dim));

    const std::string manifest = manifest_path_for(path);
    if (std::filesystem::exists(manifest)) {
        nlohmann::json j;
        try {
            std::ifstream in(manifest);
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad manifest " + manifest + ": " + e.what());
        }
        if (j.contains("labels")) {
            for (const auto& [key, entry] : j.at("labels").items()) {
                std::uint32_t label = 0;
                try {
                    label = static_cast<std::uint32_t>(std::stoul(key));
                } catch (const std::exception&) {
                    throw FormatError("bad label key '" + key + "' in " + manifest);
                }
                try {
                    if (entry.contains("attribute"))
                        set.set_attribute(label, entry.at("attribute").get<std::string>());
                    if (entry.contains("name"))
                        set.set_name(label, entry.at("name").get<std::string>());
                } catch (const ValidationError& e) {
                    // a manifest disagreeing with its payload is a file problem
                    throw FormatError(std::string(e.what()) + " in " + manifest);
                }
            }
        }
    }
    return set;
}

void write_embedding_file(const LabeledEmbeddingSet& set, const std::string& path) {
    if (set.empty() || set.dim() == 0)
        throw EmptySetError("refusing to write empty embedding set");
    write_bytes(path, encode_payload(set.dim(), set.labels(), set.flat()));

    const std::string manifest = manifest_path_for(path);
    if (set.attributes().empty() && set.names().empty()) {
        std::filesystem::remove(manifest); // keep a rewrite from resurrecting stale tags
        return;
    }
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [label, name] : set.names()) labels[std::to_string(label)]["name"] = name;
    for (const auto& [label, tag] : set.attributes())
        labels[std::to_string(label)]["attribute"] = tag;
    nlohmann::json j;
    j["labels"] = labels;
    write_bytes(manifest, j.dump(2) + "\n");
}

StyleFeatureSet read_style_file(const std::string& path) {
    RawSet raw = read_raw(path);
    StyleFeatureSet set(raw.dim);
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
        set.add(raw.labels[i], std::span<const float>(raw.data.data() + i * raw.dim, raw.dim));
    return set;
}

void write_style_file(const StyleFeatureSet& set, const std::string& path) {
    if (set.empty() || set.dim() == 0) throw EmptySetError("refusing to write empty style set");
    write_bytes(path, encode_payload(set.dim(), set.labels(), set.flat()));
}

std::map<std::uint32_t, std::vector<std::size_t>> group_by_label(const LabeledEmbeddingSet& set) {
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < set.size(); ++i) groups[set.label(i)].push_back(i);
    return groups;
}

std::map<std::uint32_t, std::vector<std::size_t>> group_by_label(const StyleFeatureSet& set) {
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < set.size(); ++i) groups[set.label(i)].push_back(i);
    return groups;
}

} // namespace dckit
