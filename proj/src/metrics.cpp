#include "dckit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dckit/errors.hpp"
#include "dckit/kernels.hpp"
#include "dckit/parallel.hpp"

namespace dckit {
namespace {

double checked_cosine(double dot, double asq, double bsq) {
    if (asq == 0.0 || bsq == 0.0)
        throw UndefinedSimilarityError("cosine similarity undefined for zero-norm vector");
    const double sim = dot / (std::sqrt(asq) * std::sqrt(bsq));
    return std::clamp(sim, -1.0, 1.0);
}

template <typename T>
double row_cosine(const T* a, const T* b, std::size_t dim);

template <>
double row_cosine<float>(const float* a, const float* b, std::size_t dim) {
    const auto& k = kern::active();
    return checked_cosine(k.dot_f32(a, b, dim), k.dot_f32(a, a, dim), k.dot_f32(b, b, dim));
}

template <>
double row_cosine<double>(const double* a, const double* b, std::size_t dim) {
    const auto& k = kern::active();
    return checked_cosine(k.dot_f64(a, b, dim), k.dot_f64(a, a, dim), k.dot_f64(b, b, dim));
}

template <typename T>
UniqueScan greedy_unique(std::span<const T> flat, std::size_t dim, double tau, MatchMode mode) {
    if (dim == 0) throw DimensionError("uniqueness scan needs positive dim");
    if (flat.size() % dim != 0)
        throw DimensionError("flat feature buffer is not a multiple of dim");
    const std::size_t n = flat.size() / dim;
    UniqueScan scan;
    // The accept/reject sequence is inherently sequential: each candidate is
    // compared only against the representatives kept so far, in input order.
    for (std::size_t i = 0; i < n; ++i) {
        const T* vi = flat.data() + i * dim;
        bool unique = true;
        for (const std::size_t j : scan.kept) {
            const double sim = row_cosine<T>(vi, flat.data() + j * dim, dim);
            if (pair_matches(sim, tau, mode)) {
                unique = false;
                break;
            }
        }
        if (unique) scan.kept.push_back(i);
    }
    scan.count = scan.kept.size();
    return scan;
}

void require_tau(double tau) {
    if (!(tau > -1.0 && tau < 1.0))
        throw ValidationError("tau must lie strictly inside (-1, 1)");
}

} // namespace

bool pair_matches(double cos_sim, double tau, MatchMode mode) {
    if (mode == MatchMode::similarity) return cos_sim >= tau;
    return 1.0 - cos_sim <= tau; // cosine-distance reading of the threshold
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("cosine similarity needs equal, nonzero dims");
    return row_cosine<float>(a.data(), b.data(), a.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("cosine similarity needs equal, nonzero dims");
    return row_cosine<double>(a.data(), b.data(), a.size());
}

double cosine_similarity(std::span<const float> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("cosine similarity needs equal, nonzero dims");
    const auto& k = kern::active();
    return checked_cosine(k.dot_f32f64(a.data(), b.data(), a.size()),
                          k.dot_f32(a.data(), a.data(), a.size()),
                          k.dot_f64(b.data(), b.data(), b.size()));
}

std::map<std::uint32_t, std::vector<double>> class_centers(const LabeledEmbeddingSet& set) {
    if (set.empty()) throw EmptySetError("class centers of an empty set");
    const std::size_t dim = set.dim();
    std::map<std::uint32_t, std::vector<double>> centers;
    std::map<std::uint32_t, std::size_t> counts;
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto& center = centers[set.label(i)];
        if (center.empty()) center.assign(dim, 0.0);
        const auto row = set.vec(i);
        for (std::size_t d = 0; d < dim; ++d) center[d] += static_cast<double>(row[d]);
        ++counts[set.label(i)];
    }
    const auto& k = kern::active();
    for (auto& [label, center] : centers) {
        const double inv = 1.0 / static_cast<double>(counts[label]);
        for (auto& v : center) v *= inv;
        if (k.dot_f64(center.data(), center.data(), dim) == 0.0)
            throw DegenerateCenterError("class " + std::to_string(label) +
                                        " has a zero mean vector");
    }
    return centers;
}

UniqueScan uniqueness_unlabeled(std::span<const float> flat, std::size_t dim, double tau,
                                MatchMode mode) {
    require_tau(tau);
    return greedy_unique<float>(flat, dim, tau, mode);
}

UniqueScan uniqueness_unlabeled(std::span<const double> flat, std::size_t dim, double tau,
                                MatchMode mode) {
    require_tau(tau);
    return greedy_unique<double>(flat, dim, tau, mode);
}

double u_class(const LabeledEmbeddingSet& set, double tau, MatchMode mode) {
    require_tau(tau);
    const auto centers = class_centers(set); // ascending label order
    const std::size_t dim = set.dim();
    std::vector<double> flat;
    flat.reserve(centers.size() * dim);
    for (const auto& [label, center] : centers) flat.insert(flat.end(), center.begin(), center.end());
    const auto scan = greedy_unique<double>(std::span<const double>(flat), dim, tau, mode);
    return static_cast<double>(scan.count) / static_cast<double>(centers.size());
}

double c_intra(const LabeledEmbeddingSet& set, double tau, MatchMode mode) {
    require_tau(tau);
    const auto centers = class_centers(set);
    const auto groups = group_by_label(set);
    const auto& k = kern::active();
    const std::size_t dim = set.dim();
    double class_sum = 0.0;
    for (const auto& [label, members] : groups) {
        const auto& center = centers.at(label);
        const double csq = k.dot_f64(center.data(), center.data(), dim);
        std::size_t matched = 0;
        for (const std::size_t i : members) {
            const auto row = set.vec(i);
            const double sim = checked_cosine(k.dot_f32f64(row.data(), center.data(), dim),
                                              k.dot_f32(row.data(), row.data(), dim), csq);
            if (pair_matches(sim, tau, mode)) ++matched;
        }
        class_sum += static_cast<double>(matched) / static_cast<double>(members.size());
    }
    return class_sum / static_cast<double>(groups.size());
}

double knn_radius(std::span<const float> flat, std::size_t dim, std::size_t query, int k) {
    if (dim == 0 || flat.size() % dim != 0)
        throw DimensionError("knn_radius: bad flat buffer / dim");
    const std::size_t n = flat.size() / dim;
    if (k < 1) throw ValidationError("knn_radius: k must be >= 1");
    if (query >= n) throw ValidationError("knn_radius: query index out of range");
    if (n < static_cast<std::size_t>(k) + 1)
        throw InsufficientPointsError("knn_radius: need at least k+1 points, have " +
                                      std::to_string(n));
    const auto& ops = kern::active();
    const float* q = flat.data() + query * dim;
    std::vector<std::pair<double, std::size_t>> dists;
    dists.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == query) continue;
        dists.emplace_back(std::sqrt(ops.l2sq_f32(q, flat.data() + i * dim, dim)), i);
    }
    // lexicographic order implements the smaller-index tie break
    std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
    return dists[k - 1].first;
}

double d_intra(const StyleFeatureSet& real, const StyleFeatureSet& gen, int k) {
    if (real.dim() != gen.dim()) throw DimensionError("d_intra: style dims differ");
    if (k < 1) throw ValidationError("d_intra: k must be >= 1");
    const auto real_groups = group_by_label(real);
    const auto gen_groups = group_by_label(gen);
    if (real_groups.size() != gen_groups.size())
        throw ValidationError("d_intra: real and generated label vocabularies differ");
    for (const auto& [label, members] : real_groups)
        if (!gen_groups.count(label))
            throw ValidationError("d_intra: label " + std::to_string(label) +
                                  " missing from generated set");
    const std::size_t dim = real.dim();
    const auto& ops = kern::active();

    double class_sum = 0.0;
    for (const auto& [label, real_members] : real_groups) {
        const auto& gen_members = gen_groups.at(label);
        if (gen_members.size() < static_cast<std::size_t>(k) + 1)
            throw InsufficientPointsError("d_intra: class " + std::to_string(label) + " has " +
                                          std::to_string(gen_members.size()) +
                                          " generated points, needs k+1 = " +
                                          std::to_string(k + 1));
        // gather the class's generated rows once
        std::vector<float> gen_flat(gen_members.size() * dim);
        for (std::size_t j = 0; j < gen_members.size(); ++j)
            std::copy_n(gen.vec(gen_members[j]).data(), dim, gen_flat.data() + j * dim);

        std::vector<double> radii(gen_members.size());
        parallel_for(gen_members.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j)
                radii[j] = knn_radius(gen_flat, dim, j, k);
        });

        std::vector<unsigned char> covered(real_members.size(), 0);
        parallel_for(real_members.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const float* ri = real.vec(real_members[i]).data();
                for (std::size_t j = 0; j < gen_members.size(); ++j) {
                    const double dist = std::sqrt(ops.l2sq_f32(ri, gen_flat.data() + j * dim, dim));
                    if (dist <= radii[j]) {
                        covered[i] = 1;
                        break;
                    }
                }
            }
        });
        std::size_t hits = 0;
        for (const auto c : covered) hits += c;
        class_sum += static_cast<double>(hits) / static_cast<double>(real_members.size());
    }
    return class_sum / static_cast<double>(real_groups.size());
}

double fid(const StyleFeatureSet& a, const StyleFeatureSet& b) {
    if (a.dim() != b.dim()) throw DimensionError("fid: style dims differ");
    if (a.size() < 2 || b.size() < 2)
        throw InsufficientPointsError("fid: each set needs at least 2 points");
    const auto dim = static_cast<Eigen::Index>(a.dim());

    const auto moments = [dim](const StyleFeatureSet& s) {
        const auto n = static_cast<Eigen::Index>(s.size());
        Eigen::MatrixXd x(n, dim);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index d = 0; d < dim; ++d)
                x(i, d) = static_cast<double>(s.vec(static_cast<std::size_t>(i))[d]);
        const Eigen::VectorXd mu = x.colwise().mean();
        const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        const Eigen::MatrixXd cov =
            centered.transpose() * centered / static_cast<double>(n - 1);
        return std::make_pair(mu, cov);
    };

    const auto [mu_a, cov_a] = moments(a);
    const auto [mu_b, cov_b] = moments(b);

    // sqrt(cov_a) via eigendecomposition, negative eigenvalues clamped
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    Eigen::VectorXd ev = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a =
        es_a.eigenvectors() * ev.asDiagonal() * es_a.eigenvectors().transpose();

    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose()); // symmetrize before decomposing
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(inner);
    const double trace_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value =
        (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    return std::max(value, 0.0);
}

std::vector<std::pair<std::size_t, std::size_t>> unique_count_curve(
    std::span<const float> flat, std::size_t dim, double tau,
    std::span<const std::size_t> checkpoints, MatchMode mode) {
    require_tau(tau);
    if (dim == 0 || flat.size() % dim != 0)
        throw DimensionError("unique_count_curve: bad flat buffer / dim");
    const std::size_t n = flat.size() / dim;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        if (checkpoints[c] > n)
            throw ValidationError("checkpoint exceeds feature count");
        if (c > 0 && checkpoints[c] < checkpoints[c - 1])
            throw ValidationError("checkpoints must be ascending");
    }
    // One greedy pass; the kept set after the first n records equals a fresh
    // scan of that prefix, so checkpoints can be read off along the way.
    std::vector<std::pair<std::size_t, std::size_t>> curve;
    curve.reserve(checkpoints.size());
    std::vector<std::size_t> kept;
    std::size_t next_cp = 0;
    while (next_cp < checkpoints.size() && checkpoints[next_cp] == 0) {
        curve.emplace_back(0, 0);
        ++next_cp;
    }
    for (std::size_t i = 0; i < n && next_cp < checkpoints.size(); ++i) {
        const float* vi = flat.data() + i * dim;
        bool unique = true;
        for (const std::size_t j : kept) {
            if (pair_matches(row_cosine<float>(vi, flat.data() + j * dim, dim), tau, mode)) {
                unique = false;
                break;
            }
        }
        if (unique) kept.push_back(i);
        while (next_cp < checkpoints.size() && checkpoints[next_cp] == i + 1) {
            curve.emplace_back(checkpoints[next_cp], kept.size());
            ++next_cp;
        }
    }
    return curve;
}

MetricReport metric_report(const LabeledEmbeddingSet& id_set, const StyleFeatureSet* real_styles,
                           const StyleFeatureSet* gen_styles, const MetricParams& params) {
    MetricReport report;
    report.params = params;
    report.u_class = u_class(id_set, params.tau, params.mode);
    report.c_intra = c_intra(id_set, params.tau, params.mode);
    if (real_styles != nullptr && gen_styles != nullptr) {
        report.d_intra = d_intra(*real_styles, *gen_styles, params.k_nn);
        report.fid = fid(*real_styles, *gen_styles);
    }
    const auto groups = group_by_label(id_set);
    report.class_count = groups.size();
    for (const auto& [label, members] : groups) report.per_class_counts.push_back(members.size());
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["u_class"] = report.u_class;
    j["c_intra"] = report.c_intra;
    if (report.d_intra)
        j["d_intra"] = *report.d_intra;
    else
        j["d_intra"] = nullptr;
    if (report.fid)
        j["fid"] = *report.fid;
    else
        j["fid"] = nullptr;
    j["tau"] = report.params.tau;
    j["k_nn"] = report.params.k_nn;
    j["mode"] = report.params.mode == MatchMode::similarity ? "similarity" : "distance";
    j["class_count"] = report.class_count;
    j["per_class_counts"] = report.per_class_counts;
    j["input_digests"] = report.input_digests;
    return j.dump(2) + "\n";
}

} // namespace dckit
