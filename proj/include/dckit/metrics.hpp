#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dckit/embedding_store.hpp"

namespace dckit {

// Whether tau is read as a similarity threshold (pair matches when
// cos >= tau; the default, per the dedup convention) or as a cosine-distance
// threshold (pair matches when 1 - cos <= tau).
enum class MatchMode { similarity, distance };

struct MetricParams {
    double tau = 0.3;
    int k_nn = 3;
    MatchMode mode = MatchMode::similarity;
};

struct MetricReport {
    double u_class = 0.0;
    double c_intra = 0.0;
    std::optional<double> d_intra;
    std::optional<double> fid;
    MetricParams params;
    std::size_t class_count = 0;
    std::vector<std::size_t> per_class_counts; // ascending label order
    std::map<std::string, std::string> input_digests;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const float> a, std::span<const double> b);

// True when the pair counts as the same subject under tau.
bool pair_matches(double cos_sim, double tau, MatchMode mode);

// label -> arithmetic mean of the class's vectors (not re-normalized;
// cosine use downstream is scale-invariant). Zero-mean class is an error.
std::map<std::uint32_t, std::vector<double>> class_centers(const LabeledEmbeddingSet& set);

struct UniqueScan {
    std::size_t count = 0;
    std::vector<std::size_t> kept; // indices into the input order
};

// Greedy sequential scan in input order: index i is kept iff it matches no
// previously kept index. `flat` holds count x dim values row-major.
UniqueScan uniqueness_unlabeled(std::span<const float> flat, std::size_t dim, double tau,
                                MatchMode mode = MatchMode::similarity);
UniqueScan uniqueness_unlabeled(std::span<const double> flat, std::size_t dim, double tau,
                                MatchMode mode = MatchMode::similarity);

// |U_c| / C over class centers visited in ascending label order.
double u_class(const LabeledEmbeddingSet& set, double tau,
               MatchMode mode = MatchMode::similarity);

// Mean over classes of the fraction of samples matching their class center.
// Classes weigh equally regardless of size.
double c_intra(const LabeledEmbeddingSet& set, double tau,
               MatchMode mode = MatchMode::similarity);

// Euclidean distance from points[query] to its k-th nearest neighbor among
// the other rows (self excluded, ties broken by smaller index).
double knn_radius(std::span<const float> flat, std::size_t dim, std::size_t query, int k);

// Mean over classes of the fraction of real style points covered by the
// generated style manifold (k-NN ball recall, computed per class).
double d_intra(const StyleFeatureSet& real, const StyleFeatureSet& gen, int k);

// Frechet distance between the Gaussian moment matches of the two sets:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)). Unbiased covariance.
double fid(const StyleFeatureSet& a, const StyleFeatureSet& b);

// Prefix unique counts at each checkpoint; one greedy pass over the input.
std::vector<std::pair<std::size_t, std::size_t>> unique_count_curve(
    std::span<const float> flat, std::size_t dim, double tau,
    std::span<const std::size_t> checkpoints, MatchMode mode = MatchMode::similarity);

// Aggregates the single metrics. d_intra and fid are present iff both style
// sets are supplied.
MetricReport metric_report(const LabeledEmbeddingSet& id_set, const StyleFeatureSet* real_styles,
                           const StyleFeatureSet* gen_styles, const MetricParams& params);

std::string report_to_json(const MetricReport& report);

} // namespace dckit
