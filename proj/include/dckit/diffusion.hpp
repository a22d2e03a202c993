#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dckit {

// Dense row-major tensor of doubles. A leading extent of zero is allowed
// (empty condition blocks); all extents must otherwise be positive and the
// payload finite.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);
    static Tensor zeros(std::vector<std::size_t> s);

    std::size_t numel() const;
    std::size_t rank() const { return shape.size(); }

    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Variance schedule. betas[t-1] and alpha_bars[t-1] hold the values for
// timestep t in 1..T; alpha_bar_at(0) == 1 by convention.
struct ScheduleTable {
    std::size_t T = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;

    double alpha_bar_at(std::size_t t) const;
    double beta_at(std::size_t t) const;
};

// Linear beta ramp from beta_start to beta_end; alpha_bars are the running
// products of (1 - beta).
ScheduleTable make_schedule(std::size_t T, double beta_start, double beta_end);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise.
Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps,
                     const ScheduleTable& sched);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_pred) / sqrt(abar_t).
Tensor predict_x0(const Tensor& xt, const Tensor& eps_pred, std::size_t t,
                  const ScheduleTable& sched);

// Deterministic (eta = 0) update:
// x_{t_prev} = sqrt(abar_{t_prev}) x0_hat + sqrt(1 - abar_{t_prev}) eps_pred.
Tensor ddim_step(const Tensor& xt, const Tensor& eps_pred, std::size_t t, std::size_t t_prev,
                 const ScheduleTable& sched);

// Descending sampling subsequence: T-1, T-1-stride, ... with
// stride = floor(T / intervals); exactly `intervals` entries.
std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t intervals);

// Time-dependent interpolation weight, t/T in [0, 1].
double gamma_weight(std::size_t t, std::size_t T);

// -gamma_t CS(f_id, f_x0hat) - (1 - gamma_t) CS(f_sty, f_x0hat).
double id_loss(std::span<const double> f_id, std::span<const double> f_sty,
               std::span<const double> f_x0hat, std::size_t t, std::size_t T);

// mse + lambda * id_loss_value.
double total_loss(double mse, double id_loss_value, double lambda = 0.05);

// (k^2 + 1) x C style-condition matrix: k^2 patch vectors then the global
// vector last.
struct StyleVectorSet {
    std::size_t grid_k = 0;
    std::size_t channels = 0;
    std::vector<double> rows; // (grid_k^2 + 1) * channels

    std::size_t row_count() const { return grid_k * grid_k + 1; }
    std::span<const double> row(std::size_t r) const {
        return {rows.data() + r * channels, channels};
    }
    std::span<double> row(std::size_t r) { return {rows.data() + r * channels, channels}; }
};

struct LayerNormSurrogate {
    bool enabled = false; // identity pass-through by default
    std::vector<double> gain;
    std::vector<double> bias;
};

// Deterministic stand-ins for the trained parts of the style extractor:
// a fixed channel-mixing affine replaces the conv stack, dropout is identity.
struct StyleExtractorWeights {
    std::vector<double> w1;          // C, scales the patch means
    std::vector<double> w2;          // C, scales the patch stds
    std::vector<double> p_emb;       // (k^2 + 1) x C position embedding
    std::vector<double> affine;      // C x C channel-mixing matrix
    std::vector<double> affine_bias; // C
    LayerNormSurrogate layer_norm;

    static StyleExtractorWeights identity(std::size_t channels, std::size_t grid_k);
    static StyleExtractorWeights seeded(std::size_t channels, std::size_t grid_k,
                                        std::uint64_t seed);
};

// Partitions the C x H x W map into grid_k x grid_k near-equal patches, takes
// per-channel spatial mean/std of the affine-mixed values in each patch,
// forms LN((w1 . mean + w2 . std) + p_emb row), and appends the 1x1 global
// row last. Patch rows are ordered row-major.
StyleVectorSet extract_style(const Tensor& feature_map, std::size_t grid_k,
                             const StyleExtractorWeights& weights);

// Rows 0..48 are the row-major flattened 7x7xC spatial features, row 49 the
// global vector; P_emb (50 x C) is added elementwise.
Tensor encode_id_condition(const Tensor& spatial, std::span<const double> global_vec,
                           const Tensor& p_emb_id);

struct AttentionWeights {
    Tensor wq, wk, wv; // each d x d

    static AttentionWeights identity(std::size_t d);
    static AttentionWeights seeded(std::size_t d, std::uint64_t seed);
};

// Scaled dot-product attention where keys/values are the concatenation of
// kv_self and kv_cond rows. kv_cond may have zero rows, which reduces to
// plain self-attention. Values are projected before the attention average.
Tensor cross_attention(const Tensor& q, const Tensor& kv_self, const Tensor& kv_cond,
                       const AttentionWeights& weights);

// eps_uncond + scale * (eps_cond - eps_uncond); exact at scale 0 and 1.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

// Rowwise convex combination alpha * s1 + (1 - alpha) * s2, alpha in [0, 1].
StyleVectorSet interp_style(const StyleVectorSet& s1, const StyleVectorSet& s2, double alpha);

// Residual-block conditioning contract: channel c of the C x H x W map is
// scaled by (t_emb[c] + f_id[c]).
Tensor residual_modulation(const Tensor& feature_map, std::span<const double> t_emb,
                           std::span<const double> f_id);

// Fixed-seed stand-in for the recognition backbone: seeded affine projection
// of the flattened tensor, squashed and normalized to unit length.
std::vector<double> toy_feature_encoder(const Tensor& x, std::size_t out_dim,
                                        std::uint64_t seed);

// ---- conformance ----

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_abs_error = 0.0;
};

// Registry of invariant checks run by kernel_check, in report order.
const std::vector<std::string>& kernel_check_names();

// Runs every named invariant check with seeded fixtures. schedule_override
// (test hook) substitutes the schedule used by the schedule checks.
std::vector<CheckResult> kernel_check(std::uint64_t seed,
                                      const ScheduleTable* schedule_override = nullptr);

} // namespace dckit
