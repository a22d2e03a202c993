#include "dckit/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dckit/errors.hpp"
#include "dckit/kernels.hpp"
#include "dckit/rng.hpp"

namespace dckit {
namespace {

constexpr double kAlphaBarFloor = 1e-12;
constexpr double kStatsEps = 1e-5; // under the sqrt of the patch std
constexpr double kLayerNormEps = 1e-5;

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": tensor shapes differ");
}

void require_t(std::size_t t, const ScheduleTable& sched, const char* what) {
    if (t < 1 || t > sched.T)
        throw ValidationError(std::string(what) + ": timestep " + std::to_string(t) +
                              " outside 1.." + std::to_string(sched.T));
}

double checked_dot(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError(std::string(what) + ": vector dims differ");
    return kern::active().dot_f64(a.data(), b.data(), a.size());
}

double cosine_f64(std::span<const double> a, std::span<const double> b, const char* what) {
    const double dot = checked_dot(a, b, what);
    const double asq = kern::active().dot_f64(a.data(), a.data(), a.size());
    const double bsq = kern::active().dot_f64(b.data(), b.data(), b.size());
    if (asq == 0.0 || bsq == 0.0)
        throw UndefinedSimilarityError(std::string(what) + ": zero-norm vector");
    return std::clamp(dot / (std::sqrt(asq) * std::sqrt(bsq)), -1.0, 1.0);
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel()) throw DimensionError("tensor data length does not match shape");
    for (const double v : data)
        if (!std::isfinite(v)) throw ValidationError("tensor contains non-finite value");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(t.numel(), 0.0);
    return t;
}

std::size_t Tensor::numel() const {
    std::size_t n = 1;
    for (const std::size_t e : shape) n *= e;
    return shape.empty() ? 0 : n;
}

double ScheduleTable::alpha_bar_at(std::size_t t) const {
    if (t == 0) return 1.0;
    if (t > T) throw ValidationError("alpha_bar_at: timestep beyond T");
    return alpha_bars[t - 1];
}

double ScheduleTable::beta_at(std::size_t t) const {
    if (t < 1 || t > T) throw ValidationError("beta_at: timestep outside 1..T");
    return betas[t - 1];
}

ScheduleTable make_schedule(std::size_t T, double beta_start, double beta_end) {
    if (T < 1) throw ValidationError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ValidationError("make_schedule: need 0 < beta_start <= beta_end < 1");
    ScheduleTable sched;
    sched.T = T;
    sched.betas.resize(T);
    sched.alpha_bars.resize(T);
    double running = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double frac =
            T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        sched.betas[i] = beta_start + (beta_end - beta_start) * frac;
        running *= 1.0 - sched.betas[i];
        sched.alpha_bars[i] = running;
        if (running <= 0.0 || (i > 0 && sched.alpha_bars[i] >= sched.alpha_bars[i - 1]))
            throw ValidationError("make_schedule: alpha_bar not strictly decreasing");
    }
    return sched;
}

Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps,
                     const ScheduleTable& sched) {
    require_same_shape(x0, eps, "forward_noise");
    require_t(t, sched, "forward_noise");
    const double abar = sched.alpha_bar_at(t);
    Tensor out = x0;
    kern::active().axpby_f64(std::sqrt(abar), x0.data.data(), std::sqrt(1.0 - abar),
                             eps.data.data(), out.data.data(), out.data.size());
    return out;
}

Tensor predict_x0(const Tensor& xt, const Tensor& eps_pred, std::size_t t,
                  const ScheduleTable& sched) {
    require_same_shape(xt, eps_pred, "predict_x0");
    require_t(t, sched, "predict_x0");
    const double abar = sched.alpha_bar_at(t);
    if (abar <= kAlphaBarFloor)
        throw SingularStepError("predict_x0: alpha_bar at t=" + std::to_string(t) +
                                " below numerical floor");
    const double inv_sqrt = 1.0 / std::sqrt(abar);
    const double coeff_eps = -std::sqrt(1.0 - abar) * inv_sqrt;
    Tensor out = xt;
    kern::active().axpby_f64(inv_sqrt, xt.data.data(), coeff_eps, eps_pred.data.data(),
                             out.data.data(), out.data.size());
    return out;
}

Tensor ddim_step(const Tensor& xt, const Tensor& eps_pred, std::size_t t, std::size_t t_prev,
                 const ScheduleTable& sched) {
    if (t_prev >= t)
        throw ValidationError("ddim_step: t_prev must be strictly below t");
    const Tensor x0_hat = predict_x0(xt, eps_pred, t, sched);
    const double abar_prev = sched.alpha_bar_at(t_prev);
    Tensor out = xt;
    kern::active().axpby_f64(std::sqrt(abar_prev), x0_hat.data.data(),
                             std::sqrt(1.0 - abar_prev), eps_pred.data.data(), out.data.data(),
                             out.data.size());
    return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t intervals) {
    if (intervals < 1 || intervals > T)
        throw ValidationError("ddim_timesteps: intervals must lie in 1..T");
    const std::size_t stride = T / intervals;
    std::vector<std::size_t> steps(intervals);
    for (std::size_t k = 0; k < intervals; ++k) steps[k] = (T - 1) - k * stride;
    return steps;
}

double gamma_weight(std::size_t t, std::size_t T) {
    if (T < 1) throw ValidationError("gamma_weight: T must be >= 1");
    if (t > T) throw ValidationError("gamma_weight: t must lie in 0..T");
    return static_cast<double>(t) / static_cast<double>(T);
}

double id_loss(std::span<const double> f_id, std::span<const double> f_sty,
               std::span<const double> f_x0hat, std::size_t t, std::size_t T) {
    const double gamma = gamma_weight(t, T);
    const double cs_id = cosine_f64(f_id, f_x0hat, "id_loss");
    const double cs_sty = cosine_f64(f_sty, f_x0hat, "id_loss");
    return -gamma * cs_id - (1.0 - gamma) * cs_sty;
}

double total_loss(double mse, double id_loss_value, double lambda) {
    if (lambda < 0.0) throw ValidationError("total_loss: lambda must be >= 0");
    return mse + lambda * id_loss_value;
}

StyleExtractorWeights StyleExtractorWeights::identity(std::size_t channels, std::size_t grid_k) {
    StyleExtractorWeights w;
    w.w1.assign(channels, 1.0);
    w.w2.assign(channels, 1.0);
    w.p_emb.assign((grid_k * grid_k + 1) * channels, 0.0);
    w.affine.assign(channels * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) w.affine[c * channels + c] = 1.0;
    w.affine_bias.assign(channels, 0.0);
    w.layer_norm.enabled = false;
    return w;
}

StyleExtractorWeights StyleExtractorWeights::seeded(std::size_t channels, std::size_t grid_k,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    StyleExtractorWeights w;
    const auto draw = [&rng](double scale) { return scale * rng.next_gaussian(); };
    w.w1.resize(channels);
    w.w2.resize(channels);
    for (auto& v : w.w1) v = 1.0 + draw(0.1);
    for (auto& v : w.w2) v = 1.0 + draw(0.1);
    w.p_emb.resize((grid_k * grid_k + 1) * channels);
    for (auto& v : w.p_emb) v = draw(0.05);
    w.affine.resize(channels * channels);
    for (auto& v : w.affine) v = draw(1.0 / std::sqrt(static_cast<double>(channels)));
    w.affine_bias.resize(channels);
    for (auto& v : w.affine_bias) v = draw(0.05);
    w.layer_norm.enabled = true;
    w.layer_norm.gain.resize(channels);
    w.layer_norm.bias.resize(channels);
    for (auto& v : w.layer_norm.gain) v = 1.0 + draw(0.05);
    for (auto& v : w.layer_norm.bias) v = draw(0.05);
    return w;
}

namespace {

void validate_style_weights(const StyleExtractorWeights& w, std::size_t channels,
                            std::size_t grid_k) {
    const std::size_t rows = grid_k * grid_k + 1;
    if (w.w1.size() != channels || w.w2.size() != channels)
        throw DimensionError("extract_style: w1/w2 length != channels");
    if (w.p_emb.size() != rows * channels)
        throw DimensionError("extract_style: p_emb must be (k^2+1) x channels");
    if (w.affine.size() != channels * channels || w.affine_bias.size() != channels)
        throw DimensionError("extract_style: affine map must be channels x channels (+bias)");
    if (w.layer_norm.enabled &&
        (w.layer_norm.gain.size() != channels || w.layer_norm.bias.size() != channels))
        throw DimensionError("extract_style: layer-norm gain/bias length != channels");
}

// Per-channel spatial mean/std of the affine-mixed values over one patch.
// Values are sorted before the reductions so the statistics are exactly
// invariant to the pixel enumeration order within the patch.
void patch_statistics(const Tensor& map, std::size_t h0, std::size_t h1, std::size_t w0,
                      std::size_t w1, const StyleExtractorWeights& weights,
                      std::vector<double>& mu, std::vector<double>& sigma,
                      std::vector<double>& scratch) {
    const std::size_t channels = map.shape[0];
    const std::size_t n_pixels = (h1 - h0) * (w1 - w0);
    const auto& k = kern::active();
    std::vector<double> pixel(channels);
    std::vector<double>& mixed = scratch;
    mixed.resize(n_pixels);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* arow = weights.affine.data() + c * channels;
        std::size_t p = 0;
        for (std::size_t h = h0; h < h1; ++h) {
            for (std::size_t w = w0; w < w1; ++w) {
                for (std::size_t cc = 0; cc < channels; ++cc) pixel[cc] = map.at3(cc, h, w);
                mixed[p++] = k.dot_f64(arow, pixel.data(), channels) + weights.affine_bias[c];
            }
        }
        std::sort(mixed.begin(), mixed.end());
        const double mean = k.sum_f64(mixed.data(), n_pixels) / static_cast<double>(n_pixels);
        const double var =
            k.centered_sumsq_f64(mixed.data(), mean, n_pixels) / static_cast<double>(n_pixels);
        mu[c] = mean;
        sigma[c] = std::sqrt(var + kStatsEps);
    }
}

void layer_norm_row(std::span<double> row, const LayerNormSurrogate& ln) {
    if (!ln.enabled) return;
    const auto& k = kern::active();
    const double mean = k.sum_f64(row.data(), row.size()) / static_cast<double>(row.size());
    const double var =
        k.centered_sumsq_f64(row.data(), mean, row.size()) / static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < row.size(); ++c)
        row[c] = (row[c] - mean) * inv * ln.gain[c] + ln.bias[c];
}

} // namespace

StyleVectorSet extract_style(const Tensor& feature_map, std::size_t grid_k,
                             const StyleExtractorWeights& weights) {
    if (feature_map.rank() != 3)
        throw DimensionError("extract_style: feature map must be C x H x W");
    const std::size_t channels = feature_map.shape[0];
    const std::size_t height = feature_map.shape[1];
    const std::size_t width = feature_map.shape[2];
    if (grid_k < 1) throw ValidationError("extract_style: grid_k must be >= 1");
    if (height < grid_k || width < grid_k)
        throw DimensionError("extract_style: grid " + std::to_string(grid_k) +
                             " larger than spatial dims " + std::to_string(height) + "x" +
                             std::to_string(width));
    validate_style_weights(weights, channels, grid_k);

    StyleVectorSet out;
    out.grid_k = grid_k;
    out.channels = channels;
    out.rows.assign((grid_k * grid_k + 1) * channels, 0.0);

    std::vector<double> mu(channels), sigma(channels), scratch;
    const auto emit_row = [&](std::size_t row_index) {
        auto row = out.row(row_index);
        const double* emb = weights.p_emb.data() + row_index * channels;
        for (std::size_t c = 0; c < channels; ++c)
            row[c] = (weights.w1[c] * mu[c] + weights.w2[c] * sigma[c]) + emb[c];
        layer_norm_row(row, weights.layer_norm);
    };

    for (std::size_t i = 0; i < grid_k; ++i) {
        const std::size_t h0 = i * height / grid_k;
        const std::size_t h1 = (i + 1) * height / grid_k;
        for (std::size_t j = 0; j < grid_k; ++j) {
            const std::size_t w0 = j * width / grid_k;
            const std::size_t w1 = (j + 1) * width / grid_k;
            patch_statistics(feature_map, h0, h1, w0, w1, weights, mu, sigma, scratch);
            emit_row(i * grid_k + j);
        }
    }
    // global row: the whole map treated as a single 1x1 patch
    patch_statistics(feature_map, 0, height, 0, width, weights, mu, sigma, scratch);
    emit_row(grid_k * grid_k);
    return out;
}

Tensor encode_id_condition(const Tensor& spatial, std::span<const double> global_vec,
                           const Tensor& p_emb_id) {
    if (spatial.rank() != 3 || spatial.shape[0] != 7 || spatial.shape[1] != 7)
        throw DimensionError("encode_id_condition: spatial features must be 7 x 7 x C");
    const std::size_t channels = spatial.shape[2];
    if (global_vec.size() != channels)
        throw DimensionError("encode_id_condition: global vector length != C");
    if (p_emb_id.rank() != 2 || p_emb_id.shape[0] != 50 || p_emb_id.shape[1] != channels)
        throw DimensionError("encode_id_condition: position embedding must be 50 x C");

    Tensor out = Tensor::zeros({50, channels});
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
            for (std::size_t c = 0; c < channels; ++c)
                out.at2(i * 7 + j, c) = spatial.at3(i, j, c);
    for (std::size_t c = 0; c < channels; ++c) out.at2(49, c) = global_vec[c];
    kern::active().axpby_f64(1.0, out.data.data(), 1.0, p_emb_id.data.data(), out.data.data(),
                             out.data.size());
    return out;
}

AttentionWeights AttentionWeights::identity(std::size_t d) {
    AttentionWeights w;
    w.wq = Tensor::zeros({d, d});
    w.wk = Tensor::zeros({d, d});
    w.wv = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        w.wq.at2(i, i) = 1.0;
        w.wk.at2(i, i) = 1.0;
        w.wv.at2(i, i) = 1.0;
    }
    return w;
}

AttentionWeights AttentionWeights::seeded(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const auto fill = [&](Tensor& t) {
        t = Tensor::zeros({d, d});
        for (auto& v : t.data) v = scale * rng.next_gaussian();
    };
    AttentionWeights w;
    fill(w.wq);
    fill(w.wk);
    fill(w.wv);
    return w;
}

namespace {

// rows x d times d x d, row-major
std::vector<double> project(const double* rows, std::size_t n, std::size_t d, const Tensor& w) {
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = rows + i * d;
        for (std::size_t k = 0; k < d; ++k) {
            const double s = src[k];
            if (s == 0.0) continue;
            const double* wrow = w.data.data() + k * d;
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] += s * wrow[j];
        }
    }
    return out;
}

} // namespace

Tensor cross_attention(const Tensor& q, const Tensor& kv_self, const Tensor& kv_cond,
                       const AttentionWeights& weights) {
    if (q.rank() != 2 || kv_self.rank() != 2 || kv_cond.rank() != 2)
        throw DimensionError("cross_attention: inputs must be rank-2");
    const std::size_t n = q.shape[0];
    const std::size_t d = q.shape[1];
    if (kv_self.shape[0] != n || kv_self.shape[1] != d || kv_cond.shape[1] != d)
        throw DimensionError("cross_attention: inconsistent dims");
    if (weights.wq.shape != std::vector<std::size_t>{d, d} ||
        weights.wk.shape != std::vector<std::size_t>{d, d} ||
        weights.wv.shape != std::vector<std::size_t>{d, d})
        throw DimensionError("cross_attention: projection maps must be d x d");
    const std::size_t m = kv_cond.shape[0];
    const std::size_t total = n + m;

    // keys/values over the concatenation [kv_self; kv_cond]
    std::vector<double> concat((n + m) * d);
    std::copy(kv_self.data.begin(), kv_self.data.end(), concat.begin());
    std::copy(kv_cond.data.begin(), kv_cond.data.end(), concat.begin() + n * d);

    const std::vector<double> qp = project(q.data.data(), n, d, weights.wq);
    const std::vector<double> kp = project(concat.data(), total, d, weights.wk);
    const std::vector<double> vp = project(concat.data(), total, d, weights.wv);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const auto& kops = kern::active();
    Tensor out = Tensor::zeros({n, d});
    std::vector<double> logits(total), probs(total);
    for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qp.data() + i * d;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < total; ++j) {
            logits[j] = kops.dot_f64(qi, kp.data() + j * d, d) * inv_sqrt_d;
            max_logit = std::max(max_logit, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < total; ++j) {
            probs[j] = std::exp(logits[j] - max_logit);
            denom += probs[j];
        }
        for (std::size_t j = 0; j < total; ++j) probs[j] /= denom;
        double* oi = out.data.data() + i * d;
        for (std::size_t j = 0; j < total; ++j) {
            const double p = probs[j];
            const double* vj = vp.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) oi[c] += p * vj[c];
        }
    }
    return out;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
    require_same_shape(eps_cond, eps_uncond, "cfg_combine");
    Tensor out = eps_cond;
    kern::active().axpby_f64(scale, eps_cond.data.data(), 1.0 - scale, eps_uncond.data.data(),
                             out.data.data(), out.data.size());
    return out;
}

StyleVectorSet interp_style(const StyleVectorSet& s1, const StyleVectorSet& s2, double alpha) {
    if (s1.grid_k != s2.grid_k || s1.channels != s2.channels)
        throw DimensionError("interp_style: grid or channel mismatch");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ValidationError("interp_style: alpha must lie in [0, 1]");
    StyleVectorSet out = s1;
    kern::active().axpby_f64(alpha, s1.rows.data(), 1.0 - alpha, s2.rows.data(), out.rows.data(),
                             out.rows.size());
    return out;
}

Tensor residual_modulation(const Tensor& feature_map, std::span<const double> t_emb,
                           std::span<const double> f_id) {
    if (feature_map.rank() != 3)
        throw DimensionError("residual_modulation: feature map must be C x H x W");
    const std::size_t channels = feature_map.shape[0];
    if (t_emb.size() != channels || f_id.size() != channels)
        throw DimensionError("residual_modulation: conditioning vectors must have length C");
    const std::size_t plane = feature_map.shape[1] * feature_map.shape[2];
    Tensor out = feature_map;
    for (std::size_t c = 0; c < channels; ++c) {
        const double scale = t_emb[c] + f_id[c];
        double* row = out.data.data() + c * plane;
        kern::active().axpby_f64(scale, row, 0.0, row, row, plane);
    }
    return out;
}

std::vector<double> toy_feature_encoder(const Tensor& x, std::size_t out_dim,
                                        std::uint64_t seed) {
    if (out_dim == 0) throw ValidationError("toy_feature_encoder: out_dim must be positive");
    const std::size_t n = x.data.size();
    if (n == 0) throw ValidationError("toy_feature_encoder: empty tensor");
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> out(out_dim);
    std::vector<double> weights(n);
    for (std::size_t o = 0; o < out_dim; ++o) {
        for (auto& w : weights) w = scale * rng.next_gaussian();
        const double bias = 0.1 * rng.next_gaussian();
        out[o] = std::tanh(kern::active().dot_f64(weights.data(), x.data.data(), n) + bias);
    }
    const double norm_sq = kern::active().dot_f64(out.data(), out.data(), out_dim);
    if (norm_sq == 0.0)
        throw ValidationError("toy_feature_encoder: degenerate zero feature");
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& v : out) v *= inv;
    return out;
}

} // namespace dckit
