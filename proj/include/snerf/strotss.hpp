#pragma once

// Gradient-based style refinement: relaxed Earth Mover's Distance for style,
// self-similarity for content, and a palette term (feature moment matching +
// REMD over rgb). The objective is differentiated by hand; all feature maps
// are linear in the pixels, so gradients flow through the Haar adjoint.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "snerf/common.hpp"
#include "snerf/haar.hpp"
#include "snerf/image.hpp"

namespace snerf {

struct StrotssConfig {
    int iterations = 200;  // per scale
    int scales = 2;
    double content_weight = 1.0;
    double style_weight = 1.0;
    double palette_weight = 0.5;
    int feature_samples = 1024;
    double step_size = 0.01;
    uint64_t seed = 0;
    int pyramid_levels = 3;
    bool circular_mask = false;

    void validate() const {
        if (iterations < 1) throw StyleError("StrotssConfig: iterations must be >= 1");
        if (scales < 1) throw StyleError("StrotssConfig: scales must be >= 1");
        if (feature_samples < 2) throw StyleError("StrotssConfig: feature_samples must be >= 2");
        if (content_weight < 0 || style_weight < 0 || palette_weight < 0)
            throw StyleError("StrotssConfig: negative loss weight");
        if (!(step_size > 0)) throw StyleError("StrotssConfig: step size must be > 0");
        if (pyramid_levels < 1) throw StyleError("StrotssConfig: pyramid_levels must be >= 1");
    }
};

// Per-scale loss history; recorded on a fixed evaluation sample set, so the
// sequence is monotone non-increasing by construction (rejected steps revert).
struct StrotssScaleTrace {
    int width = 0, height = 0;
    std::vector<double> losses;  // losses[0] is the pre-step loss
};

namespace strotss_detail {

inline constexpr double kNormFloor = 1e-8;

template <typename R>
using MatR = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename R>
using VecR = Eigen::Matrix<R, Eigen::Dynamic, 1>;

template <typename R>
struct RowCache {
    MatR<R> hat;   // row-normalized vectors
    VecR<R> norms;  // floored norms
};

template <typename R>
RowCache<R> normalize_rows(const MatR<R>& m) {
    RowCache<R> c;
    c.hat = m;
    c.norms.resize(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        R n = m.row(i).norm();
        if (n < R(kNormFloor)) n = R(kNormFloor);
        c.norms[i] = n;
        c.hat.row(i) /= n;
    }
    return c;
}

// Converts a gradient accumulated w.r.t. normalized rows back to raw rows:
// d(x/|x|) has Jacobian (I - xhat xhat^T)/|x|.
template <typename R>
void unnormalize_grad(const RowCache<R>& cache, const MatR<R>& g_hat, MatR<R>& g_raw) {
    for (Eigen::Index i = 0; i < g_hat.rows(); ++i) {
        const R radial = g_hat.row(i).dot(cache.hat.row(i));
        g_raw.row(i) += (g_hat.row(i) - radial * cache.hat.row(i)) / cache.norms[i];
    }
}

// REMD(X, B) = max of the two directed mean nearest-neighbor cosine
// distances. Gradient (w.r.t. X only) flows through the selected branch.
template <typename R>
R remd(const RowCache<R>& xc, const RowCache<R>& bc, R weight, MatR<R>* g_hat_x) {
    const Eigen::Index n = xc.hat.rows(), m = bc.hat.rows();
    MatR<R> cosm(n, m);
    cosm.noalias() = xc.hat * bc.hat.transpose();

    R fwd = 0, bwd = 0;
    std::vector<Eigen::Index> row_arg(static_cast<size_t>(n));
    std::vector<Eigen::Index> col_arg(static_cast<size_t>(m));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index j;
        fwd += R(1) - cosm.row(i).maxCoeff(&j);
        row_arg[size_t(i)] = j;
    }
    fwd /= R(n);
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::Index i;
        bwd += R(1) - cosm.col(j).maxCoeff(&i);
        col_arg[size_t(j)] = i;
    }
    bwd /= R(m);

    const R value = std::max(fwd, bwd);
    if (g_hat_x && weight != R(0)) {
        if (fwd >= bwd) {
            const R s = weight / R(n);
            for (Eigen::Index i = 0; i < n; ++i)
                g_hat_x->row(i) -= s * bc.hat.row(row_arg[size_t(i)]);
        } else {
            const R s = weight / R(m);
            for (Eigen::Index j = 0; j < m; ++j)
                g_hat_x->row(col_arg[size_t(j)]) -= s * bc.hat.row(j);
        }
    }
    return value;
}

// Mean absolute difference between the row-normalized pairwise cosine
// distance matrices of X and of the (fixed) content features.
template <typename R>
R self_similarity(const RowCache<R>& xc, const MatR<R>& content_dn, R weight, MatR<R>* g_hat_x) {
    const Eigen::Index n = xc.hat.rows();
    MatR<R> dx(n, n);
    dx.noalias() = -(xc.hat * xc.hat.transpose());
    dx.array() += R(1);

    VecR<R> rowsum = dx.rowwise().sum();
    VecR<R> denom = rowsum.cwiseMax(R(kNormFloor));

    R loss = 0;
    MatR<R> sign(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const R diff = dx(i, j) / denom[i] - content_dn(i, j);
            loss += diff < 0 ? -diff : diff;
            sign(i, j) = diff < 0 ? R(-1) : R(1);
        }
    const R inv_n2 = R(1) / (R(n) * R(n));
    loss *= inv_n2;

    if (g_hat_x && weight != R(0)) {
        // dL/dDX(i,k) = (sign(i,k) - t_i) / (n^2 R_i), with the t_i term
        // dropped where the row sum hit the floor.
        MatR<R> g_d(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool floored = rowsum[i] < R(kNormFloor);
            R t = 0;
            if (!floored) t = (sign.row(i).array() * dx.row(i).array()).sum() / denom[i];
            const R s = inv_n2 / denom[i];
            for (Eigen::Index k = 0; k < n; ++k) g_d(i, k) = s * (sign(i, k) - (floored ? R(0) : t));
        }
        // D(i,j) = 1 - xhat_i . xhat_j  =>  dL/dxhat_i = -sum_j W(i,j) xhat_j.
        MatR<R> w_sym = g_d + g_d.transpose();
        g_hat_x->noalias() -= weight * (w_sym * xc.hat);
    }
    return loss;
}

// || mean(X)-mean_target ||^2 / C + || cov(X)-cov_target ||_F^2 / C^2,
// population covariance.
template <typename R>
R moment_match(const MatR<R>& x, const VecR<R>& mean_t, const MatR<R>& cov_t, R weight, MatR<R>* g_raw) {
    const Eigen::Index n = x.rows(), C = x.cols();
    const VecR<R> mu = x.colwise().mean().transpose();
    MatR<R> centered = x.rowwise() - mu.transpose();
    MatR<R> cov(C, C);
    cov.noalias() = centered.transpose() * centered;
    cov /= R(n);

    const VecR<R> dmu = mu - mean_t;
    MatR<R> dcov = cov - cov_t;
    const R loss = dmu.squaredNorm() / R(C) + dcov.squaredNorm() / (R(C) * R(C));

    if (g_raw && weight != R(0)) {
        const VecR<R> g_mu = (R(2) / (R(n) * R(C))) * dmu;
        const R s = R(4) / (R(n) * R(C) * R(C));
        for (Eigen::Index i = 0; i < n; ++i)
            g_raw->row(i) += weight * (g_mu.transpose() + s * (centered.row(i) * dcov));
    }
    return loss;
}

template <typename R>
VecR<R> col_mean(const MatR<R>& m) {
    return m.colwise().mean().transpose();
}

template <typename R>
MatR<R> pop_cov(const MatR<R>& m) {
    const Eigen::Matrix<R, 1, Eigen::Dynamic> mu = m.colwise().mean();
    MatR<R> centered = m.rowwise() - mu;
    MatR<R> c(m.cols(), m.cols());
    c.noalias() = centered.transpose() * centered;
    c /= R(m.rows());
    return c;
}

// Draw k distinct indices from [0, pool.size()) via partial Fisher-Yates.
inline std::vector<int> sample_indices(std::vector<int> pool, int k, std::mt19937& rng) {
    const int n = int(pool.size());
    if (k >= n) return pool;
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> d(i, n - 1);
        std::swap(pool[size_t(i)], pool[size_t(d(rng))]);
    }
    pool.resize(size_t(k));
    return pool;
}

inline std::vector<int> eligible_positions(int w, int h, bool circular_mask) {
    std::vector<int> idx;
    idx.reserve(size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (circular_mask) {
                const double dx = (x + 0.5) / w - 0.5, dy = (y + 0.5) / h - 0.5;
                if (dx * dx + dy * dy > 0.25) continue;
            }
            idx.push_back(y * w + x);
        }
    return idx;
}

}  // namespace strotss_detail

// The STROTSS objective with all sample positions frozen: a deterministic,
// differentiable function of the pixel buffer. Exposed (rather than buried in
// the optimizer) so gradients can be checked against finite differences.
template <typename R>
struct StrotssObjective {
    using Mat = strotss_detail::MatR<R>;
    using Vec = strotss_detail::VecR<R>;

    int width = 0, height = 0, levels = 1;
    R content_weight = 1, style_weight = 1, palette_weight = 0;

    std::vector<std::vector<int>> positions;  // per level, sampled grid indices
    std::vector<Mat> content_dn;              // per level, row-normalized content distance matrix
    std::vector<strotss_detail::RowCache<R>> style_cache;  // per level
    std::vector<Vec> style_mean;
    std::vector<Mat> style_cov;
    std::vector<int> rgb_positions;  // pixel indices for the palette rgb term
    strotss_detail::RowCache<R> style_rgb_cache;

    // Loss at x (w*h*3 interleaved); if grad is non-null it receives dL/dx.
    R evaluate(const std::vector<R>& x, std::vector<R>* grad) const {
        using namespace strotss_detail;
        const auto pyr = haar_decompose_buffer(x, width, height, levels);
        FeaturePyramidT<R> grad_pyr;
        if (grad) {
            grad_pyr = pyr;
            for (auto& lvl : grad_pyr.levels) std::fill(lvl.data.begin(), lvl.data.end(), R(0));
        }

        R content_loss = 0, style_loss = 0, moment_loss = 0;
        for (int l = 0; l < levels; ++l) {
            const auto& pos = positions[size_t(l)];
            const Eigen::Index n = Eigen::Index(pos.size());
            Mat xf(n, kPyramidChannels);
            for (Eigen::Index i = 0; i < n; ++i)
                for (int c = 0; c < kPyramidChannels; ++c)
                    xf(i, c) = pyr.levels[size_t(l)].data[size_t(pos[size_t(i)]) * kPyramidChannels + c];

            const RowCache<R> xc = normalize_rows(xf);
            Mat g_hat = Mat::Zero(n, kPyramidChannels);
            Mat g_raw = Mat::Zero(n, kPyramidChannels);

            content_loss += self_similarity(xc, content_dn[size_t(l)], content_weight / R(levels),
                                            grad ? &g_hat : nullptr);
            style_loss += remd(xc, style_cache[size_t(l)], style_weight / R(levels),
                               grad ? &g_hat : nullptr);
            moment_loss += moment_match(xf, style_mean[size_t(l)], style_cov[size_t(l)],
                                        palette_weight / R(levels), grad ? &g_raw : nullptr);

            if (grad) {
                unnormalize_grad(xc, g_hat, g_raw);
                auto& gl = grad_pyr.levels[size_t(l)];
                for (Eigen::Index i = 0; i < n; ++i)
                    for (int c = 0; c < kPyramidChannels; ++c)
                        gl.data[size_t(pos[size_t(i)]) * kPyramidChannels + c] += g_raw(i, c);
            }
        }
        content_loss /= R(levels);
        style_loss /= R(levels);
        moment_loss /= R(levels);

        // Palette rgb term straight on pixel values.
        R rgb_loss = 0;
        Mat g_rgb;
        {
            using namespace strotss_detail;
            const Eigen::Index k = Eigen::Index(rgb_positions.size());
            Mat xr(k, 3);
            for (Eigen::Index i = 0; i < k; ++i)
                for (int c = 0; c < 3; ++c) xr(i, c) = x[size_t(rgb_positions[size_t(i)]) * 3 + c];
            const RowCache<R> xrc = normalize_rows(xr);
            Mat g_hat = Mat::Zero(k, 3);
            rgb_loss = remd(xrc, style_rgb_cache, palette_weight, grad ? &g_hat : nullptr);
            if (grad) {
                g_rgb = Mat::Zero(k, 3);
                unnormalize_grad(xrc, g_hat, g_rgb);
            }
        }

        if (grad) {
            grad->assign(x.size(), R(0));
            const auto gx = haar_adjoint_buffer(grad_pyr);
            for (size_t i = 0; i < gx.size(); ++i) (*grad)[i] = gx[i];
            for (size_t i = 0; i < rgb_positions.size(); ++i)
                for (int c = 0; c < 3; ++c)
                    (*grad)[size_t(rgb_positions[i]) * 3 + c] += g_rgb(Eigen::Index(i), c);
        }
        return content_weight * content_loss + style_weight * style_loss +
               palette_weight * (moment_loss + rgb_loss);
    }
};

// Standalone forms of the two distance primitives (used directly by tests
// and by callers that only need the scalar).
inline double relaxed_emd(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b) {
    using namespace strotss_detail;
    if (a.empty() || b.empty()) throw StyleError("relaxed_emd: empty sample set");
    MatR<double> A(Eigen::Index(a.size()), Eigen::Index(a[0].size()));
    MatR<double> B(Eigen::Index(b.size()), Eigen::Index(b[0].size()));
    for (size_t i = 0; i < a.size(); ++i) A.row(Eigen::Index(i)) = VecR<double>::Map(a[i].data(), Eigen::Index(a[i].size()));
    for (size_t i = 0; i < b.size(); ++i) B.row(Eigen::Index(i)) = VecR<double>::Map(b[i].data(), Eigen::Index(b[i].size()));
    const auto ac = normalize_rows(A), bc = normalize_rows(B);
    return remd<double>(ac, bc, 0.0, nullptr);
}

inline double self_similarity_loss(const std::vector<std::vector<double>>& content,
                                   const std::vector<std::vector<double>>& output) {
    using namespace strotss_detail;
    if (content.size() != output.size())
        throw StyleError("self_similarity_loss: sample count mismatch");
    if (content.empty()) throw StyleError("self_similarity_loss: empty sample set");
    const Eigen::Index n = Eigen::Index(content.size()), C = Eigen::Index(content[0].size());
    MatR<double> A(n, C), X(n, C);
    for (Eigen::Index i = 0; i < n; ++i) {
        A.row(i) = VecR<double>::Map(content[size_t(i)].data(), C);
        X.row(i) = VecR<double>::Map(output[size_t(i)].data(), C);
    }
    const auto ac = normalize_rows(A), xc = normalize_rows(X);
    MatR<double> da(n, n);
    da.noalias() = -(ac.hat * ac.hat.transpose());
    da.array() += 1.0;
    VecR<double> denom = da.rowwise().sum().cwiseMax(kNormFloor);
    for (Eigen::Index i = 0; i < n; ++i) da.row(i) /= denom[i];
    return self_similarity<double>(xc, da, 0.0, nullptr);
}

// ---------------------------------------------------------------------------
// Objective construction and the coarse-to-fine optimizer

namespace strotss_detail {

template <typename R>
struct ScaleContext {
    int width = 0, height = 0, levels = 1;
    FeaturePyramidT<R> content_pyr;
    FeaturePyramidT<R> style_pyr;
    std::vector<R> style_pixels;
    std::vector<std::vector<int>> level_pool;  // eligible positions per level (content grid)
    std::vector<std::vector<int>> style_pool;  // eligible positions per level (style grid)
    std::vector<int> pixel_pool_content;
    std::vector<int> pixel_pool_style;
};

template <typename R>
StrotssObjective<R> make_objective(const ScaleContext<R>& ctx, const StrotssConfig& cfg,
                                   std::mt19937& rng) {
    StrotssObjective<R> obj;
    obj.width = ctx.width;
    obj.height = ctx.height;
    obj.levels = ctx.levels;
    obj.content_weight = R(cfg.content_weight);
    obj.style_weight = R(cfg.style_weight);
    obj.palette_weight = R(cfg.palette_weight);

    for (int l = 0; l < ctx.levels; ++l) {
        auto pos = sample_indices(ctx.level_pool[size_t(l)], cfg.feature_samples, rng);
        auto spos = sample_indices(ctx.style_pool[size_t(l)], cfg.feature_samples, rng);
        const Eigen::Index n = Eigen::Index(pos.size()), m = Eigen::Index(spos.size());

        MatR<R> cf(n, kPyramidChannels), sf(m, kPyramidChannels);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int c = 0; c < kPyramidChannels; ++c)
                cf(i, c) = ctx.content_pyr.levels[size_t(l)].data[size_t(pos[size_t(i)]) * kPyramidChannels + c];
        for (Eigen::Index i = 0; i < m; ++i)
            for (int c = 0; c < kPyramidChannels; ++c)
                sf(i, c) = ctx.style_pyr.levels[size_t(l)].data[size_t(spos[size_t(i)]) * kPyramidChannels + c];

        const auto cc = normalize_rows(cf);
        MatR<R> dn(n, n);
        dn.noalias() = -(cc.hat * cc.hat.transpose());
        dn.array() += R(1);
        VecR<R> denom = dn.rowwise().sum().cwiseMax(R(kNormFloor));
        for (Eigen::Index i = 0; i < n; ++i) dn.row(i) /= denom[i];

        obj.positions.push_back(std::move(pos));
        obj.content_dn.push_back(std::move(dn));
        obj.style_cache.push_back(normalize_rows(sf));
        obj.style_mean.push_back(col_mean(sf));
        obj.style_cov.push_back(pop_cov(sf));
    }

    obj.rgb_positions = sample_indices(ctx.pixel_pool_content, cfg.feature_samples, rng);
    const auto spix = sample_indices(ctx.pixel_pool_style, cfg.feature_samples, rng);
    MatR<R> srgb(Eigen::Index(spix.size()), 3);
    for (size_t i = 0; i < spix.size(); ++i)
        for (int c = 0; c < 3; ++c) srgb(Eigen::Index(i), c) = ctx.style_pixels[size_t(spix[i]) * 3 + c];
    obj.style_rgb_cache = normalize_rows(srgb);
    return obj;
}

}  // namespace strotss_detail

// Coarse-to-fine refinement of `init` toward the style's feature statistics.
// Per-pixel Adam with bias correction; a step is kept only if the loss on the
// scale's fixed evaluation set does not increase, otherwise the step size
// backs off, which makes the recorded sequence monotone.
inline Image strotss_refine(const Image& init, const Image& style, const StrotssConfig& cfg,
                            std::vector<StrotssScaleTrace>* traces = nullptr) {
    using namespace strotss_detail;
    using R = float;
    cfg.validate();
    if (init.channels != 3) throw StyleError("strotss_refine: expects 3-channel images");

    // Clamp scales/levels to what the image dims allow.
    auto v2 = [](int v) {
        int k = 0;
        while (v % 2 == 0 && v > 1) {
            v /= 2;
            ++k;
        }
        return k;
    };
    const int div = std::min(v2(init.width), v2(init.height));
    const int levels = std::max(1, std::min(cfg.pyramid_levels, div));
    const int scales = std::max(1, std::min(cfg.scales, div - levels + 1));

    Image current;  // result of the previous (coarser) scale
    Image prev_init_scaled;
    std::mt19937 rng(uint32_t(cfg.seed));

    for (int s = 0; s < scales; ++s) {
        const int factor = 1 << (scales - 1 - s);
        const int w = init.width / factor, h = init.height / factor;

        Image init_s = (factor == 1) ? init : resize_bilinear(init, w, h);
        Image style_s = fit_to_dims(style, w, h);

        // Seed from the coarser result: carry its correction on top of the
        // native-resolution init so fine detail is not lost.
        std::vector<R> x(size_t(w) * h * 3);
        if (s == 0) {
            for (size_t i = 0; i < x.size(); ++i) x[i] = init_s.data[i];
        } else {
            Image up_res = resize_bilinear(current, w, h);
            Image up_init = resize_bilinear(prev_init_scaled, w, h);
            for (size_t i = 0; i < x.size(); ++i)
                x[i] = clamp01(init_s.data[i] + (up_res.data[i] - up_init.data[i]));
        }

        ScaleContext<R> ctx;
        ctx.width = w;
        ctx.height = h;
        ctx.levels = levels;
        ctx.content_pyr = haar_decompose_buffer(haar_detail::image_to_buffer<R>(init_s), w, h, levels);
        ctx.style_pyr = haar_decompose_buffer(haar_detail::image_to_buffer<R>(style_s), w, h, levels);
        ctx.style_pixels = haar_detail::image_to_buffer<R>(style_s);
        for (int l = 0; l < levels; ++l) {
            const int lw = w >> (l + 1), lh = h >> (l + 1);
            ctx.level_pool.push_back(eligible_positions(lw, lh, false));
            ctx.style_pool.push_back(eligible_positions(lw, lh, cfg.circular_mask));
        }
        ctx.pixel_pool_content = eligible_positions(w, h, false);
        ctx.pixel_pool_style = eligible_positions(w, h, cfg.circular_mask);

        const StrotssObjective<R> eval_obj = make_objective(ctx, cfg, rng);

        StrotssScaleTrace trace;
        trace.width = w;
        trace.height = h;
        double recorded = double(eval_obj.evaluate(x, nullptr));
        if (!std::isfinite(recorded))
            throw StyleError("strotss_refine: non-finite loss at iteration 0");
        trace.losses.push_back(recorded);

        std::vector<R> m(x.size(), 0), v(x.size(), 0), grad, x_prev;
        double step_scale = 1.0;
        const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

        for (int it = 1; it <= cfg.iterations; ++it) {
            const StrotssObjective<R> train_obj = make_objective(ctx, cfg, rng);
            const R train_loss = train_obj.evaluate(x, &grad);
            if (!std::isfinite(double(train_loss)))
                throw StyleError("strotss_refine: non-finite loss at iteration " + std::to_string(it));

            x_prev = x;
            const double bc1 = 1.0 - std::pow(b1, it), bc2 = 1.0 - std::pow(b2, it);
            const double lr = cfg.step_size * step_scale;
            for (size_t i = 0; i < x.size(); ++i) {
                m[i] = R(b1 * m[i] + (1 - b1) * grad[i]);
                v[i] = R(b2 * v[i] + (1 - b2) * grad[i] * grad[i]);
                const double mh = m[i] / bc1, vh = v[i] / bc2;
                x[i] = clamp01(R(x[i] - lr * mh / (std::sqrt(vh) + adam_eps)));
            }

            const double cand = double(eval_obj.evaluate(x, nullptr));
            if (std::isfinite(cand) && cand <= recorded) {
                recorded = cand;
            } else {
                x = x_prev;  // reject and back off
                step_scale = std::max(step_scale * 0.5, 1e-6);
            }
            trace.losses.push_back(recorded);
        }

        current = Image(w, h, 3);
        current.data.assign(x.begin(), x.end());
        prev_init_scaled = init_s;
        if (traces) traces->push_back(std::move(trace));
    }
    current.clamp_unit();
    return current;
}

}  // namespace snerf
