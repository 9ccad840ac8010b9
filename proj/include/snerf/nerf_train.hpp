#pragma once

// Training of the radiance field against a posed dataset: Monte-Carlo ray
// batches of the photometric MSE, hand-written reverse pass through the
// compositing recursion, both MLPs and the hash encoding, and Adam with
// bias correction and cosine learning-rate decay.

#include <chrono>
#include <numeric>

#include "snerf/dataset.hpp"
#include "snerf/nerf_render.hpp"

namespace snerf {

struct TrainConfig {
    int iterations = 600;
    int rays_per_batch = 1024;
    double lr_tables = 1e-2;
    double lr_mlp = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    bool cosine_decay = true;  // decay to 10% of the base rate
    double adam_eps = 1e-15;
    uint64_t seed = 0;
    bool deterministic = true;
    double scene_radius_scale = 0.35;  // scene half-size as a fraction of the closest camera

    void validate() const {
        if (iterations < 1) throw NerfError("TrainConfig: iterations must be >= 1");
        if (rays_per_batch < 1) throw NerfError("TrainConfig: rays_per_batch must be >= 1");
        if (!(lr_tables > 0) || !(lr_mlp > 0)) throw NerfError("TrainConfig: learning rates must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw NerfError("TrainConfig: moment decays must be in [0,1)");
        if (!(scene_radius_scale > 0)) throw NerfError("TrainConfig: scene_radius_scale must be > 0");
    }
};

struct TrainResult {
    std::vector<double> loss_history;
    double wall_seconds = 0;
};

// Least-squares intersection of the optical axes gives the common look-at
// point; the scene box is a cube around it sized by the closest camera.
inline void fit_scene_box(const PosedDataset& ds, double radius_scale, std::array<double, 3>& bb_min,
                          std::array<double, 3>& bb_max) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (const auto& f : ds.frames) {
        const Eigen::Vector3d d = f.pose.forward();
        const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - d * d.transpose();
        A += P;
        rhs += P * f.pose.position();
    }
    Eigen::Vector3d focus;
    if (std::fabs(A.determinant()) < 1e-9) {
        // Degenerate (e.g. all axes parallel): fall back to a point one unit
        // of median distance in front of the first camera.
        double dist = 1.0;
        focus = ds.frames[0].pose.position() + dist * ds.frames[0].pose.forward();
    } else {
        focus = A.ldlt().solve(rhs);
    }
    double min_dist = std::numeric_limits<double>::max();
    for (const auto& f : ds.frames) min_dist = std::min(min_dist, (f.pose.position() - focus).norm());
    const double half = radius_scale * min_dist;
    for (int a = 0; a < 3; ++a) {
        bb_min[size_t(a)] = focus[a] - half;
        bb_max[size_t(a)] = focus[a] + half;
    }
}

namespace nerf_detail {

template <typename R>
struct BatchRays {
    std::vector<Eigen::Vector3d> origins;
    std::vector<Eigen::Vector3d> dirs;
    std::vector<R> targets;  // 3 per ray
    std::vector<uint64_t> jitter;
};

template <typename R>
struct ModelGrads {
    std::vector<R> tables;
    MlpGrads<R> density, color;

    void init_like(const RadianceFieldModel<R>& model) {
        tables.assign(model.encoding.tables.size(), R(0));
        density.init_like(model.density_net);
        color.init_like(model.color_net);
    }
    void zero() {
        std::fill(tables.begin(), tables.end(), R(0));
        density.zero();
        color.zero();
    }
};

// Forward + reverse pass of the batch MSE. Returns the loss; accumulates
// parameter gradients when `grads` is non-null.
template <typename R>
double batch_loss_and_grad(const RadianceFieldModel<R>& model, const BatchRays<R>& batch,
                           const RenderConfig& cfg, ModelGrads<R>* grads) {
    using Mat = MatRM<R>;
    const int B = int(batch.origins.size());
    const int ns = cfg.n_samples;
    const int fd = model.encoding.feature_dim();

    const size_t n_rays = size_t(B);
    const size_t n_total = n_rays * size_t(ns);
    std::vector<double> all_ts(n_total), all_deltas(n_total);
    std::vector<R> units(n_total * 3);
    std::vector<char> hit(n_rays, 0);
    Mat feats = Mat::Zero(B * ns, fd);
    Mat sh(B, kShCoeffs);

    std::vector<double> ts, deltas;
    for (int r = 0; r < B; ++r) {
        double near = cfg.near, far = cfg.far;
        if (near < 0 && !ray_box_range(model.encoding.bbox_min, model.encoding.bbox_max,
                                       batch.origins[size_t(r)], batch.dirs[size_t(r)], near, far))
            continue;
        hit[size_t(r)] = 1;
        make_samples(near, far, ns, cfg.stratified, batch.jitter[size_t(r)], ts, deltas);
        std::copy(ts.begin(), ts.end(), all_ts.begin() + size_t(r) * ns);
        std::copy(deltas.begin(), deltas.end(), all_deltas.begin() + size_t(r) * ns);
        for (int i = 0; i < ns; ++i) {
            const Eigen::Vector3d p = batch.origins[size_t(r)] + ts[size_t(i)] * batch.dirs[size_t(r)];
            const double pw[3] = {p.x(), p.y(), p.z()};
            R* u = units.data() + (size_t(r) * ns + i) * 3;
            model.encoding.world_to_unit(pw, u);
            model.encoding.encode(u, feats.data() + (size_t(r) * ns + i) * fd);
        }
        sh_basis16(R(batch.dirs[size_t(r)].x()), R(batch.dirs[size_t(r)].y()),
                   R(batch.dirs[size_t(r)].z()), sh.data() + size_t(r) * kShCoeffs);
    }

    std::vector<Mat> dens_cache;
    const Mat dens = model.density_net.forward(feats, grads ? &dens_cache : nullptr);

    // Composite transmittance; every sample up to the termination point needs
    // a color query (gradients flow through all of them).
    std::vector<double> sigma(n_total, 0), alpha(n_total, 0), weight(n_total, 0), trans(n_total, 0);
    std::vector<int> n_eff(n_rays, 0);
    std::vector<double> t_final(n_rays, 1.0);
    std::vector<int> color_rows;
    color_rows.reserve(size_t(B) * ns / 2);
    for (int r = 0; r < B; ++r) {
        if (!hit[size_t(r)]) continue;
        double T = 1.0;
        int i = 0;
        for (; i < ns; ++i) {
            if (cfg.term_eps > 0 && T < cfg.term_eps) break;
            const size_t idx = size_t(r) * ns + i;
            trans[idx] = T;
            sigma[idx] = std::exp(std::min(double(dens(Eigen::Index(idx), 0)), kSigmaClamp));
            alpha[idx] = 1.0 - std::exp(-sigma[idx] * all_deltas[idx]);
            weight[idx] = T * alpha[idx];
            T -= weight[idx];
            color_rows.push_back(int(idx));
        }
        n_eff[size_t(r)] = i;
        t_final[size_t(r)] = T;
    }

    const Eigen::Index M = Eigen::Index(color_rows.size());
    Mat color_in(M, kGeoFeatures + kShCoeffs);
    for (Eigen::Index k = 0; k < M; ++k) {
        const int idx = color_rows[size_t(k)];
        const int r = idx / ns;
        for (int g = 0; g < kGeoFeatures; ++g) color_in(k, g) = dens(idx, 1 + g);
        for (int s = 0; s < kShCoeffs; ++s) color_in(k, kGeoFeatures + s) = sh(r, s);
    }
    std::vector<Mat> color_cache;
    const Mat raw_rgb = model.color_net.forward(color_in, grads ? &color_cache : nullptr);

    // Per-ray color accumulation and loss.
    std::vector<std::array<double, 3>> rgb_s(n_total);
    std::vector<std::array<double, 3>> rendered(n_rays, {0, 0, 0});
    for (Eigen::Index k = 0; k < M; ++k) {
        const int idx = color_rows[size_t(k)];
        const int r = idx / ns;
        for (int c = 0; c < 3; ++c) {
            const double v = 1.0 / (1.0 + std::exp(-double(raw_rgb(k, c))));
            rgb_s[size_t(idx)][size_t(c)] = v;
            rendered[size_t(r)][size_t(c)] += weight[size_t(idx)] * v;
        }
    }
    double loss = 0;
    std::vector<std::array<double, 3>> g_rgb(n_rays);
    const double inv = 1.0 / (3.0 * B);
    for (int r = 0; r < B; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double out = rendered[size_t(r)][size_t(c)] + t_final[size_t(r)] * cfg.background[size_t(c)];
            const double e = out - double(batch.targets[size_t(r) * 3 + c]);
            loss += e * e * inv;
            g_rgb[size_t(r)][size_t(c)] = 2.0 * e * inv;
        }
    }
    if (!grads) return loss;

    // --- reverse pass ---
    // d(loss)/d(raw sigma_i) = delta_i * ((1-alpha_i) T_i <g,c_i> - S_i) * sigma_i,
    // with S_i the suffix sum of <g,c_k> w_k plus the background term.
    Mat d_dens = Mat::Zero(B * ns, 1 + kGeoFeatures);
    for (int r = 0; r < B; ++r) {
        if (!hit[size_t(r)]) continue;
        const auto& g = g_rgb[size_t(r)];
        double S = t_final[size_t(r)] * (g[0] * cfg.background[0] + g[1] * cfg.background[1] +
                                         g[2] * cfg.background[2]);
        for (int i = n_eff[size_t(r)] - 1; i >= 0; --i) {
            const size_t idx = size_t(r) * ns + i;
            const auto& c = rgb_s[idx];
            const double gc = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
            const double d_sigma = all_deltas[idx] * ((1.0 - alpha[idx]) * trans[idx] * gc - S);
            S += gc * weight[idx];
            if (double(dens(Eigen::Index(idx), 0)) < kSigmaClamp)
                d_dens(Eigen::Index(idx), 0) = R(d_sigma * sigma[idx]);
        }
    }

    Mat d_raw_rgb(M, 3);
    for (Eigen::Index k = 0; k < M; ++k) {
        const int idx = color_rows[size_t(k)];
        const int r = idx / ns;
        for (int c = 0; c < 3; ++c) {
            const double v = rgb_s[size_t(idx)][size_t(c)];
            d_raw_rgb(k, c) = R(g_rgb[size_t(r)][size_t(c)] * weight[size_t(idx)] * v * (1.0 - v));
        }
    }

    const Mat d_color_in = mlp_backward(model.color_net, color_cache, std::move(d_raw_rgb), grads->color);
    for (Eigen::Index k = 0; k < M; ++k) {
        const int idx = color_rows[size_t(k)];
        for (int g = 0; g < kGeoFeatures; ++g) d_dens(Eigen::Index(idx), 1 + g) += d_color_in(k, g);
    }

    const Mat d_feats = mlp_backward(model.density_net, dens_cache, std::move(d_dens), grads->density);

    // Deterministic scatter into the tables: parallel over levels, each level
    // walks the samples in order and touches only its own table range.
    const int L = model.encoding.cfg.levels;
    const int F = model.encoding.cfg.features;
#pragma omp parallel for schedule(static)
    for (int l = 0; l < L; ++l) {
        R* gtable = grads->tables.data() + size_t(l) * model.encoding.params_per_level();
        typename HashGridEncoding<R>::Corners corners;
        for (int r = 0; r < B; ++r) {
            if (!hit[size_t(r)]) continue;
            for (int i = 0; i < n_eff[size_t(r)]; ++i) {
                const size_t idx = size_t(r) * ns + i;
                model.encoding.level_corners(l, units.data() + idx * 3, corners);
                const R* df = d_feats.data() + idx * fd + size_t(l) * F;
                for (int k = 0; k < 8; ++k) {
                    R* gentry = gtable + size_t(corners.slot[k]) * F;
                    for (int f = 0; f < F; ++f) gentry[f] += corners.weight[k] * df[f];
                }
            }
        }
    }
    return loss;
}

template <typename R>
struct AdamState {
    std::vector<R> m, v;
    void init(size_t n) {
        m.assign(n, R(0));
        v.assign(n, R(0));
    }
};

template <typename R>
void adam_update(std::vector<R>& params, const std::vector<R>& grad, AdamState<R>& state, double lr,
                 double b1, double b2, double eps, int step) {
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    const std::int64_t n = std::int64_t(params.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double g = double(grad[size_t(i)]);
        const double m = double(state.m[size_t(i)]) * b1 + (1 - b1) * g;
        const double v = double(state.v[size_t(i)]) * b2 + (1 - b2) * g * g;
        state.m[size_t(i)] = R(m);
        state.v[size_t(i)] = R(v);
        params[size_t(i)] -= R(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
}

}  // namespace nerf_detail

// Optimizes the model in place against the dataset; the scene box must be set
// on the encoding beforehand (see fit_scene_box).
inline TrainResult train(RadianceFieldModel<float>& model, const PosedDataset& ds, const TrainConfig& tcfg,
                         const RenderConfig& rcfg) {
    using namespace nerf_detail;
    tcfg.validate();
    rcfg.validate();
    ds.validate();
    if (ds.provenance == Provenance::preoperative)
        throw NerfError("train: dataset provenance must be stylized or captured");

    const auto t_start = std::chrono::steady_clock::now();
    const int B = tcfg.rays_per_batch;
    const int W = ds.intrinsics.width, H = ds.intrinsics.height;

    // Per-frame ray origin and rotation, precomputed.
    std::vector<Eigen::Matrix3d> rots(ds.frames.size());
    std::vector<Eigen::Vector3d> centers(ds.frames.size());
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        rots[i] = ds.frames[i].pose.rotation();
        centers[i] = ds.frames[i].pose.position();
    }

    ModelGrads<float> grads;
    grads.init_like(model);
    AdamState<float> adam_tables;
    adam_tables.init(model.encoding.tables.size());
    std::vector<AdamState<float>> adam_dw(model.density_net.layers.size()),
        adam_db(model.density_net.layers.size()), adam_cw(model.color_net.layers.size()),
        adam_cb(model.color_net.layers.size());
    for (size_t i = 0; i < model.density_net.layers.size(); ++i) {
        adam_dw[i].init(model.density_net.layers[i].w.size());
        adam_db[i].init(model.density_net.layers[i].b.size());
    }
    for (size_t i = 0; i < model.color_net.layers.size(); ++i) {
        adam_cw[i].init(model.color_net.layers[i].w.size());
        adam_cb[i].init(model.color_net.layers[i].b.size());
    }

    std::mt19937 rng(uint32_t(tcfg.seed));
    std::uniform_int_distribution<int> frame_dist(0, int(ds.frames.size()) - 1);
    std::uniform_int_distribution<int> px_dist(0, W * H - 1);

    BatchRays<float> batch;
    batch.origins.resize(size_t(B));
    batch.dirs.resize(size_t(B));
    batch.targets.resize(size_t(B) * 3);
    batch.jitter.resize(size_t(B));

    TrainResult result;
    result.loss_history.reserve(size_t(tcfg.iterations));

    for (int it = 0; it < tcfg.iterations; ++it) {
        for (int r = 0; r < B; ++r) {
            const int f = frame_dist(rng);
            const int px = px_dist(rng);
            const int x = px % W, y = px / W;
            const Eigen::Vector3d d_cam((x + 0.5 - ds.intrinsics.cx) / ds.intrinsics.fx,
                                        -(y + 0.5 - ds.intrinsics.cy) / ds.intrinsics.fy, -1.0);
            batch.dirs[size_t(r)] = (rots[size_t(f)] * d_cam).normalized();
            batch.origins[size_t(r)] = centers[size_t(f)];
            for (int c = 0; c < 3; ++c)
                batch.targets[size_t(r) * 3 + c] = ds.frames[size_t(f)].image.data[size_t(px) * 3 + c];
            batch.jitter[size_t(r)] =
                hash_combine(rcfg.seed, hash_combine(uint64_t(it), uint64_t(r)));
        }

        grads.zero();
        const double loss = batch_loss_and_grad(model, batch, rcfg, &grads);
        if (!std::isfinite(loss))
            throw NerfError("train: non-finite loss at iteration " + std::to_string(it));
        result.loss_history.push_back(loss);

        const double decay =
            tcfg.cosine_decay ? 0.1 + 0.9 * 0.5 * (1.0 + std::cos(kPi * double(it) / tcfg.iterations))
                              : 1.0;
        const int step = it + 1;
        adam_update(model.encoding.tables, grads.tables, adam_tables, tcfg.lr_tables * decay, tcfg.beta1,
                    tcfg.beta2, tcfg.adam_eps, step);
        for (size_t i = 0; i < model.density_net.layers.size(); ++i) {
            adam_update(model.density_net.layers[i].w, grads.density.w[i], adam_dw[i],
                        tcfg.lr_mlp * decay, tcfg.beta1, tcfg.beta2, tcfg.adam_eps, step);
            adam_update(model.density_net.layers[i].b, grads.density.b[i], adam_db[i],
                        tcfg.lr_mlp * decay, tcfg.beta1, tcfg.beta2, tcfg.adam_eps, step);
        }
        for (size_t i = 0; i < model.color_net.layers.size(); ++i) {
            adam_update(model.color_net.layers[i].w, grads.color.w[i], adam_cw[i], tcfg.lr_mlp * decay,
                        tcfg.beta1, tcfg.beta2, tcfg.adam_eps, step);
            adam_update(model.color_net.layers[i].b, grads.color.b[i], adam_cb[i], tcfg.lr_mlp * decay,
                        tcfg.beta1, tcfg.beta2, tcfg.adam_eps, step);
        }
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace snerf
