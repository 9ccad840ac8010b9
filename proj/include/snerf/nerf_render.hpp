#pragma once

// Volume-rendering quadrature along camera rays: stratified samples, alpha
// compositing with exact telescoping (sum of weights + final transmittance
// is 1 by construction), background composited over the remainder.

#include <optional>

#include "snerf/camera.hpp"
#include "snerf/image.hpp"
#include "snerf/nerf_model.hpp"

namespace snerf {

struct RenderConfig {
    int n_samples = 96;
    double near = -1.0;  // negative: derive from the scene box per ray
    double far = -1.0;
    std::array<double, 3> background{0, 0, 0};
    bool stratified = true;
    uint64_t seed = 0;
    double term_eps = 1e-4;  // early ray termination; 0 disables

    void validate() const {
        if (n_samples < 1) throw NerfError("RenderConfig: n_samples must be >= 1");
        const bool explicit_range = near >= 0 || far >= 0;
        if (explicit_range && !(near >= 0 && far > near))
            throw NerfError("RenderConfig: need 0 <= near < far");
        if (term_eps < 0) throw NerfError("RenderConfig: negative term_eps");
    }
};

namespace nerf_detail {

inline bool ray_box_range(const std::array<double, 3>& bb_min, const std::array<double, 3>& bb_max,
                          const Eigen::Vector3d& o, const Eigen::Vector3d& d, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::max();
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(d[a]) < 1e-15) {
            if (o[a] < bb_min[a] || o[a] > bb_max[a]) return false;
            continue;
        }
        double ta = (bb_min[a] - o[a]) / d[a];
        double tb = (bb_max[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

// Stratified positions and segment lengths over [near, far]; jitter stream is
// a pure function of the seed.
inline void make_samples(double near, double far, int n, bool stratified, uint64_t seed,
                         std::vector<double>& ts, std::vector<double>& deltas) {
    ts.resize(size_t(n));
    deltas.resize(size_t(n));
    const double span = (far - near) / n;
    for (int i = 0; i < n; ++i) {
        const double xi = stratified ? hash_to_unit(splitmix64(seed + uint64_t(i))) : 0.5;
        ts[size_t(i)] = near + (i + xi) * span;
    }
    for (int i = 0; i + 1 < n; ++i) deltas[size_t(i)] = ts[size_t(i) + 1] - ts[size_t(i)];
    deltas[size_t(n) - 1] = far - ts[size_t(n) - 1];
}

}  // namespace nerf_detail

// Weights and transmittance are kept in double so the telescoping identity
// sum(w_i) + T_final = 1 survives verbatim summation.
template <typename R>
struct RayRender {
    std::array<R, 3> rgb{0, 0, 0};
    std::vector<double> weights;
    double transmittance = 1;
};

template <typename R>
RayRender<R> render_ray(const RadianceFieldModel<R>& model, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& direction, const RenderConfig& cfg,
                        uint64_t jitter_stream = 0) {
    cfg.validate();
    RayRender<R> out;
    for (int c = 0; c < 3; ++c) out.rgb[size_t(c)] = R(cfg.background[size_t(c)]);

    double near = cfg.near, far = cfg.far;
    if (near < 0) {
        if (!nerf_detail::ray_box_range(model.encoding.bbox_min, model.encoding.bbox_max, origin,
                                        direction, near, far))
            return out;  // misses the scene box: pure background
    }

    std::vector<double> ts, deltas;
    nerf_detail::make_samples(near, far, cfg.n_samples, cfg.stratified,
                              hash_combine(cfg.seed, jitter_stream), ts, deltas);

    out.weights.assign(size_t(cfg.n_samples), 0.0);
    double T = 1.0;
    double acc[3] = {0, 0, 0};
    const std::array<double, 3> dir{direction.x(), direction.y(), direction.z()};
    for (int i = 0; i < cfg.n_samples; ++i) {
        if (cfg.term_eps > 0 && T < cfg.term_eps) break;
        const Eigen::Vector3d p = origin + ts[size_t(i)] * direction;
        const auto s = model.field_eval({p.x(), p.y(), p.z()}, dir);
        const double alpha = 1.0 - std::exp(-double(s.sigma) * deltas[size_t(i)]);
        const double w = T * alpha;
        out.weights[size_t(i)] = w;
        for (int c = 0; c < 3; ++c) acc[c] += w * double(s.rgb[size_t(c)]);
        T -= w;
    }
    out.transmittance = T;
    for (int c = 0; c < 3; ++c) out.rgb[size_t(c)] = R(acc[c] + T * cfg.background[size_t(c)]);
    return out;
}

// Full-frame render through the pinhole model; jitter is seeded per pixel, so
// the result is independent of traversal order.
inline Image render_view(const RadianceFieldModel<float>& model, const CameraPose& pose,
                         const CameraIntrinsics& intr, const RenderConfig& cfg) {
    cfg.validate();
    intr.validate();
    using Mat = MatRM<float>;
    Image img(intr.width, intr.height, 3);
    const int fd = model.encoding.feature_dim();
    const int n_px = intr.width * intr.height;
    constexpr int kChunk = 1024;
    constexpr double kMinColorWeight = 1e-6;

#pragma omp parallel for schedule(dynamic)
    for (int chunk = 0; chunk < (n_px + kChunk - 1) / kChunk; ++chunk) {
        const int begin = chunk * kChunk, end = std::min(begin + kChunk, n_px);
        const int nr = end - begin;
        const int ns = cfg.n_samples;

        const size_t n_rays = size_t(nr);
        const size_t n_total = n_rays * size_t(ns);
        std::vector<double> ts, deltas, all_ts(n_total), all_deltas(n_total);
        std::vector<char> hit(n_rays, 0);
        std::vector<Eigen::Vector3d> origins(n_rays);
        std::vector<Eigen::Vector3d> dirs(n_rays);
        Mat feats(nr * ns, fd);
        Mat sh(nr, kShCoeffs);

        for (int r = 0; r < nr; ++r) {
            const int px = begin + r;
            pixel_ray(pose, intr, px % intr.width, px / intr.width, origins[size_t(r)], dirs[size_t(r)]);
            double near = cfg.near, far = cfg.far;
            if (near < 0 && !nerf_detail::ray_box_range(model.encoding.bbox_min, model.encoding.bbox_max,
                                                        origins[size_t(r)], dirs[size_t(r)], near, far))
                continue;
            hit[size_t(r)] = 1;
            nerf_detail::make_samples(near, far, ns, cfg.stratified,
                                      hash_combine(cfg.seed, uint64_t(px)), ts, deltas);
            std::copy(ts.begin(), ts.end(), all_ts.begin() + size_t(r) * ns);
            std::copy(deltas.begin(), deltas.end(), all_deltas.begin() + size_t(r) * ns);
            for (int i = 0; i < ns; ++i) {
                const Eigen::Vector3d p = origins[size_t(r)] + ts[size_t(i)] * dirs[size_t(r)];
                const double pw[3] = {p.x(), p.y(), p.z()};
                float unit[3];
                model.encoding.world_to_unit(pw, unit);
                model.encoding.encode(unit, feats.data() + (size_t(r) * ns + i) * fd);
            }
            sh_basis16(float(dirs[size_t(r)].x()), float(dirs[size_t(r)].y()), float(dirs[size_t(r)].z()),
                       sh.data() + size_t(r) * kShCoeffs);
        }

        const Mat dens = model.density_net.forward(feats);

        // Composite transmittance first; query color only where the sample
        // carries weight.
        std::vector<double> weights(n_total, 0.0);
        std::vector<double> trans(n_rays, 1.0);
        std::vector<int> color_rows;
        color_rows.reserve(size_t(nr) * 8);
        for (int r = 0; r < nr; ++r) {
            if (!hit[size_t(r)]) continue;
            double T = 1.0;
            for (int i = 0; i < ns; ++i) {
                if (cfg.term_eps > 0 && T < cfg.term_eps) break;
                const size_t idx = size_t(r) * ns + i;
                const double sigma = std::exp(std::min(double(dens(Eigen::Index(idx), 0)), kSigmaClamp));
                const double alpha = 1.0 - std::exp(-sigma * all_deltas[idx]);
                const double w = T * alpha;
                weights[idx] = w;
                T -= w;
                if (w > kMinColorWeight) color_rows.push_back(int(idx));
            }
            trans[size_t(r)] = T;
        }

        Mat color_in(Eigen::Index(color_rows.size()), kGeoFeatures + kShCoeffs);
        for (size_t k = 0; k < color_rows.size(); ++k) {
            const int idx = color_rows[k];
            const int r = idx / ns;
            for (int g = 0; g < kGeoFeatures; ++g) color_in(Eigen::Index(k), g) = dens(idx, 1 + g);
            for (int s = 0; s < kShCoeffs; ++s)
                color_in(Eigen::Index(k), kGeoFeatures + s) = sh(r, s);
        }
        const Mat raw_rgb = model.color_net.forward(color_in);

        std::vector<std::array<double, 3>> acc(n_rays, {0, 0, 0});
        for (size_t k = 0; k < color_rows.size(); ++k) {
            const int idx = color_rows[k];
            const int r = idx / ns;
            for (int c = 0; c < 3; ++c) {
                const double rgb = 1.0 / (1.0 + std::exp(-double(raw_rgb(Eigen::Index(k), c))));
                acc[size_t(r)][size_t(c)] += weights[size_t(idx)] * rgb;
            }
        }
        for (int r = 0; r < nr; ++r) {
            const int px = begin + r;
            for (int c = 0; c < 3; ++c)
                img.data[size_t(px) * 3 + c] =
                    float(clamp01(acc[size_t(r)][size_t(c)] + trans[size_t(r)] * cfg.background[size_t(c)]));
        }
    }
    return img;
}

}  // namespace snerf
