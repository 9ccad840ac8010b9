#pragma once

// Front-to-back emission-absorption ray casting of a VoxelVolume with
// piecewise-linear transfer function and single headlight Lambertian shading.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "snerf/camera.hpp"
#include "snerf/image.hpp"
#include "snerf/volume.hpp"

namespace snerf {

struct RaycastConfig {
    double step_mm = 0.5;
    std::array<double, 3> background = {0, 0, 0};
    double min_transmittance = 1e-3;  // early ray termination
};

namespace detail {

// Slab test against [lo, hi]; returns false on miss.
inline bool intersect_aabb(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& lo,
                           const Eigen::Vector3d& hi, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::max();
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(d[a]) < 1e-15) {
            if (o[a] < lo[a] || o[a] > hi[a]) return false;
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

}  // namespace detail

inline Image render_volume(const VoxelVolume& vol, const TransferFunction& tf, const CameraPose& pose,
                           const CameraIntrinsics& intr, const RaycastConfig& cfg = {}) {
    vol.validate();
    tf.validate();
    intr.validate();
    const double min_spacing = std::min({vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]});
    if (!(cfg.step_mm > 0) || cfg.step_mm > min_spacing)
        throw VolumeError("render_volume: step_mm must be in (0, min(spacing)]");

    const Eigen::Vector3d lo(vol.origin_mm[0], vol.origin_mm[1], vol.origin_mm[2]);
    const auto ext = vol.extent_mm();
    const Eigen::Vector3d hi = lo + Eigen::Vector3d(ext[0], ext[1], ext[2]);

    Image img(intr.width, intr.height, 3);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            Eigen::Vector3d origin, dir;
            pixel_ray(pose, intr, x, y, origin, dir);

            double acc[3] = {0, 0, 0};
            double T = 1.0;
            double t0, t1;
            if (detail::intersect_aabb(origin, dir, lo, hi, t0, t1)) {
                const int n_steps = int(std::ceil((t1 - t0) / cfg.step_mm));
                for (int s = 0; s < n_steps && T > cfg.min_transmittance; ++s) {
                    const double tm = t0 + (s + 0.5) * cfg.step_mm;
                    if (tm > t1) break;
                    const Eigen::Vector3d p = origin + tm * dir;
                    const std::array<double, 3> pm{p.x(), p.y(), p.z()};
                    const double v = sample_trilinear(vol, pm);
                    std::array<double, 3> rgb;
                    double opacity;
                    tf.evaluate(v, rgb, opacity);
                    if (opacity <= 0) continue;
                    const double seg = std::min(cfg.step_mm, t1 - tm + 0.5 * cfg.step_mm);
                    const double alpha = 1.0 - std::exp(-opacity * seg);

                    // Headlight Lambertian shading from the intensity gradient.
                    double shade = tf.ambient;
                    const auto g = gradient_at(vol, pm);
                    const double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                    if (gn > 1e-9) {
                        // Outward normal is -gradient (interior is brighter); the
                        // light sits at the camera, so N.L = (g . dir)/|g|.
                        const double ndotl = (g[0] * dir.x() + g[1] * dir.y() + g[2] * dir.z()) / gn;
                        shade += tf.diffuse * std::max(0.0, ndotl);
                    }
                    const double w = T * alpha;
                    for (int c = 0; c < 3; ++c) acc[c] += w * std::min(1.0, shade * rgb[c]);
                    T *= (1.0 - alpha);
                }
            }
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = float(clamp01(acc[c] + T * cfg.background[c]));
        }
    }
    return img;
}

}  // namespace snerf
