#pragma once

// Voxel-volume ingestion plus a deterministic synthetic phantom used
// throughout the test and acceptance suites in place of clinical scans.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "snerf/common.hpp"

namespace snerf {

struct VolumeError : std::runtime_error {
    explicit VolumeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VoxelVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1, 1, 1};
    std::array<double, 3> origin_mm{0, 0, 0};
    std::vector<float> intensities;  // x-fastest, normalized to [0,1]

    size_t voxel_count() const { return size_t(dims[0]) * dims[1] * dims[2]; }
    float at(int i, int j, int k) const {
        return intensities[size_t(i) + size_t(dims[0]) * (size_t(j) + size_t(dims[1]) * k)];
    }
    float& at(int i, int j, int k) {
        return intensities[size_t(i) + size_t(dims[0]) * (size_t(j) + size_t(dims[1]) * k)];
    }

    // Bounds of the voxel-center lattice in mm.
    std::array<double, 3> extent_mm() const {
        return {(dims[0] - 1) * spacing_mm[0], (dims[1] - 1) * spacing_mm[1], (dims[2] - 1) * spacing_mm[2]};
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 2) throw VolumeError("VoxelVolume: dims must be >= 2 per axis");
            if (!(spacing_mm[a] > 0)) throw VolumeError("VoxelVolume: spacing must be positive");
        }
        if (intensities.size() != voxel_count()) throw VolumeError("VoxelVolume: intensity count mismatch");
    }
};

// ---------------------------------------------------------------------------
// Sampling

// Trilinear interpolation over voxel centers; zero outside the lattice hull.
inline float sample_trilinear(const VoxelVolume& vol, const std::array<double, 3>& point_mm) {
    double u[3];
    for (int a = 0; a < 3; ++a) {
        u[a] = (point_mm[a] - vol.origin_mm[a]) / vol.spacing_mm[a];
        if (u[a] < 0.0 || u[a] > double(vol.dims[a] - 1)) return 0.f;
    }
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        i0[a] = int(u[a]);
        if (i0[a] > vol.dims[a] - 2) i0[a] = vol.dims[a] - 2;
        if (i0[a] < 0) i0[a] = 0;
        i1[a] = i0[a] + 1;
        f[a] = u[a] - i0[a];
    }
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double c00 = lerp(vol.at(i0[0], i0[1], i0[2]), vol.at(i1[0], i0[1], i0[2]), f[0]);
    double c10 = lerp(vol.at(i0[0], i1[1], i0[2]), vol.at(i1[0], i1[1], i0[2]), f[0]);
    double c01 = lerp(vol.at(i0[0], i0[1], i1[2]), vol.at(i1[0], i0[1], i1[2]), f[0]);
    double c11 = lerp(vol.at(i0[0], i1[1], i1[2]), vol.at(i1[0], i1[1], i1[2]), f[0]);
    return float(lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2]));
}

// Central differences of sample_trilinear with step = spacing, in 1/mm.
inline std::array<double, 3> gradient_at(const VoxelVolume& vol, const std::array<double, 3>& point_mm) {
    std::array<double, 3> g{0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        auto p = point_mm, m = point_mm;
        p[a] += vol.spacing_mm[a];
        m[a] -= vol.spacing_mm[a];
        g[a] = (sample_trilinear(vol, p) - sample_trilinear(vol, m)) / (2.0 * vol.spacing_mm[a]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// IO: raw + JSON sidecar, minimal single-file NIfTI-1

namespace detail {

inline std::string sibling_path(const std::string& path, const std::string& new_ext) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return path + new_ext;
    return path.substr(0, dot) + new_ext;
}

inline void minmax_normalize(std::vector<float>& v) {
    if (v.empty()) return;
    float lo = v[0], hi = v[0];
    for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi > lo) {
        const float inv = 1.f / (hi - lo);
        for (float& x : v) x = (x - lo) * inv;
    } else {
        // Constant volume: rescaling is degenerate, clamp instead.
        for (float& x : v) x = clamp01(x);
    }
}

inline VoxelVolume load_raw_with_sidecar(const std::string& json_path) {
    std::ifstream jf(json_path);
    if (!jf) throw VolumeError("load_volume: missing sidecar metadata " + json_path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(jf);
    } catch (const nlohmann::json::exception& e) {
        throw VolumeError("load_volume: corrupt sidecar " + json_path + ": " + e.what());
    }

    VoxelVolume vol;
    try {
        auto d = meta.at("dims");
        auto s = meta.at("spacing_mm");
        for (int a = 0; a < 3; ++a) {
            vol.dims[a] = d.at(a).get<int>();
            vol.spacing_mm[a] = s.at(a).get<double>();
        }
        if (meta.contains("origin_mm"))
            for (int a = 0; a < 3; ++a) vol.origin_mm[a] = meta["origin_mm"].at(a).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw VolumeError("load_volume: corrupt sidecar " + json_path + ": " + e.what());
    }
    const std::string dtype = meta.value("dtype", "f32");
    if (meta.value("endianness", "little") != "little")
        throw VolumeError("load_volume: unsupported endianness in " + json_path);

    size_t dsize;
    if (dtype == "u8")
        dsize = 1;
    else if (dtype == "i16")
        dsize = 2;
    else if (dtype == "f32")
        dsize = 4;
    else
        throw VolumeError("load_volume: unsupported dtype '" + dtype + "' in " + json_path);

    const std::string raw_path = sibling_path(json_path, ".raw");
    std::ifstream rf(raw_path, std::ios::binary | std::ios::ate);
    if (!rf) throw VolumeError("load_volume: missing payload " + raw_path);
    const size_t file_size = size_t(rf.tellg());
    const size_t expect = size_t(vol.dims[0]) * vol.dims[1] * vol.dims[2] * dsize;
    if (file_size != expect)
        throw VolumeError("load_volume: size mismatch in " + raw_path + ": expected " +
                          std::to_string(expect) + " bytes, found " + std::to_string(file_size));
    rf.seekg(0);
    std::vector<char> bytes(file_size);
    rf.read(bytes.data(), std::streamsize(file_size));

    const size_t n = expect / dsize;
    vol.intensities.resize(n);
    if (dtype == "u8") {
        for (size_t i = 0; i < n; ++i) vol.intensities[i] = float(uint8_t(bytes[i]));
    } else if (dtype == "i16") {
        for (size_t i = 0; i < n; ++i) {
            int16_t v;
            std::memcpy(&v, &bytes[2 * i], 2);
            vol.intensities[i] = float(v);
        }
    } else {
        std::memcpy(vol.intensities.data(), bytes.data(), file_size);
    }
    minmax_normalize(vol.intensities);
    vol.validate();
    return vol;
}

inline VoxelVolume load_nifti(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw VolumeError("load_volume: cannot open " + path);
    std::array<char, 348> hdr;
    if (!f.read(hdr.data(), 348)) throw VolumeError("load_volume: truncated NIfTI header in " + path);

    auto rd_i32 = [&](int off) { int32_t v; std::memcpy(&v, hdr.data() + off, 4); return v; };
    auto rd_i16 = [&](int off) { int16_t v; std::memcpy(&v, hdr.data() + off, 2); return v; };
    auto rd_f32 = [&](int off) { float v; std::memcpy(&v, hdr.data() + off, 4); return v; };

    if (rd_i32(0) != 348) throw VolumeError("load_volume: corrupt NIfTI header (sizeof_hdr) in " + path);
    if (std::strncmp(hdr.data() + 344, "n+1", 3) != 0)
        throw VolumeError("load_volume: corrupt NIfTI header (magic) in " + path);

    VoxelVolume vol;
    const int ndim = rd_i16(40);
    if (ndim < 3) throw VolumeError("load_volume: NIfTI dim[0] < 3 in " + path);
    for (int a = 0; a < 3; ++a) {
        vol.dims[a] = rd_i16(42 + 2 * a);
        vol.spacing_mm[a] = rd_f32(80 + 4 * a);
        if (vol.spacing_mm[a] <= 0) vol.spacing_mm[a] = 1.0;
    }
    vol.origin_mm = {rd_f32(268), rd_f32(272), rd_f32(276)};

    const int16_t datatype = rd_i16(70);
    size_t dsize;
    switch (datatype) {
        case 2: dsize = 1; break;   // u8
        case 4: dsize = 2; break;   // i16
        case 16: dsize = 4; break;  // f32
        default:
            throw VolumeError("load_volume: unsupported NIfTI datatype " + std::to_string(datatype) +
                              " in " + path);
    }
    const size_t vox_offset = size_t(rd_f32(108));
    const size_t n = size_t(vol.dims[0]) * vol.dims[1] * vol.dims[2];

    f.seekg(0, std::ios::end);
    const size_t file_size = size_t(f.tellg());
    if (file_size < vox_offset + n * dsize)
        throw VolumeError("load_volume: size mismatch in " + path + ": expected at least " +
                          std::to_string(vox_offset + n * dsize) + " bytes, found " +
                          std::to_string(file_size));
    f.seekg(std::streamoff(vox_offset));
    std::vector<char> bytes(n * dsize);
    f.read(bytes.data(), std::streamsize(bytes.size()));

    vol.intensities.resize(n);
    if (datatype == 2)
        for (size_t i = 0; i < n; ++i) vol.intensities[i] = float(uint8_t(bytes[i]));
    else if (datatype == 4)
        for (size_t i = 0; i < n; ++i) {
            int16_t v;
            std::memcpy(&v, &bytes[2 * i], 2);
            vol.intensities[i] = float(v);
        }
    else
        std::memcpy(vol.intensities.data(), bytes.data(), bytes.size());
    minmax_normalize(vol.intensities);
    vol.validate();
    return vol;
}

}  // namespace detail

// Accepts <name>.json / <name>.raw (raw + sidecar pair) or <name>.nii.
inline VoxelVolume load_volume(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".nii") return detail::load_nifti(path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".raw")
        return detail::load_raw_with_sidecar(detail::sibling_path(path, ".json"));
    return detail::load_raw_with_sidecar(path);
}

inline void save_volume_raw(const VoxelVolume& vol, const std::string& json_path) {
    vol.validate();
    nlohmann::json meta = {{"dims", vol.dims},
                           {"spacing_mm", vol.spacing_mm},
                           {"origin_mm", vol.origin_mm},
                           {"dtype", "f32"},
                           {"endianness", "little"}};
    std::ofstream jf(json_path);
    if (!jf) throw VolumeError("save_volume: cannot open " + json_path);
    jf << meta.dump(2) << "\n";
    const std::string raw_path = detail::sibling_path(json_path, ".raw");
    std::ofstream rf(raw_path, std::ios::binary);
    if (!rf) throw VolumeError("save_volume: cannot open " + raw_path);
    rf.write(reinterpret_cast<const char*>(vol.intensities.data()),
             std::streamsize(vol.intensities.size() * sizeof(float)));
}

// ---------------------------------------------------------------------------
// Synthetic phantom

namespace detail {

// Value noise on an integer lattice, smoothstep-interpolated. Pure function
// of (seed, position), so phantom generation is bit-deterministic.
inline double lattice_value(uint64_t seed, int x, int y, int z) {
    uint64_t h = hash_combine(seed, uint64_t(uint32_t(x)));
    h = hash_combine(h, uint64_t(uint32_t(y)));
    h = hash_combine(h, uint64_t(uint32_t(z)));
    return hash_to_unit(h) * 2.0 - 1.0;  // [-1,1]
}

inline double value_noise(uint64_t seed, double x, double y, double z) {
    int xi = int(std::floor(x)), yi = int(std::floor(y)), zi = int(std::floor(z));
    double fx = x - xi, fy = y - yi, fz = z - zi;
    auto s = [](double t) { return t * t * (3.0 - 2.0 * t); };
    double sx = s(fx), sy = s(fy), sz = s(fz);
    double acc = 0;
    for (int dz = 0; dz <= 1; ++dz)
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                double w = (dx ? sx : 1 - sx) * (dy ? sy : 1 - sy) * (dz ? sz : 1 - sz);
                acc += w * lattice_value(seed, xi + dx, yi + dy, zi + dz);
            }
    return acc;
}

inline double fbm(uint64_t seed, double x, double y, double z, int octaves) {
    double acc = 0, amp = 1, freq = 1, norm = 0;
    for (int o = 0; o < octaves; ++o) {
        acc += amp * value_noise(hash_combine(seed, uint64_t(o)), x * freq, y * freq, z * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    return acc / norm;
}

}  // namespace detail

// Deterministic phantom: a noise-perturbed spherical body ("cortex" with
// sulci-like surface relief) plus 2-4 curved surface tubes ("vessels") at
// distinct intensity bands.
inline VoxelVolume gen_phantom(uint64_t seed, const std::array<int, 3>& dims) {
    for (int a = 0; a < 3; ++a)
        if (dims[a] < 32) throw VolumeError("gen_phantom: dims must be >= 32 per axis");

    VoxelVolume vol;
    vol.dims = dims;
    vol.spacing_mm = {1.0, 1.0, 1.0};
    vol.origin_mm = {0.0, 0.0, 0.0};
    vol.intensities.assign(vol.voxel_count(), 0.f);

    const double cx = 0.5 * (dims[0] - 1), cy = 0.5 * (dims[1] - 1), cz = 0.5 * (dims[2] - 1);
    const double base_r = 0.38 * std::min({double(dims[0]), double(dims[1]), double(dims[2])});
    const uint64_t body_seed = hash_combine(seed, 1);
    const uint64_t tex_seed = hash_combine(seed, 2);

    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) {
                const double dx = i - cx, dy = j - cy, dz = k - cz;
                const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
                if (r > base_r * 1.25) continue;
                const double inv = r > 1e-9 ? 1.0 / r : 0.0;
                // Direction-dependent radius perturbation carves the relief.
                const double bump =
                    detail::fbm(body_seed, dx * inv * 3.0 + 7.3, dy * inv * 3.0 + 1.9, dz * inv * 3.0 + 4.1, 3);
                const double surface_r = base_r * (1.0 + 0.10 * bump);
                const double d = r - surface_r;  // signed distance-ish, negative inside
                if (d > 1.5) continue;
                double v = 0.55 + 0.12 * detail::fbm(tex_seed, i * 0.11, j * 0.11, k * 0.11, 3);
                // Soft shell falloff over ~1.5 voxels keeps renders step-size stable.
                if (d > -1.5) v *= 0.5 - d / 3.0;
                vol.at(i, j, k) = float(clamp01(v));
            }

    // Curved vessels hugging the surface: arcs sampled finely, stamped with a
    // spherical brush.
    std::mt19937 rng(uint32_t(seed ^ 0x5eed));
    const int n_tubes = 2 + int(rng() % 3u);  // 2..4
    for (int t = 0; t < n_tubes; ++t) {
        const double theta0 = uniform_double(rng, 0, 2 * kPi);
        const double phi0 = uniform_double(rng, 0.25 * kPi, 0.75 * kPi);
        const double arc = uniform_double(rng, 0.8, 1.8);
        const double wobble = uniform_double(rng, 1.5, 4.0);
        const double tube_r = uniform_double(rng, 1.2, 2.2);
        const float band = float(0.78 + 0.06 * t);  // distinct intensity per vessel
        const uint64_t tube_seed = hash_combine(seed, 100 + uint64_t(t));

        const int steps = 400;
        for (int s = 0; s <= steps; ++s) {
            const double u = double(s) / steps;
            const double theta = theta0 + arc * u;
            const double phi = phi0 + 0.35 * std::sin(wobble * u * 2 * kPi + theta0);
            const double shrink = 0.99;
            const double rr = base_r * shrink *
                              (1.0 + 0.10 * detail::fbm(hash_combine(seed, 1),
                                                        std::sin(phi) * std::cos(theta) * 3.0 + 7.3,
                                                        std::sin(phi) * std::sin(theta) * 3.0 + 1.9,
                                                        std::cos(phi) * 3.0 + 4.1, 3));
            (void)tube_seed;
            const double px = cx + rr * std::sin(phi) * std::cos(theta);
            const double py = cy + rr * std::sin(phi) * std::sin(theta);
            const double pz = cz + rr * std::cos(phi);
            const int R = int(std::ceil(tube_r));
            for (int dk = -R; dk <= R; ++dk)
                for (int dj = -R; dj <= R; ++dj)
                    for (int di = -R; di <= R; ++di) {
                        const int ii = int(std::lround(px)) + di, jj = int(std::lround(py)) + dj,
                                  kk = int(std::lround(pz)) + dk;
                        if (ii < 0 || jj < 0 || kk < 0 || ii >= dims[0] || jj >= dims[1] || kk >= dims[2])
                            continue;
                        const double dd = std::sqrt((ii - px) * (ii - px) + (jj - py) * (jj - py) +
                                                    (kk - pz) * (kk - pz));
                        if (dd <= tube_r && vol.at(ii, jj, kk) > 0.05f)
                            vol.at(ii, jj, kk) = std::max(vol.at(ii, jj, kk), band);
                    }
        }
    }

    vol.validate();
    return vol;
}

// ---------------------------------------------------------------------------
// Transfer function

struct TransferPoint {
    double intensity;                 // in [0,1]
    std::array<double, 3> rgb;        // in [0,1]^3
    double opacity_per_mm;            // >= 0
};

struct TransferFunction {
    std::vector<TransferPoint> control_points;
    double ambient = 0.25;
    double diffuse = 0.75;

    void validate() const {
        if (control_points.size() < 2) throw VolumeError("TransferFunction: need at least 2 control points");
        for (size_t i = 0; i < control_points.size(); ++i) {
            const auto& p = control_points[i];
            if (p.intensity < 0 || p.intensity > 1)
                throw VolumeError("TransferFunction: control intensity outside [0,1]");
            if (p.opacity_per_mm < 0) throw VolumeError("TransferFunction: negative opacity");
            if (i && !(control_points[i - 1].intensity < p.intensity))
                throw VolumeError("TransferFunction: control points must be strictly increasing");
        }
        if (ambient < 0 || ambient > 1 || diffuse < 0 || diffuse > 1)
            throw VolumeError("TransferFunction: shading coefficients outside [0,1]");
    }

    // Piecewise-linear lookup; clamps to the end points outside their range.
    void evaluate(double intensity, std::array<double, 3>& rgb, double& opacity) const {
        const auto& cp = control_points;
        if (intensity <= cp.front().intensity) {
            rgb = cp.front().rgb;
            opacity = cp.front().opacity_per_mm;
            return;
        }
        if (intensity >= cp.back().intensity) {
            rgb = cp.back().rgb;
            opacity = cp.back().opacity_per_mm;
            return;
        }
        size_t hi = 1;
        while (cp[hi].intensity < intensity) ++hi;
        const auto& a = cp[hi - 1];
        const auto& b = cp[hi];
        const double t = (intensity - a.intensity) / (b.intensity - a.intensity);
        for (int c = 0; c < 3; ++c) rgb[c] = a.rgb[c] + t * (b.rgb[c] - a.rgb[c]);
        opacity = a.opacity_per_mm + t * (b.opacity_per_mm - a.opacity_per_mm);
    }
};

inline TransferFunction transfer_function_from_json(const nlohmann::json& j) {
    TransferFunction tf;
    tf.control_points.clear();
    try {
        for (const auto& p : j.at("control_points")) {
            TransferPoint tp;
            tp.intensity = p.at(0).get<double>();
            tp.rgb = {p.at(1).get<double>(), p.at(2).get<double>(), p.at(3).get<double>()};
            tp.opacity_per_mm = p.at(4).get<double>();
            tf.control_points.push_back(tp);
        }
        tf.ambient = j.value("ambient", 0.25);
        tf.diffuse = j.value("diffuse", 0.75);
    } catch (const nlohmann::json::exception& e) {
        throw VolumeError(std::string("TransferFunction: malformed JSON: ") + e.what());
    }
    tf.validate();
    return tf;
}

inline nlohmann::json transfer_function_to_json(const TransferFunction& tf) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : tf.control_points)
        pts.push_back({p.intensity, p.rgb[0], p.rgb[1], p.rgb[2], p.opacity_per_mm});
    return {{"control_points", pts}, {"ambient", tf.ambient}, {"diffuse", tf.diffuse}};
}

}  // namespace snerf
