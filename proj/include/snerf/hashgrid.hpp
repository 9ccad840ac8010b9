#pragma once

// Multiresolution hash-grid encoding: per-level trainable feature tables
// indexed by an XOR-multiply spatial hash of grid corners (direct indexing
// where the dense grid fits), trilinearly interpolated and concatenated.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "snerf/common.hpp"

namespace snerf {

struct NerfError : std::runtime_error {
    explicit NerfError(const std::string& msg) : std::runtime_error(msg) {}
};

struct HashGridConfig {
    int levels = 12;
    int log2_table_size = 18;
    int features = 2;
    int n_min = 16;
    int n_max = 1024;

    void validate() const {
        if (levels < 1) throw NerfError("HashGridConfig: levels must be >= 1");
        if (log2_table_size < 1 || log2_table_size > 24)
            throw NerfError("HashGridConfig: log2_table_size out of range");
        if (features < 1) throw NerfError("HashGridConfig: features must be >= 1");
        if (n_min < 2) throw NerfError("HashGridConfig: n_min must be >= 2");
        if (n_max < n_min) throw NerfError("HashGridConfig: n_max must be >= n_min");
    }
};

inline constexpr uint32_t kHashPrimeY = 2654435761u;
inline constexpr uint32_t kHashPrimeZ = 805459861u;

template <typename R>
struct HashGridEncoding {
    HashGridConfig cfg;
    std::array<double, 3> bbox_min{0, 0, 0};  // scene box mapped to [0,1]^3
    std::array<double, 3> bbox_max{1, 1, 1};
    std::vector<int> resolutions;  // N_l, strictly increasing
    std::vector<uint8_t> dense;    // per level: dense grid fits in the table
    std::vector<R> tables;         // levels * table_size * features

    uint32_t table_size() const { return 1u << cfg.log2_table_size; }
    size_t params_per_level() const { return size_t(table_size()) * cfg.features; }
    int feature_dim() const { return cfg.levels * cfg.features; }

    void init(uint64_t seed) {
        cfg.validate();
        resolutions.resize(size_t(cfg.levels));
        dense.resize(size_t(cfg.levels));
        const double growth =
            cfg.levels > 1 ? std::exp(std::log(double(cfg.n_max) / cfg.n_min) / (cfg.levels - 1)) : 1.0;
        int prev = 0;
        for (int l = 0; l < cfg.levels; ++l) {
            int n = int(std::floor(cfg.n_min * std::pow(growth, l)));
            n = std::max(n, prev + 1);  // keep the progression strictly increasing
            resolutions[size_t(l)] = n;
            prev = n;
            const uint64_t verts = uint64_t(n + 1) * (n + 1) * (n + 1);
            dense[size_t(l)] = verts <= table_size() ? 1 : 0;
        }
        tables.assign(size_t(cfg.levels) * params_per_level(), R(0));
        std::mt19937 rng{uint32_t(seed)};
        std::uniform_real_distribution<double> dist(-1e-4, 1e-4);
        for (auto& t : tables) t = R(dist(rng));
    }

    // Unit-cube coordinates of a world point, clamped to the box.
    void world_to_unit(const double* p_world, R* u) const {
        for (int a = 0; a < 3; ++a) {
            const double ext = bbox_max[a] - bbox_min[a];
            u[a] = R(clamp01((p_world[a] - bbox_min[a]) / (ext > 0 ? ext : 1.0)));
        }
    }

    uint32_t slot_for(int level, uint32_t x, uint32_t y, uint32_t z) const {
        if (dense[size_t(level)]) {
            const uint32_t n1 = uint32_t(resolutions[size_t(level)]) + 1;
            return x + n1 * (y + n1 * z);
        }
        return (x ^ (y * kHashPrimeY) ^ (z * kHashPrimeZ)) & (table_size() - 1);
    }

    struct Corners {
        uint32_t slot[8];
        R weight[8];
    };

    void level_corners(int level, const R* unit, Corners& c) const {
        const int n = resolutions[size_t(level)];
        R f[3];
        uint32_t i0[3];
        for (int a = 0; a < 3; ++a) {
            R pos = unit[a] * R(n);
            int i = int(pos);
            if (i > n - 1) i = n - 1;
            if (i < 0) i = 0;
            i0[a] = uint32_t(i);
            f[a] = pos - R(i);
        }
        int k = 0;
        for (int dz = 0; dz <= 1; ++dz)
            for (int dy = 0; dy <= 1; ++dy)
                for (int dx = 0; dx <= 1; ++dx, ++k) {
                    c.slot[k] = slot_for(level, i0[0] + uint32_t(dx), i0[1] + uint32_t(dy),
                                         i0[2] + uint32_t(dz));
                    c.weight[k] = (dx ? f[0] : R(1) - f[0]) * (dy ? f[1] : R(1) - f[1]) *
                                  (dz ? f[2] : R(1) - f[2]);
                }
    }

    // Feature vector (levels * features) for a unit-cube point.
    void encode(const R* unit, R* out) const {
        const int F = cfg.features;
        Corners c;
        for (int l = 0; l < cfg.levels; ++l) {
            level_corners(l, unit, c);
            const R* table = tables.data() + size_t(l) * params_per_level();
            for (int f = 0; f < F; ++f) out[l * F + f] = R(0);
            for (int k = 0; k < 8; ++k) {
                const R* entry = table + size_t(c.slot[k]) * F;
                const R w = c.weight[k];
                for (int f = 0; f < F; ++f) out[l * F + f] += w * entry[f];
            }
        }
    }

    // Scatters a feature-vector gradient back into a table-gradient buffer.
    void encode_backward(const R* unit, const R* d_out, R* d_tables) const {
        const int F = cfg.features;
        Corners c;
        for (int l = 0; l < cfg.levels; ++l) {
            level_corners(l, unit, c);
            R* gtable = d_tables + size_t(l) * params_per_level();
            for (int k = 0; k < 8; ++k) {
                R* gentry = gtable + size_t(c.slot[k]) * F;
                const R w = c.weight[k];
                for (int f = 0; f < F; ++f) gentry[f] += w * d_out[l * F + f];
            }
        }
    }
};

}  // namespace snerf
