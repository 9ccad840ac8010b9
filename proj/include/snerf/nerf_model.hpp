#pragma once

// The radiance field: hash-grid encoding, a density MLP (raw sigma + geometry
// feature) and a color MLP conditioned on the SH-encoded view direction.
// sigma = exp(raw, clamped at 15) >= 0 by construction; rgb = logistic in
// (0,1)^3. Density never sees the view direction.

#include <Eigen/Dense>
#include <cstring>
#include <fstream>

#include "nlohmann/json.hpp"
#include "snerf/camera.hpp"
#include "snerf/hashgrid.hpp"
#include "snerf/sh.hpp"

namespace snerf {

inline constexpr int kGeoFeatures = 15;
inline constexpr double kSigmaClamp = 15.0;
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename R>
using MatRM = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename R>
struct DenseLayer {
    int in = 0, out = 0;
    std::vector<R> w;  // out x in, row-major
    std::vector<R> b;  // out

    Eigen::Map<const MatRM<R>> weight() const { return {w.data(), out, in}; }
};

template <typename R>
struct Mlp {
    std::vector<DenseLayer<R>> layers;

    void init(const std::vector<int>& dims, std::mt19937& rng) {
        layers.clear();
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
            DenseLayer<R> l;
            l.in = dims[i];
            l.out = dims[i + 1];
            l.w.resize(size_t(l.in) * l.out);
            l.b.assign(size_t(l.out), R(0));
            const double limit = std::sqrt(6.0 / (l.in + l.out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : l.w) v = R(dist(rng));
            layers.push_back(std::move(l));
        }
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }

    // Batched forward; ReLU between layers, linear output. When `cache` is
    // given it receives the input of every layer (needed for backward).
    MatRM<R> forward(const MatRM<R>& x, std::vector<MatRM<R>>* cache = nullptr) const {
        MatRM<R> cur = x;
        for (size_t i = 0; i < layers.size(); ++i) {
            if (cache) cache->push_back(cur);
            const auto& l = layers[i];
            MatRM<R> next(cur.rows(), l.out);
            next.noalias() = cur * l.weight().transpose();
            next.rowwise() += Eigen::Map<const Eigen::Matrix<R, 1, Eigen::Dynamic>>(l.b.data(), l.out);
            if (i + 1 < layers.size()) next = next.cwiseMax(R(0));
            cur = std::move(next);
        }
        return cur;
    }
};

template <typename R>
struct MlpGrads {
    std::vector<std::vector<R>> w, b;

    void init_like(const Mlp<R>& mlp) {
        w.clear();
        b.clear();
        for (const auto& l : mlp.layers) {
            w.emplace_back(l.w.size(), R(0));
            b.emplace_back(l.b.size(), R(0));
        }
    }
    void zero() {
        for (auto& v : w) std::fill(v.begin(), v.end(), R(0));
        for (auto& v : b) std::fill(v.begin(), v.end(), R(0));
    }
};

// Backward through an MLP given the cached layer inputs; accumulates weight
// and bias gradients and returns the gradient w.r.t. the input batch.
template <typename R>
MatRM<R> mlp_backward(const Mlp<R>& mlp, const std::vector<MatRM<R>>& cache, MatRM<R> d_out,
                      MlpGrads<R>& grads) {
    for (int i = int(mlp.layers.size()) - 1; i >= 0; --i) {
        const auto& l = mlp.layers[size_t(i)];
        const MatRM<R>& input = cache[size_t(i)];
        Eigen::Map<MatRM<R>> gw(grads.w[size_t(i)].data(), l.out, l.in);
        gw.noalias() += d_out.transpose() * input;
        Eigen::Map<Eigen::Matrix<R, 1, Eigen::Dynamic>> gb(grads.b[size_t(i)].data(), l.out);
        gb += d_out.colwise().sum();
        if (i == 0) {
            MatRM<R> d_in(d_out.rows(), l.in);
            d_in.noalias() = d_out * l.weight();
            return d_in;
        }
        MatRM<R> d_in(d_out.rows(), l.in);
        d_in.noalias() = d_out * l.weight();
        // ReLU mask: the cached input of layer i is the post-ReLU output of
        // layer i-1.
        d_out = d_in.cwiseProduct((input.array() > R(0)).template cast<R>().matrix());
    }
    return d_out;
}

template <typename R>
struct FieldSample {
    R sigma = 0;
    std::array<R, 3> rgb{0, 0, 0};
};

template <typename R>
struct RadianceFieldModel {
    HashGridEncoding<R> encoding;
    Mlp<R> density_net;  // feature_dim -> 64 -> (1 + kGeoFeatures)
    Mlp<R> color_net;    // kGeoFeatures + kShCoeffs -> 64 -> 64 -> 3
    int density_hidden = 64;
    int color_hidden = 64;
    CameraIntrinsics train_intrinsics;  // recorded at training time (optional)

    void init(uint64_t seed) {
        encoding.init(seed);
        std::mt19937 rng(uint32_t(hash_combine(seed, 0x4d4c50)));
        density_net.init({encoding.feature_dim(), density_hidden, 1 + kGeoFeatures}, rng);
        color_net.init({kGeoFeatures + kShCoeffs, color_hidden, color_hidden, 3}, rng);
    }

    size_t param_count() const {
        return encoding.tables.size() + density_net.param_count() + color_net.param_count();
    }

    FieldSample<R> field_eval(const std::array<double, 3>& x_world,
                              const std::array<double, 3>& direction) const {
        R unit[3];
        encoding.world_to_unit(x_world.data(), unit);
        MatRM<R> feat(1, encoding.feature_dim());
        encoding.encode(unit, feat.data());
        const MatRM<R> dens = density_net.forward(feat);

        MatRM<R> color_in(1, kGeoFeatures + kShCoeffs);
        for (int i = 0; i < kGeoFeatures; ++i) color_in(0, i) = dens(0, 1 + i);
        sh_basis16(R(direction[0]), R(direction[1]), R(direction[2]),
                   color_in.data() + kGeoFeatures);
        const MatRM<R> raw_rgb = color_net.forward(color_in);

        FieldSample<R> s;
        s.sigma = std::exp(std::min(dens(0, 0), R(kSigmaClamp)));
        for (int c = 0; c < 3; ++c) s.rgb[size_t(c)] = R(1) / (R(1) + std::exp(-raw_rgb(0, c)));
        return s;
    }
};

// ---------------------------------------------------------------------------
// Checkpoint IO: magic "SNRF", u32 version, u32 JSON length + config JSON,
// then f32 parameters (tables level-major, density MLP row-major, color MLP).

namespace model_io_detail {

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline uint32_t read_u32(std::istream& is, const std::string& path) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw NerfError("load_model: truncated file " + path);
    return v;
}

inline void write_f32(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}

inline void read_f32(std::istream& is, std::vector<float>& v, const std::string& path) {
    if (!is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4)))
        throw NerfError("load_model: truncated file " + path);
}

}  // namespace model_io_detail

inline void save_model(const RadianceFieldModel<float>& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NerfError("save_model: cannot open " + path);

    nlohmann::json j;
    j["levels"] = model.encoding.cfg.levels;
    j["log2_table_size"] = model.encoding.cfg.log2_table_size;
    j["features"] = model.encoding.cfg.features;
    j["n_min"] = model.encoding.cfg.n_min;
    j["n_max"] = model.encoding.cfg.n_max;
    j["bbox_min"] = model.encoding.bbox_min;
    j["bbox_max"] = model.encoding.bbox_max;
    j["density_hidden"] = model.density_hidden;
    j["color_hidden"] = model.color_hidden;
    if (model.train_intrinsics.width > 0) {
        j["intrinsics"] = {{"w", model.train_intrinsics.width}, {"h", model.train_intrinsics.height},
                           {"fl_x", model.train_intrinsics.fx}, {"fl_y", model.train_intrinsics.fy},
                           {"cx", model.train_intrinsics.cx},  {"cy", model.train_intrinsics.cy}};
    }
    const std::string cfg = j.dump();

    f.write("SNRF", 4);
    model_io_detail::write_u32(f, kCheckpointVersion);
    model_io_detail::write_u32(f, uint32_t(cfg.size()));
    f.write(cfg.data(), std::streamsize(cfg.size()));

    model_io_detail::write_f32(f, model.encoding.tables);
    for (const auto& l : model.density_net.layers) {
        model_io_detail::write_f32(f, l.w);
        model_io_detail::write_f32(f, l.b);
    }
    for (const auto& l : model.color_net.layers) {
        model_io_detail::write_f32(f, l.w);
        model_io_detail::write_f32(f, l.b);
    }
    if (!f) throw NerfError("save_model: write failed for " + path);
}

inline RadianceFieldModel<float> load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NerfError("load_model: cannot open " + path);

    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "SNRF", 4) != 0)
        throw NerfError("load_model: bad magic in " + path);
    const uint32_t version = model_io_detail::read_u32(f, path);
    if (version != kCheckpointVersion)
        throw NerfError("load_model: unsupported version " + std::to_string(version) + " in " + path);
    const uint32_t cfg_len = model_io_detail::read_u32(f, path);
    std::string cfg(cfg_len, '\0');
    if (!f.read(cfg.data(), cfg_len)) throw NerfError("load_model: truncated file " + path);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw NerfError(std::string("load_model: corrupt config block: ") + e.what());
    }

    RadianceFieldModel<float> model;
    model.encoding.cfg.levels = j.at("levels").get<int>();
    model.encoding.cfg.log2_table_size = j.at("log2_table_size").get<int>();
    model.encoding.cfg.features = j.at("features").get<int>();
    model.encoding.cfg.n_min = j.at("n_min").get<int>();
    model.encoding.cfg.n_max = j.at("n_max").get<int>();
    model.density_hidden = j.value("density_hidden", 64);
    model.color_hidden = j.value("color_hidden", 64);
    model.init(0);  // builds the layout; parameters are overwritten below
    for (int a = 0; a < 3; ++a) {
        model.encoding.bbox_min[a] = j.at("bbox_min").at(a).get<double>();
        model.encoding.bbox_max[a] = j.at("bbox_max").at(a).get<double>();
    }
    if (j.contains("intrinsics")) {
        const auto& ji = j["intrinsics"];
        model.train_intrinsics.width = ji.at("w").get<int>();
        model.train_intrinsics.height = ji.at("h").get<int>();
        model.train_intrinsics.fx = ji.at("fl_x").get<double>();
        model.train_intrinsics.fy = ji.at("fl_y").get<double>();
        model.train_intrinsics.cx = ji.at("cx").get<double>();
        model.train_intrinsics.cy = ji.at("cy").get<double>();
    }

    model_io_detail::read_f32(f, model.encoding.tables, path);
    for (auto& l : model.density_net.layers) {
        model_io_detail::read_f32(f, l.w, path);
        model_io_detail::read_f32(f, l.b, path);
    }
    for (auto& l : model.color_net.layers) {
        model_io_detail::read_f32(f, l.w, path);
        model_io_detail::read_f32(f, l.b, path);
    }
    return model;
}

}  // namespace snerf
