#pragma once

// Closed-form whitening/coloring transfer on the Haar feature pyramid: the
// content-preserving first stage of the two-stage stylization.

#include <Eigen/Dense>
#include <vector>

#include "snerf/haar.hpp"
#include "snerf/image.hpp"

namespace snerf {

struct LevelStyleStats {
    Eigen::VectorXd mean;        // per channel
    Eigen::MatrixXd covariance;  // channels x channels, population convention
};

struct StyleStats {
    std::vector<LevelStyleStats> levels;
};

struct WctConfig {
    int levels = 3;
    std::vector<double> blend_alpha = {0.8};  // per level; broadcast when size 1
    double eigen_regularization = 1e-5;
    bool circular_mask = false;  // restrict style statistics to the inscribed circle

    double alpha_for(int level) const {
        if (blend_alpha.empty()) return 1.0;
        return blend_alpha[size_t(level) < blend_alpha.size() ? level : blend_alpha.size() - 1];
    }
    void validate() const {
        if (levels < 1) throw StyleError("WctConfig: levels must be >= 1");
        for (double a : blend_alpha)
            if (a < 0 || a > 1) throw StyleError("WctConfig: blend_alpha outside [0,1]");
        if (!(eigen_regularization > 0)) throw StyleError("WctConfig: eigen_regularization must be > 0");
    }
};

namespace wct_detail {

// Positions kept when a circular mask is active: inscribed circle, centered.
inline bool in_mask(int x, int y, int w, int h, bool circular) {
    if (!circular) return true;
    const double dx = (x + 0.5) / w - 0.5, dy = (y + 0.5) / h - 0.5;
    return dx * dx + dy * dy <= 0.25;
}

inline LevelStyleStats level_stats(const PyramidLevelT<float>& lvl, bool circular_mask) {
    const int C = kPyramidChannels;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(C);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(C, C);
    size_t n = 0;
    Eigen::VectorXd f(C);
    for (int y = 0; y < lvl.height; ++y)
        for (int x = 0; x < lvl.width; ++x) {
            if (!in_mask(x, y, lvl.width, lvl.height, circular_mask)) continue;
            const float* p = lvl.feat(x, y);
            for (int c = 0; c < C; ++c) f[c] = p[c];
            mean += f;
            second.selfadjointView<Eigen::Lower>().rankUpdate(f);
            ++n;
        }
    if (n < size_t(C) + 1) throw StyleError("compute_style_stats: too few samples at a pyramid level");
    mean /= double(n);
    LevelStyleStats out;
    out.mean = mean;
    out.covariance = Eigen::MatrixXd(second.selfadjointView<Eigen::Lower>()) / double(n) -
                     mean * mean.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

}  // namespace wct_detail

inline StyleStats compute_style_stats(const FeaturePyramid& pyr, bool circular_mask = false) {
    StyleStats stats;
    for (const auto& lvl : pyr.levels) stats.levels.push_back(wct_detail::level_stats(lvl, circular_mask));
    return stats;
}

// Linear map to zero mean and identity covariance, via symmetric
// eigendecomposition with an eigenvalue floor.
inline PyramidLevelT<float> whiten(const PyramidLevelT<float>& features, double eps) {
    const int C = kPyramidChannels;
    const auto stats = wct_detail::level_stats(features, false);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(stats.covariance);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(eps);
    const Eigen::MatrixXd W =
        eig.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

    PyramidLevelT<float> out = features;
    Eigen::VectorXd f(C);
    for (size_t p = 0; p < features.positions(); ++p) {
        for (int c = 0; c < C; ++c) f[c] = features.data[p * C + c] - stats.mean[c];
        const Eigen::VectorXd w = W * f;
        for (int c = 0; c < C; ++c) out.data[p * C + c] = float(w[c]);
    }
    return out;
}

// Maps (approximately) white features to the target mean and covariance.
inline PyramidLevelT<float> color(const PyramidLevelT<float>& whitened, const LevelStyleStats& target) {
    const int C = kPyramidChannels;
    if (target.mean.size() != C || target.covariance.rows() != C)
        throw StyleError("color: stats dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target.covariance);
    if (eig.eigenvalues().minCoeff() < -1e-8) throw StyleError("color: target covariance is not PSD");
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd M =
        eig.eigenvectors() * lam.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();

    PyramidLevelT<float> out = whitened;
    Eigen::VectorXd f(C);
    for (size_t p = 0; p < whitened.positions(); ++p) {
        for (int c = 0; c < C; ++c) f[c] = whitened.data[p * C + c];
        const Eigen::VectorXd v = M * f + target.mean;
        for (int c = 0; c < C; ++c) out.data[p * C + c] = float(v[c]);
    }
    return out;
}

// Whitening/coloring per pyramid level, blended with the content features,
// then reconstructed. Style is resampled to the content grid first.
inline Image wct_stage(const Image& content, const Image& style, const WctConfig& cfg) {
    cfg.validate();
    const Image style_fit = fit_to_dims(style, content.width, content.height);
    FeaturePyramid pc = haar_decompose(content, cfg.levels);
    const FeaturePyramid ps = haar_decompose(style_fit, cfg.levels);
    const StyleStats stats = compute_style_stats(ps, cfg.circular_mask);

    for (int l = 0; l < cfg.levels; ++l) {
        const double alpha = cfg.alpha_for(l);
        if (alpha == 0.0) continue;
        PyramidLevelT<float> transformed =
            color(whiten(pc.levels[l], cfg.eigen_regularization), stats.levels[l]);
        auto& dst = pc.levels[l];
        for (size_t i = 0; i < dst.data.size(); ++i)
            dst.data[i] = float(alpha * transformed.data[i] + (1.0 - alpha) * dst.data[i]);
    }
    Image out = haar_reconstruct(pc);
    out.clamp_unit();
    return out;
}

}  // namespace snerf
