#pragma once

// Evaluation suite: PSNR, windowed SSIM on luminance, and a Gram-matrix
// texture score over the Haar pyramid, plus the per-pose agreement report.

#include <cmath>
#include <iomanip>
#include <sstream>

#include "nlohmann/json.hpp"
#include "snerf/haar.hpp"
#include "snerf/image.hpp"

namespace snerf {

struct MetricsError : std::runtime_error {
    explicit MetricsError(const std::string& msg) : std::runtime_error(msg) {}
};

// 10*log10(1/MSE) over all channels, values in [0,1]; capped at 100 dB.
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_dims(b)) throw MetricsError("psnr: dim mismatch");
    double mse = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

// Standard SSIM: luminance grayscale, 8x8 uniform window, stride 1,
// C1=(0.01)^2, C2=(0.03)^2 on unit dynamic range, mean over windows.
inline double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw MetricsError("ssim: dim mismatch");
    constexpr int kWin = 8;
    if (a.width < kWin || a.height < kWin) throw MetricsError("ssim: image smaller than the window");
    const Image ga = to_luminance(a), gb = to_luminance(b);
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    constexpr double inv_n = 1.0 / (kWin * kWin);

    double total = 0;
    size_t windows = 0;
    for (int y = 0; y + kWin <= a.height; ++y)
        for (int x = 0; x + kWin <= a.width; ++x) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int v = 0; v < kWin; ++v)
                for (int u = 0; u < kWin; ++u) {
                    const double px = ga.at(x + u, y + v, 0);
                    const double py = gb.at(x + u, y + v, 0);
                    sx += px;
                    sy += py;
                    sxx += px * px;
                    syy += py * py;
                    sxy += px * py;
                }
            // Raw (unclamped) second moments keep ssim(x,x) == 1 exact: for
            // identical inputs numerator and denominator are bitwise equal.
            const double mx = sx * inv_n, my = sy * inv_n;
            const double vx = sxx * inv_n - mx * mx;
            const double vy = syy * inv_n - my * my;
            const double cxy = sxy * inv_n - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    return total / double(windows);
}

// 1 - mean cosine similarity between per-level Gram matrices of the two Haar
// pyramids; 0 for identical images, lower is better. An all-zero Gram on
// either side makes the comparison degenerate: the score is 1 and the flag
// (when requested) is set.
inline double gram_matrix_score(const Image& a, const Image& b, int levels, bool* degenerate = nullptr) {
    if (!a.same_dims(b)) throw MetricsError("gram_matrix_score: dim mismatch");
    if (degenerate) *degenerate = false;
    const FeaturePyramid pa = haar_decompose(a, levels);
    const FeaturePyramid pb = haar_decompose(b, levels);

    double sim_sum = 0;
    for (int l = 0; l < levels; ++l) {
        const auto& la = pa.levels[size_t(l)];
        const auto& lb = pb.levels[size_t(l)];
        const int C = kPyramidChannels;
        std::vector<double> gram_a(size_t(C) * C, 0.0), gram_b(size_t(C) * C, 0.0);
        for (size_t p = 0; p < la.positions(); ++p) {
            const float* fa = &la.data[p * C];
            const float* fb = &lb.data[p * C];
            for (int i = 0; i < C; ++i)
                for (int j = i; j < C; ++j) {
                    gram_a[size_t(i) * C + j] += double(fa[i]) * fa[j];
                    gram_b[size_t(i) * C + j] += double(fb[i]) * fb[j];
                }
        }
        double dot = 0, na = 0, nb = 0;
        for (int i = 0; i < C; ++i)
            for (int j = i; j < C; ++j) {
                const double s = (i == j) ? 1.0 : 2.0;  // lower triangle mirrored
                const double va = gram_a[size_t(i) * C + j] / double(la.positions());
                const double vb = gram_b[size_t(i) * C + j] / double(la.positions());
                dot += s * va * vb;
                na += s * va * va;
                nb += s * vb * vb;
            }
        if (na <= 0 || nb <= 0) {
            if (degenerate) *degenerate = true;
            return 1.0;
        }
        sim_sum += dot / std::sqrt(na * nb);
    }
    const double score = 1.0 - sim_sum / levels;
    return std::fabs(score) < 1e-12 ? 0.0 : score;  // snap fp noise so score(x,x) == 0
}

struct MetricsRow {
    double ssim = 0;
    double psnr_db = 0;
    double gms = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    MetricsRow mean, stddev;

    void finalize() {
        const size_t n = rows.size();
        mean = stddev = MetricsRow{};
        for (const auto& r : rows) {
            mean.ssim += r.ssim;
            mean.psnr_db += r.psnr_db;
            mean.gms += r.gms;
        }
        mean.ssim /= double(n);
        mean.psnr_db /= double(n);
        mean.gms /= double(n);
        if (n > 1) {
            for (const auto& r : rows) {
                stddev.ssim += (r.ssim - mean.ssim) * (r.ssim - mean.ssim);
                stddev.psnr_db += (r.psnr_db - mean.psnr_db) * (r.psnr_db - mean.psnr_db);
                stddev.gms += (r.gms - mean.gms) * (r.gms - mean.gms);
            }
            stddev.ssim = std::sqrt(stddev.ssim / double(n - 1));
            stddev.psnr_db = std::sqrt(stddev.psnr_db / double(n - 1));
            stddev.gms = std::sqrt(stddev.gms / double(n - 1));
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json rows_j = nlohmann::json::array();
        for (const auto& r : rows)
            rows_j.push_back({{"ssim", r.ssim}, {"psnr_db", r.psnr_db}, {"gms", r.gms}});
        return {{"rows", rows_j},
                {"mean", {{"ssim", mean.ssim}, {"psnr_db", mean.psnr_db}, {"gms", mean.gms}}},
                {"stddev", {{"ssim", stddev.ssim}, {"psnr_db", stddev.psnr_db}, {"gms", stddev.gms}}},
                {"lpips", nullptr}};  // slot kept so external values can be merged
    }

    std::string format_table() const {
        std::ostringstream os;
        os << std::fixed;
        os << "pose        SSIM     PSNR      GMS\n";
        for (size_t i = 0; i < rows.size(); ++i)
            os << std::setw(4) << i << "    " << std::setprecision(4) << std::setw(8) << rows[i].ssim
               << " " << std::setprecision(2) << std::setw(8) << rows[i].psnr_db << " "
               << std::setprecision(4) << std::setw(8) << rows[i].gms << "\n";
        os << "mean    " << std::setprecision(2) << rows.size() << "-pose aggregate\n";
        os << "        " << std::setprecision(4) << std::setw(8) << mean.ssim << " "
           << std::setprecision(2) << std::setw(8) << mean.psnr_db << " " << std::setprecision(4)
           << std::setw(8) << mean.gms << "\n";
        os << "stddev  " << std::setprecision(4) << std::setw(8) << stddev.ssim << " "
           << std::setprecision(2) << std::setw(8) << stddev.psnr_db << " " << std::setprecision(4)
           << std::setw(8) << stddev.gms << "\n";
        return os.str();
    }
};

inline int usable_gms_levels(int w, int h, int want = 3) {
    int lv = 0, m = std::min(w, h);
    while (lv < want && m % 2 == 0 && m > 1) {
        m /= 2;
        ++lv;
    }
    return std::max(1, lv);
}

inline MetricsReport evaluate_agreement(const std::vector<Image>& set_a, const std::vector<Image>& set_b) {
    if (set_a.size() != set_b.size()) throw MetricsError("evaluate_agreement: count mismatch");
    if (set_a.empty()) throw MetricsError("evaluate_agreement: empty sets");
    MetricsReport report;
    report.rows.resize(set_a.size());
    for (size_t i = 0; i < set_a.size(); ++i) {
        const int levels = usable_gms_levels(set_a[i].width, set_a[i].height);
        report.rows[i].ssim = ssim(set_a[i], set_b[i]);
        report.rows[i].psnr_db = psnr(set_a[i], set_b[i]);
        report.rows[i].gms = gram_matrix_score(set_a[i], set_b[i], levels);
    }
    report.finalize();
    return report;
}

}  // namespace snerf
