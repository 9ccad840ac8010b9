#pragma once

// Multiscale feature pyramid built from an orthonormal 2D Haar transform.
// Level l (1-based) holds, per position, the 15-channel vector
//   [LL(3) | LH(3) | HL(3) | HH(3) | DS(3)]
// at resolution (w/2^l, h/2^l), where DS = LL * 2^-l is the box-downsampled
// rgb. The transform is linear, so its adjoint (needed by the style
// optimizer) is the inverse transform.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "snerf/image.hpp"

namespace snerf {

struct StyleError : std::runtime_error {
    explicit StyleError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int kPyramidChannels = 15;
// Channel block offsets within a level.
inline constexpr int kChanLL = 0, kChanLH = 3, kChanHL = 6, kChanHH = 9, kChanDS = 12;

template <typename R>
struct PyramidLevelT {
    int width = 0, height = 0;
    std::vector<R> data;  // position-major, kPyramidChannels per position

    R* feat(int x, int y) { return &data[(size_t(y) * width + x) * kPyramidChannels]; }
    const R* feat(int x, int y) const { return &data[(size_t(y) * width + x) * kPyramidChannels]; }
    size_t positions() const { return size_t(width) * height; }
};

template <typename R>
struct FeaturePyramidT {
    int base_width = 0, base_height = 0;
    std::vector<PyramidLevelT<R>> levels;  // levels[0] is the finest (scale 2)
};

using FeaturePyramid = FeaturePyramidT<float>;

namespace haar_detail {

// One analysis step: 3-channel signal (interleaved) -> 4 subbands at half res.
// Orthonormal normalization: each output is (+-a +-b +-c +-d) / 2.
template <typename R>
void analysis_step(const std::vector<R>& src, int w, int h, PyramidLevelT<R>& out,
                   std::vector<R>& next_ll) {
    const int hw = w / 2, hh = h / 2;
    out.width = hw;
    out.height = hh;
    out.data.assign(size_t(hw) * hh * kPyramidChannels, R(0));
    next_ll.assign(size_t(hw) * hh * 3, R(0));
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) {
            R* f = out.feat(x, y);
            for (int c = 0; c < 3; ++c) {
                const R a = src[(size_t(2 * y) * w + 2 * x) * 3 + c];
                const R b = src[(size_t(2 * y) * w + 2 * x + 1) * 3 + c];
                const R cc = src[(size_t(2 * y + 1) * w + 2 * x) * 3 + c];
                const R d = src[(size_t(2 * y + 1) * w + 2 * x + 1) * 3 + c];
                const R ll = (a + b + cc + d) / 2;
                f[kChanLL + c] = ll;
                f[kChanLH + c] = (a - b + cc - d) / 2;
                f[kChanHL + c] = (a + b - cc - d) / 2;
                f[kChanHH + c] = (a - b - cc + d) / 2;
                next_ll[(size_t(y) * hw + x) * 3 + c] = ll;
            }
        }
}

// One synthesis step: subbands -> 3-channel signal at double resolution.
// Exact inverse (and adjoint) of analysis_step.
template <typename R>
void synthesis_step(const std::vector<R>& ll, const PyramidLevelT<R>& lvl, std::vector<R>& dst, int w,
                    int h) {
    const int hw = lvl.width, hh = lvl.height;
    dst.assign(size_t(w) * h * 3, R(0));
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) {
            const R* f = lvl.feat(x, y);
            for (int c = 0; c < 3; ++c) {
                const R s = ll[(size_t(y) * hw + x) * 3 + c];
                const R dh = f[kChanLH + c], dv = f[kChanHL + c], dd = f[kChanHH + c];
                dst[(size_t(2 * y) * w + 2 * x) * 3 + c] = (s + dh + dv + dd) / 2;
                dst[(size_t(2 * y) * w + 2 * x + 1) * 3 + c] = (s - dh + dv - dd) / 2;
                dst[(size_t(2 * y + 1) * w + 2 * x) * 3 + c] = (s + dh - dv - dd) / 2;
                dst[(size_t(2 * y + 1) * w + 2 * x + 1) * 3 + c] = (s - dh - dv + dd) / 2;
            }
        }
}

template <typename R>
std::vector<R> image_to_buffer(const Image& img) {
    std::vector<R> buf(img.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = R(img.data[i]);
    return buf;
}

}  // namespace haar_detail

template <typename R>
FeaturePyramidT<R> haar_decompose_buffer(const std::vector<R>& pixels, int w, int h, int levels) {
    if (levels < 1) throw StyleError("haar_decompose: need at least one level");
    if (w % (1 << levels) || h % (1 << levels))
        throw StyleError("haar_decompose: dims must be divisible by 2^levels");

    FeaturePyramidT<R> pyr;
    pyr.base_width = w;
    pyr.base_height = h;
    pyr.levels.resize(size_t(levels));
    std::vector<R> cur = pixels, next;
    int cw = w, ch = h;
    for (int l = 0; l < levels; ++l) {
        haar_detail::analysis_step(cur, cw, ch, pyr.levels[l], next);
        const R ds_scale = R(1) / R(1 << (l + 1));
        auto& lvl = pyr.levels[l];
        for (size_t p = 0; p < lvl.positions(); ++p)
            for (int c = 0; c < 3; ++c)
                lvl.data[p * kPyramidChannels + kChanDS + c] =
                    lvl.data[p * kPyramidChannels + kChanLL + c] * ds_scale;
        cur.swap(next);
        cw /= 2;
        ch /= 2;
    }
    return pyr;
}

template <typename R>
std::vector<R> haar_reconstruct_buffer(const FeaturePyramidT<R>& pyr) {
    if (pyr.levels.empty()) throw StyleError("haar_reconstruct: empty pyramid");
    const int L = int(pyr.levels.size());
    // Deepest approximation, then synthesize with each level's details.
    const auto& deep = pyr.levels[L - 1];
    std::vector<R> cur(deep.positions() * 3);
    for (size_t p = 0; p < deep.positions(); ++p)
        for (int c = 0; c < 3; ++c) cur[p * 3 + c] = deep.data[p * kPyramidChannels + kChanLL + c];
    for (int l = L - 1; l >= 0; --l) {
        const int w = pyr.levels[l].width * 2, h = pyr.levels[l].height * 2;
        std::vector<R> up;
        haar_detail::synthesis_step(cur, pyr.levels[l], up, w, h);
        cur.swap(up);
    }
    return cur;
}

// Adjoint of haar_decompose_buffer: pyramid-coefficient gradients (all 15
// channels per level) accumulated back to a pixel gradient. For the
// orthonormal transform the adjoint of each analysis step is its synthesis
// step; the DS channels fold into LL with their 2^-l scale.
template <typename R>
std::vector<R> haar_adjoint_buffer(const FeaturePyramidT<R>& grad_pyr) {
    const int L = int(grad_pyr.levels.size());
    if (L == 0) throw StyleError("haar_adjoint: empty pyramid");
    std::vector<R> gcur;  // gradient w.r.t. the running LL signal
    {
        const auto& deep = grad_pyr.levels[L - 1];
        gcur.assign(deep.positions() * 3, R(0));
    }
    for (int l = L - 1; l >= 0; --l) {
        const auto& lvl = grad_pyr.levels[l];
        const R ds_scale = R(1) / R(1 << (l + 1));
        PyramidLevelT<R> g = lvl;  // copy LH/HL/HH as-is
        std::vector<R> ll(lvl.positions() * 3);
        for (size_t p = 0; p < lvl.positions(); ++p)
            for (int c = 0; c < 3; ++c)
                ll[p * 3 + c] = lvl.data[p * kPyramidChannels + kChanLL + c] +
                                ds_scale * lvl.data[p * kPyramidChannels + kChanDS + c] +
                                gcur[p * 3 + c];
        std::vector<R> out;
        haar_detail::synthesis_step(ll, g, out, lvl.width * 2, lvl.height * 2);
        gcur.swap(out);
    }
    return gcur;
}

inline FeaturePyramid haar_decompose(const Image& img, int levels) {
    if (img.channels != 3) throw StyleError("haar_decompose: expects 3-channel image");
    return haar_decompose_buffer(haar_detail::image_to_buffer<float>(img), img.width, img.height, levels);
}

inline Image haar_reconstruct(const FeaturePyramid& pyr) {
    auto buf = haar_reconstruct_buffer(pyr);
    Image img(pyr.base_width, pyr.base_height, 3);
    img.data.assign(buf.begin(), buf.end());
    return img;
}

}  // namespace snerf
