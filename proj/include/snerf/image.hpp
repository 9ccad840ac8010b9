#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "snerf/common.hpp"

namespace snerf {

struct ImageError : std::runtime_error {
    explicit ImageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Interleaved float image with values in [0,1]. Channel count is 1 or 3.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c = 3) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.f) {}

    float& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return data[(size_t(y) * width + x) * channels + c]; }

    size_t pixel_count() const { return size_t(width) * height; }
    bool same_dims(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    void fill(float r, float g, float b) {
        for (size_t p = 0; p < pixel_count(); ++p)
            for (int c = 0; c < channels; ++c) data[p * channels + c] = (c == 0 ? r : c == 1 ? g : b);
    }

    void clamp_unit() {
        for (auto& v : data) v = clamp01(v);
    }
};

inline Image to_luminance(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        const float* px = &img.data[p * 3];
        out.data[p] = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
    }
    return out;
}

// Bilinear sample with edge clamping; (x,y) in pixel-center coordinates.
inline void sample_bilinear(const Image& img, float x, float y, float* out) {
    float fx = x - 0.5f, fy = y - 0.5f;
    int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
    float ax = fx - x0, ay = fy - y0;
    int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    x0 = std::clamp(x0, 0, img.width - 1);
    y0 = std::clamp(y0, 0, img.height - 1);
    x1 = std::clamp(x1, 0, img.width - 1);
    y1 = std::clamp(y1, 0, img.height - 1);
    for (int c = 0; c < img.channels; ++c) {
        float v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
        float v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
        out[c] = (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
    }
}

inline Image resize_bilinear(const Image& img, int w, int h) {
    Image out(w, h, img.channels);
    const float sx = float(img.width) / w, sy = float(img.height) / h;
    std::vector<float> px(img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            sample_bilinear(img, (x + 0.5f) * sx, (y + 0.5f) * sy, px.data());
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = px[c];
        }
    return out;
}

inline Image center_crop(const Image& img, int w, int h) {
    if (w > img.width || h > img.height) throw ImageError("center_crop: target larger than source");
    Image out(w, h, img.channels);
    int ox = (img.width - w) / 2, oy = (img.height - h) / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x + ox, y + oy, c);
    return out;
}

// Crop to the target aspect ratio, then resize. Used to bring a style image
// onto the content image grid without distorting it.
inline Image fit_to_dims(const Image& img, int w, int h) {
    if (img.width == w && img.height == h) return img;
    double want = double(w) / h, have = double(img.width) / img.height;
    int cw = img.width, ch = img.height;
    if (have > want)
        cw = std::max(1, int(std::lround(img.height * want)));
    else
        ch = std::max(1, int(std::lround(img.width / want)));
    return resize_bilinear(center_crop(img, cw, ch), w, h);
}

// 2x box downsample (dims must be even).
inline Image downsample2(const Image& img) {
    if (img.width % 2 || img.height % 2) throw ImageError("downsample2: odd dims");
    Image out(img.width / 2, img.height / 2, img.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = 0.25f * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                           img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    if (!a.same_dims(b)) throw ImageError("max_abs_diff: dim mismatch");
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, double(std::fabs(a.data[i] - b.data[i])));
    return m;
}

}  // namespace snerf
