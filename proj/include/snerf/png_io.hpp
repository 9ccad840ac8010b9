#pragma once

// Minimal PNG reader/writer on top of zlib. Writes 8-bit RGB (or gray),
// non-interlaced. Reads 8-bit gray/RGB/RGBA with any scanline filter.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "snerf/image.hpp"

namespace snerf {

namespace detail {

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

inline uint32_t get_u32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void append_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& payload) {
    put_u32(out, uint32_t(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0, out.data() + start, uInt(out.size() - start));
    put_u32(out, crc);
}

inline uint8_t paeth(int a, int b, int c) {
    int p = a + b - c, pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return uint8_t(a);
    if (pb <= pc) return uint8_t(b);
    return uint8_t(c);
}

}  // namespace detail

inline void write_png(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0) throw ImageError("write_png: empty image");
    if (img.channels != 1 && img.channels != 3) throw ImageError("write_png: unsupported channel count");

    const int ch = img.channels;
    std::vector<uint8_t> raw;
    raw.reserve(size_t(img.height) * (1 + size_t(img.width) * ch));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < ch; ++c) {
                float v = clamp01(img.at(x, y, c));
                raw.push_back(uint8_t(std::lround(v * 255.f)));
            }
    }

    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw ImageError("write_png: deflate failed");
    compressed.resize(bound);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    detail::put_u32(ihdr, uint32_t(img.width));
    detail::put_u32(ihdr, uint32_t(img.height));
    ihdr.push_back(8);                       // bit depth
    ihdr.push_back(ch == 3 ? 2 : 0);         // color type
    ihdr.push_back(0);                       // compression
    ihdr.push_back(0);                       // filter method
    ihdr.push_back(0);                       // no interlace
    detail::append_chunk(out, "IHDR", ihdr);
    detail::append_chunk(out, "IDAT", compressed);
    detail::append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ImageError("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw ImageError("write_png: write failed for " + path);
}

inline Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ImageError("read_png: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw ImageError("read_png: not a PNG file: " + path);

    uint32_t w = 0, h = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        uint32_t len = detail::get_u32(&buf[pos]);
        if (pos + 12 + len > buf.size()) throw ImageError("read_png: truncated chunk in " + path);
        std::string type(reinterpret_cast<const char*>(&buf[pos + 4]), 4);
        const uint8_t* payload = &buf[pos + 8];
        if (type == "IHDR") {
            w = detail::get_u32(payload);
            h = detail::get_u32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0) throw ImageError("read_png: missing IHDR in " + path);
    if (bit_depth != 8 || interlace != 0)
        throw ImageError("read_png: only 8-bit non-interlaced PNGs supported: " + path);
    int src_ch;
    switch (color_type) {
        case 0: src_ch = 1; break;
        case 2: src_ch = 3; break;
        case 6: src_ch = 4; break;
        default: throw ImageError("read_png: unsupported color type in " + path);
    }

    const size_t stride = size_t(w) * src_ch;
    std::vector<uint8_t> raw(h * (stride + 1));
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK || raw_len != raw.size())
        throw ImageError("read_png: inflate failed for " + path);

    // Undo per-scanline filters in place.
    std::vector<uint8_t> prev(stride, 0), line(stride);
    Image img(int(w), int(h), src_ch == 1 ? 1 : 3);
    for (uint32_t y = 0; y < h; ++y) {
        const uint8_t* src = &raw[y * (stride + 1)];
        int filter = src[0];
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= size_t(src_ch) ? line[i - src_ch] : 0;
            int b = prev[i];
            int c = i >= size_t(src_ch) ? prev[i - src_ch] : 0;
            int x = src[1 + i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += detail::paeth(a, b, c); break;
                default: throw ImageError("read_png: bad filter byte in " + path);
            }
            line[i] = uint8_t(x);
        }
        for (uint32_t x = 0; x < w; ++x)
            for (int ci = 0; ci < img.channels; ++ci)
                img.at(int(x), int(y), ci) = line[x * src_ch + std::min(ci, src_ch - 1)] / 255.f;
        prev = line;
    }
    return img;
}

}  // namespace snerf
