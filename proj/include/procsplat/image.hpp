#pragma once

#include "procsplat/math.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace procsplat {

/// Row-major RGB image with double channels, nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // (y * width + x) * 3 + c

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    Vec3 rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
    std::size_t size() const { return pixels.size(); }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// 8-bit RGB PNG encoding; channels are clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Quantizes to 8 bits and back, the exact round trip a PNG file performs.
Image quantize8(const Image& img);

}  // namespace procsplat
