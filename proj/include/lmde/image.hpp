#pragma once

#include "lmde/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lmde {

/// Interleaved RGB image with values in [0, 1]; sample (y, x, c) lives at
/// (y*width + x)*3 + c.
struct RgbImage {
    Index height = 0;
    Index width = 0;
    std::vector<double> data;

    RgbImage() = default;
    RgbImage(Index h, Index w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h * w * 3), fill) {}

    double& at(Index y, Index x, Index c) { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    double at(Index y, Index x, Index c) const { return data[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    bool empty() const { return data.empty(); }
    bool operator==(const RgbImage&) const = default;
};

/// Metric depth in meters plus a per-pixel validity flag.
struct DepthMap {
    Index height = 0;
    Index width = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;

    DepthMap() = default;
    DepthMap(Index h, Index w, double fill = 0.0, bool is_valid = true)
        : height(h),
          width(w),
          depth(static_cast<std::size_t>(h * w), fill),
          valid(static_cast<std::size_t>(h * w), is_valid ? 1 : 0) {}

    std::size_t size() const { return depth.size(); }
    double& at(Index y, Index x) { return depth[static_cast<std::size_t>(y * width + x)]; }
    double at(Index y, Index x) const { return depth[static_cast<std::size_t>(y * width + x)]; }
    bool operator==(const DepthMap&) const = default;
};

RgbImage resize_bilinear(const RgbImage& img, Index out_h, Index out_w);
DepthMap resize_nearest(const DepthMap& depth, Index out_h, Index out_w);

/// Luminance 0.299 R + 0.587 G + 0.114 B per pixel, row-major.
std::vector<double> luminance(const RgbImage& img);

// PNG I/O (libpng). Failures raise IoError.

/// Any 8/16-bit PNG converted to RGB and scaled to [0, 1].
RgbImage read_rgb_png(const std::filesystem::path& path);

struct Gray16 {
    Index height = 0;
    Index width = 0;
    std::vector<std::uint16_t> values;
};

/// Single-channel PNG read as raw integer samples (8-bit files are widened,
/// not rescaled).
Gray16 read_gray16_png(const std::filesystem::path& path);

/// Values are quantized as round(255 * v) after clamping to [0, 1].
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);
void write_gray8_png(const std::filesystem::path& path, Index height, Index width,
                     const std::vector<std::uint8_t>& values);
void write_gray16_png(const std::filesystem::path& path, const Gray16& img);

}  // namespace lmde
