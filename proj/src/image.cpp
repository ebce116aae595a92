#include "lmde/image.hpp"

#include "lmde/errors.hpp"
#include "lmde/spatial.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>

namespace lmde {

RgbImage resize_bilinear(const RgbImage& img, Index out_h, Index out_w) {
    if (img.empty()) throw ShapeError("resize_bilinear: empty image");
    const auto ty = bilinear_taps(img.height, out_h);
    const auto tx = bilinear_taps(img.width, out_w);
    RgbImage out(out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (Index x = 0; x < out_w; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            for (Index c = 0; c < 3; ++c) {
                const double top = (1 - b.w_hi) * img.at(a.lo, b.lo, c) + b.w_hi * img.at(a.lo, b.hi, c);
                const double bot = (1 - b.w_hi) * img.at(a.hi, b.lo, c) + b.w_hi * img.at(a.hi, b.hi, c);
                out.at(y, x, c) = std::clamp((1 - a.w_hi) * top + a.w_hi * bot, 0.0, 1.0);
            }
        }
    }
    return out;
}

DepthMap resize_nearest(const DepthMap& depth, Index out_h, Index out_w) {
    if (depth.size() == 0) throw ShapeError("resize_nearest: empty depth map");
    if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_nearest: sizes must be positive");
    auto pick = [](Index o, Index in, Index out) {
        const auto s = static_cast<Index>(std::floor((static_cast<double>(o) + 0.5) * static_cast<double>(in) /
                                                     static_cast<double>(out)));
        return std::min(s, in - 1);
    };
    DepthMap out(out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
        const Index sy = pick(y, depth.height, out_h);
        for (Index x = 0; x < out_w; ++x) {
            const auto src = static_cast<std::size_t>(sy * depth.width + pick(x, depth.width, out_w));
            const auto dst = static_cast<std::size_t>(y * out_w + x);
            out.depth[dst] = depth.depth[src];
            out.valid[dst] = depth.valid[src];
        }
    }
    return out;
}

std::vector<double> luminance(const RgbImage& img) {
    std::vector<double> lum(static_cast<std::size_t>(img.height * img.width));
    for (std::size_t i = 0; i < lum.size(); ++i) {
        lum[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    }
    return lum;
}

namespace {

struct RawPng {
    Index height = 0;
    Index width = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<unsigned char> bytes;  // big-endian for 16-bit samples
};

enum class ReadMode { rgb8, gray_raw };

RawPng read_png(const std::filesystem::path& path, ReadMode mode) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open PNG: " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        std::fclose(fp);
        throw IoError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }

    RawPng raw;
    std::vector<png_bytep> rows;
    bool bad_format = false;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (mode == ReadMode::rgb8) {
        if (depth == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    } else {
        bad_format = color != PNG_COLOR_TYPE_GRAY;
        if (!bad_format && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    }
    if (!bad_format) {
        png_read_update_info(png, info);
        raw.width = png_get_image_width(png, info);
        raw.height = png_get_image_height(png, info);
        raw.channels = png_get_channels(png, info);
        raw.bit_depth = png_get_bit_depth(png, info);
        const auto stride = png_get_rowbytes(png, info);
        raw.bytes.resize(stride * static_cast<std::size_t>(raw.height));
        rows.resize(static_cast<std::size_t>(raw.height));
        for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = raw.bytes.data() + y * stride;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    if (bad_format) throw IoError("expected a single-channel PNG: " + path.string());
    return raw;
}

void write_png(const std::filesystem::path& path, Index height, Index width, int color_type, int bit_depth,
               const std::vector<unsigned char>& bytes) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot write PNG: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    const std::size_t stride = bytes.size() / static_cast<std::size_t>(height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (std::size_t y = 0; y < rows.size(); ++y) {
        rows[y] = const_cast<png_bytep>(bytes.data() + y * stride);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed writing PNG: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("failed closing PNG: " + path.string());
}

}  // namespace

RgbImage read_rgb_png(const std::filesystem::path& path) {
    const RawPng raw = read_png(path, ReadMode::rgb8);
    if (raw.channels != 3 || raw.bit_depth != 8) throw IoError("unexpected PNG layout after conversion");
    RgbImage img(raw.height, raw.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = raw.bytes[i] / 255.0;
    return img;
}

Gray16 read_gray16_png(const std::filesystem::path& path) {
    const RawPng raw = read_png(path, ReadMode::gray_raw);
    Gray16 out{raw.height, raw.width, std::vector<std::uint16_t>(static_cast<std::size_t>(raw.height * raw.width))};
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = raw.bit_depth == 16
                            ? static_cast<std::uint16_t>((raw.bytes[2 * i] << 8) | raw.bytes[2 * i + 1])
                            : raw.bytes[i];
    }
    return out;
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    }
    write_png(path, img.height, img.width, PNG_COLOR_TYPE_RGB, 8, bytes);
}

void write_gray8_png(const std::filesystem::path& path, Index height, Index width,
                     const std::vector<std::uint8_t>& values) {
    if (values.size() != static_cast<std::size_t>(height * width) || height <= 0) {
        throw ShapeError("write_gray8_png: value count does not match dimensions");
    }
    write_png(path, height, width, PNG_COLOR_TYPE_GRAY, 8, std::vector<unsigned char>(values.begin(), values.end()));
}

void write_gray16_png(const std::filesystem::path& path, const Gray16& img) {
    if (img.values.size() != static_cast<std::size_t>(img.height * img.width) || img.height <= 0) {
        throw ShapeError("write_gray16_png: value count does not match dimensions");
    }
    std::vector<unsigned char> bytes(2 * img.values.size());
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        bytes[2 * i] = static_cast<unsigned char>(img.values[i] >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(img.values[i] & 0xff);
    }
    write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

}  // namespace lmde
