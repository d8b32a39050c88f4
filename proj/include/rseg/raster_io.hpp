// Copyright 2026 The rseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Raster file formats: ".rgl" region labels, 16-bit grayscale PNG labels,
// and 8-bit RGB images (PNG or binary PPM).
//
// .rgl layout (little-endian):
//   "RGL1"  u32 height  u32 width  height·width × u32 label
//   u16 provenance_len  provenance[provenance_len] (UTF-8)

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "rseg/checkpoint.hpp"
#include "rseg/error.hpp"
#include "rseg/regions.hpp"
#include "rseg/tensor.hpp"

namespace rseg::io {

inline constexpr std::string_view kRegionMagic = "RGL1";

inline std::vector<std::uint8_t> encode_rgl(const RegionLabelImage &img) {
    if (img.provenance.size() > 0xFFFF) {
        throw FormatError("rgl: provenance string longer than 65535 bytes");
    }
    ByteWriter w;
    w.str(kRegionMagic);
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.width));
    for (std::uint32_t v : img.labels) {
        w.u32(v);
    }
    w.u16(static_cast<std::uint16_t>(img.provenance.size()));
    w.str(img.provenance);
    return w.take();
}

inline RegionLabelImage decode_rgl(std::span<const std::uint8_t> bytes, const std::string &what = "rgl") {
    ByteReader r(bytes, what);
    if (r.str(kRegionMagic.size()) != kRegionMagic) {
        throw FormatError(what + ": bad magic, expected RGL1");
    }
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    if (h == 0 || w == 0) {
        throw FormatError(what + ": zero-sized raster");
    }
    r.need(static_cast<std::size_t>(h) * w * 4);
    RegionLabelImage img(h, w);
    for (auto &v : img.labels) {
        v = r.u32();
    }
    img.provenance = r.str(r.u16());
    if (r.remaining() != 0) {
        throw FormatError(what + ": trailing bytes after provenance");
    }
    return img;
}

inline void save_rgl(const RegionLabelImage &img, const std::filesystem::path &path) {
    write_file(path, encode_rgl(img));
}

inline RegionLabelImage load_rgl(const std::filesystem::path &path) {
    return decode_rgl(read_file(path), path.string());
}

namespace detail {

inline std::string lower_ext(const std::filesystem::path &path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct PngImage {
    png_image image{};
    PngImage() {
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&image); }
    PngImage(const PngImage &) = delete;
    PngImage &operator=(const PngImage &) = delete;
};

} // namespace detail

/// Writes labels as a 16-bit grayscale PNG. Labels above 65535 are rejected.
inline void save_label_png(const RegionLabelImage &img, const std::filesystem::path &path) {
    std::vector<png_uint_16> px(img.labels.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (img.labels[i] > 0xFFFF) {
            throw FormatError("label " + std::to_string(img.labels[i]) + " does not fit a 16-bit PNG");
        }
        px[i] = static_cast<png_uint_16>(img.labels[i]);
    }
    detail::PngImage png;
    png.image.width = static_cast<png_uint_32>(img.width);
    png.image.height = static_cast<png_uint_32>(img.height);
    png.image.format = PNG_FORMAT_LINEAR_Y;
    if (!png_image_write_to_file(&png.image, path.c_str(), 0, px.data(), 0, nullptr)) {
        throw FormatError("cannot write PNG '" + path.string() + "': " + png.image.message);
    }
}

/// Reads a grayscale PNG; with 16-bit files each pixel value is the label.
inline RegionLabelImage load_label_png(const std::filesystem::path &path) {
    detail::PngImage png;
    if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
        throw FormatError("cannot read PNG '" + path.string() + "': " + png.image.message);
    }
    const bool sixteen = (png.image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    RegionLabelImage img(png.image.height, png.image.width);
    if (sixteen) {
        png.image.format = PNG_FORMAT_LINEAR_Y;
        std::vector<png_uint_16> px(PNG_IMAGE_SIZE(png.image) / 2);
        if (!png_image_finish_read(&png.image, nullptr, px.data(), 0, nullptr)) {
            throw FormatError("cannot decode PNG '" + path.string() + "': " + png.image.message);
        }
        std::copy(px.begin(), px.end(), img.labels.begin());
    } else {
        png.image.format = PNG_FORMAT_GRAY;
        std::vector<png_byte> px(PNG_IMAGE_SIZE(png.image));
        if (!png_image_finish_read(&png.image, nullptr, px.data(), 0, nullptr)) {
            throw FormatError("cannot decode PNG '" + path.string() + "': " + png.image.message);
        }
        std::copy(px.begin(), px.end(), img.labels.begin());
    }
    return img;
}

/// Loads a label raster from ".rgl" or ".png" by extension.
inline RegionLabelImage load_labels(const std::filesystem::path &path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".rgl") {
        return load_rgl(path);
    }
    if (ext == ".png") {
        return load_label_png(path);
    }
    throw FormatError("unsupported label raster '" + path.string() + "' (expected .rgl or .png)");
}

inline void save_labels(const RegionLabelImage &img, const std::filesystem::path &path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".rgl") {
        save_rgl(img, path);
    } else if (ext == ".png") {
        save_label_png(img, path);
    } else {
        throw FormatError("unsupported label raster '" + path.string() + "' (expected .rgl or .png)");
    }
}

/// RGB image as an H×W×3 tensor with values in [0, 1].
inline Tensor rgb_from_bytes(std::size_t h, std::size_t w, std::span<const std::uint8_t> px) {
    Tensor t({h, w, 3});
    for (std::size_t i = 0; i < px.size(); ++i) {
        t[i] = static_cast<float>(px[i]) / 255.0f;
    }
    return t;
}

inline std::vector<std::uint8_t> rgb_to_bytes(const Tensor &img) {
    expect_rank(img, 3, "rgb image");
    std::vector<std::uint8_t> px(img.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f));
    }
    return px;
}

inline Tensor load_ppm(const std::filesystem::path &path) {
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };
    if (token() != "P6") {
        throw FormatError(path.string() + ": only binary PPM (P6) is supported");
    }
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception &) {
        throw FormatError(path.string() + ": malformed PPM header");
    }
    if (maxval != 255 || w == 0 || h == 0) {
        throw FormatError(path.string() + ": PPM must be 8-bit and non-empty");
    }
    ++pos;
    if (bytes.size() < pos + w * h * 3) {
        throw FormatError(path.string() + ": truncated PPM data");
    }
    return rgb_from_bytes(h, w, std::span<const std::uint8_t>(bytes).subspan(pos, w * h * 3));
}

inline void save_ppm(const Tensor &img, const std::filesystem::path &path) {
    const auto px = rgb_to_bytes(img);
    ByteWriter w;
    w.str("P6\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n");
    w.bytes(px.data(), px.size());
    write_file(path, w.buffer());
}

inline Tensor load_png_rgb(const std::filesystem::path &path) {
    detail::PngImage png;
    if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
        throw FormatError("cannot read PNG '" + path.string() + "': " + png.image.message);
    }
    png.image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> px(PNG_IMAGE_SIZE(png.image));
    if (!png_image_finish_read(&png.image, nullptr, px.data(), 0, nullptr)) {
        throw FormatError("cannot decode PNG '" + path.string() + "': " + png.image.message);
    }
    return rgb_from_bytes(png.image.height, png.image.width, px);
}

inline void save_png_rgb(const Tensor &img, const std::filesystem::path &path) {
    const auto px = rgb_to_bytes(img);
    detail::PngImage png;
    png.image.width = static_cast<png_uint_32>(img.dim(1));
    png.image.height = static_cast<png_uint_32>(img.dim(0));
    png.image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png.image, path.c_str(), 0, px.data(), 0, nullptr)) {
        throw FormatError("cannot write PNG '" + path.string() + "': " + png.image.message);
    }
}

/// Loads an RGB image from ".png" or ".ppm" by extension.
inline Tensor load_image(const std::filesystem::path &path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".png") {
        return load_png_rgb(path);
    }
    if (ext == ".ppm") {
        return load_ppm(path);
    }
    throw FormatError("unsupported image '" + path.string() + "' (expected .png or .ppm)");
}

inline void save_image(const Tensor &img, const std::filesystem::path &path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == ".png") {
        save_png_rgb(img, path);
    } else if (ext == ".ppm") {
        save_ppm(img, path);
    } else {
        throw FormatError("unsupported image '" + path.string() + "' (expected .png or .ppm)");
    }
}

} // namespace rseg::io
