// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <filesystem>
#include <vector>

#include "bannergen/common.hpp"

namespace bannergen::io {

namespace detail {

inline void write_png(const std::filesystem::path& path, int h, int w, png_uint_32 format,
                      const std::vector<png_byte>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = format;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw RuntimeFailure(concat("cannot write png ", path.string(), ": ", img.message));
}

inline std::vector<png_byte> read_png(const std::filesystem::path& path, png_uint_32 format, int& h, int& w) {
    if (!std::filesystem::exists(path)) throw FileNotFound(path);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw SchemaViolation(path.filename().string(), concat("unreadable png: ", img.message));
    img.format = format;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&img);
        throw SchemaViolation(path.filename().string(), concat("corrupt png: ", img.message));
    }
    h = static_cast<int>(img.height);
    w = static_cast<int>(img.width);
    return bytes;
}

inline png_byte to_byte(float v) { return static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace detail

inline void write_rgb(const Image& image, const std::filesystem::path& path) {
    std::vector<png_byte> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte(image.data[i]);
    detail::write_png(path, image.height, image.width, PNG_FORMAT_RGB, bytes);
}

inline Image read_rgb(const std::filesystem::path& path) {
    int h = 0, w = 0;
    auto bytes = detail::read_png(path, PNG_FORMAT_RGB, h, w);
    Image out(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] / 255.0f;
    return out;
}

inline void write_gray(const Map2D& map, const std::filesystem::path& path) {
    std::vector<png_byte> bytes(map.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte(map.values[i]);
    detail::write_png(path, map.height, map.width, PNG_FORMAT_GRAY, bytes);
}

inline Map2D read_gray(const std::filesystem::path& path) {
    int h = 0, w = 0;
    auto bytes = detail::read_png(path, PNG_FORMAT_GRAY, h, w);
    Map2D out(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) out.values[i] = bytes[i] / 255.0f;
    return out;
}

}  // namespace bannergen::io
