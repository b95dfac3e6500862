// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bannergen {

// Error taxonomy. Every failure the library reports is one of these so the CLI
// can map them onto exit codes (validation errors -> 1, runtime failures -> 2).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidArgument : ValidationError {
    using ValidationError::ValidationError;
};

struct SchemaViolation : ValidationError {
    SchemaViolation(const std::string& field, const std::string& what)
        : ValidationError("schema violation at '" + field + "': " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct TokenizerError : ValidationError {
    explicit TokenizerError(const std::string& token)
        : ValidationError("unknown token '" + token + "'"), token_(token) {}
    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

struct DecodeError : ValidationError {
    DecodeError(std::size_t index, const std::string& what)
        : ValidationError("layout decode error at index " + std::to_string(index) + ": " + what),
          index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

struct RuntimeFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PlacementFailure : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

struct InfeasibleStyleSpace : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

struct DivergenceError : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

struct FileNotFound : RuntimeFailure {
    explicit FileNotFound(const std::filesystem::path& p)
        : RuntimeFailure("file not found: " + p.string()) {}
};

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream oss;
    (oss << ... << std::forward<Args>(args));
    return oss.str();
}

// splitmix64 finalizer; used to derive independent per-item seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

// FNV-1a, 64 bit. Stable across platforms, used for manifest checksums.
struct Fnv1a {
    std::uint64_t state = 0xcbf29ce484222325ULL;

    void update(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) noexcept { update(s.data(), s.size()); }
    std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out(16, '0');
        for (int i = 0; i < 16; ++i) out[15 - i] = digits[(state >> (4 * i)) & 0xf];
        return out;
    }
};

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Single-channel spatial map, row-major. Saliency maps and region masks.
struct Map2D {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    Map2D() = default;
    Map2D(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }

    double sum() const {
        double s = 0.0;
        for (float v : values) s += v;
        return s;
    }
    double mean() const { return values.empty() ? 0.0 : sum() / static_cast<double>(values.size()); }

    bool in_unit_range() const {
        for (float v : values)
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f) return false;
        return true;
    }

    friend bool operator==(const Map2D&, const Map2D&) = default;
};

using SaliencyMap = Map2D;

// Region mask with its resolution carried by the map itself.
struct RegionMask {
    Map2D map;

    static RegionMask zeros(int h, int w) { return {Map2D(h, w, 0.0f)}; }
    static RegionMask ones(int h, int w) { return {Map2D(h, w, 1.0f)}; }
    int height() const { return map.height; }
    int width() const { return map.width; }
    double coverage() const { return map.mean(); }
};

// RGB raster, interleaved HWC, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

inline float quantize8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return std::round(c * 255.0f) / 255.0f;
}

}  // namespace bannergen
