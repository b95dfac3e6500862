// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>

#include "bannergen/common.hpp"

namespace bannergen {

enum class ResizeMode {
    area,      // exact area-weighted average; mean preserving
    bilinear,  // half-pixel centers, edge clamped
    automatic  // area when shrinking, bilinear when growing
};

namespace detail {

// Overlap-weighted contributions of source cells to one destination cell along
// one axis. Destination cell i covers [i*s, (i+1)*s) in source coordinates.
inline void area_weights(int src, int dst, int i, std::vector<std::pair<int, double>>& out) {
    out.clear();
    const double scale = static_cast<double>(src) / dst;
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int k = first; k <= last; ++k) {
        const double w = std::min(hi, k + 1.0) - std::max(lo, static_cast<double>(k));
        if (w > 0.0) out.emplace_back(k, w / scale);
    }
}

}  // namespace detail

inline Map2D resize_area(const Map2D& in, int h, int w) {
    Map2D out(h, w);
    std::vector<std::pair<int, double>> wy, wx;
    for (int y = 0; y < h; ++y) {
        detail::area_weights(in.height, h, y, wy);
        for (int x = 0; x < w; ++x) {
            detail::area_weights(in.width, w, x, wx);
            double acc = 0.0;
            for (auto [sy, fy] : wy)
                for (auto [sx, fx] : wx) acc += fy * fx * in.at(sy, sx);
            out.at(y, x) = static_cast<float>(acc);
        }
    }
    return out;
}

inline Map2D resize_bilinear(const Map2D& in, int h, int w) {
    Map2D out(h, w);
    const double sy = static_cast<double>(in.height) / h;
    const double sx = static_cast<double>(in.width) / w;
    for (int y = 0; y < h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in.height - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in.width - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double tx = fx - x0;
            const double top = (1 - tx) * in.at(y0, x0) + tx * in.at(y0, x1);
            const double bot = (1 - tx) * in.at(y1, x0) + tx * in.at(y1, x1);
            out.at(y, x) = static_cast<float>((1 - ty) * top + ty * bot);
        }
    }
    return out;
}

/// Resamples a map to (h, w). Values stay inside [0,1] for inputs inside [0,1];
/// area mode preserves the mean up to floating point rounding.
inline Map2D resize_map(const Map2D& in, int h, int w, ResizeMode mode = ResizeMode::automatic) {
    if (h < 1 || w < 1) throw InvalidArgument(concat("resize target must be >= 1x1, got ", h, "x", w));
    if (in.height < 1 || in.width < 1) throw InvalidArgument("resize source map is empty");
    if (h == in.height && w == in.width) return in;
    if (mode == ResizeMode::automatic)
        mode = (h <= in.height && w <= in.width) ? ResizeMode::area : ResizeMode::bilinear;
    Map2D out = mode == ResizeMode::area ? resize_area(in, h, w) : resize_bilinear(in, h, w);
    for (float& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

inline RegionMask resize_mask(const RegionMask& m, int h, int w, ResizeMode mode = ResizeMode::area) {
    return {resize_map(m.map, h, w, mode)};
}

inline Map2D binarize(const Map2D& in, float threshold = 0.5f) {
    Map2D out(in.height, in.width);
    for (std::size_t i = 0; i < in.size(); ++i) out.values[i] = in.values[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

// Intersection over union of two maps after thresholding. Both empty -> 1.
inline double binary_iou(const Map2D& a, const Map2D& b, float threshold = 0.5f) {
    if (a.height != b.height || a.width != b.width) throw InvalidArgument("IoU of maps with different shapes");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.values[i] >= threshold;
        const bool pb = b.values[i] >= threshold;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Luminance-free resize of an RGB image, channel by channel.
inline Image resize_image(const Image& in, int h, int w, ResizeMode mode = ResizeMode::bilinear) {
    if (h == in.height && w == in.width) return in;
    Image out(h, w);
    for (int c = 0; c < 3; ++c) {
        Map2D ch(in.height, in.width);
        for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x) ch.at(y, x) = in.at(y, x, c);
        const Map2D r = resize_map(ch, h, w, mode);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(y, x, c) = r.at(y, x);
    }
    return out;
}

}  // namespace bannergen
