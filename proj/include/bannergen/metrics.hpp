// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bannergen/common.hpp"
#include "bannergen/elements.hpp"
#include "bannergen/maps.hpp"

namespace bannergen::metrics {

// Fraction of the canvas covered by saliency mass, in [0,1].
inline double salient_ratio(const SaliencyMap& map) {
    if (map.size() == 0) return 0.0;
    return map.sum() / static_cast<double>(map.size());
}

namespace detail {

inline std::array<double, 3> x_anchors(const LayoutElement& e) { return {e.left, e.left + e.width / 2, e.right()}; }
inline std::array<double, 3> y_anchors(const LayoutElement& e) { return {e.top, e.top + e.height / 2, e.bottom()}; }

inline double box_iou(const LayoutElement& a, const LayoutElement& b) {
    const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left, b.left));
    const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace detail

/// Mean over elements of the smallest like-for-like anchor gap to any other element,
/// times 100. Anchors are left/center/right on x and top/center/bottom on y.
/// Layouts with fewer than two elements score 0.
inline double alignment(const Layout& layout) {
    const std::size_t n = layout.size();
    if (n < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        const auto xi = detail::x_anchors(layout[i]);
        const auto yi = detail::y_anchors(layout[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto xj = detail::x_anchors(layout[j]);
            const auto yj = detail::y_anchors(layout[j]);
            for (int k = 0; k < 3; ++k) {
                best = std::min(best, std::abs(xi[k] - xj[k]));
                best = std::min(best, std::abs(yi[k] - yj[k]));
            }
        }
        total += best;
    }
    return total / static_cast<double>(n) * 100.0;
}

// Mean pairwise IoU times 100; fewer than two elements -> 0.
inline double overlap(const Layout& layout) {
    const std::size_t n = layout.size();
    if (n < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++pairs) total += detail::box_iou(layout[i], layout[j]);
    return total / static_cast<double>(pairs) * 100.0;
}

// Saliency mass under one box, with fractional pixel coverage at box edges.
inline double mass_in_box(const LayoutElement& e, const SaliencyMap& map) {
    const double x0 = e.left * map.width, x1 = e.right() * map.width;
    const double y0 = e.top * map.height, y1 = e.bottom() * map.height;
    double mass = 0.0;
    const int ys = std::max(0, static_cast<int>(std::floor(y0)));
    const int ye = std::min(map.height - 1, static_cast<int>(std::ceil(y1)) - 1);
    const int xs = std::max(0, static_cast<int>(std::floor(x0)));
    const int xe = std::min(map.width - 1, static_cast<int>(std::ceil(x1)) - 1);
    for (int y = ys; y <= ye; ++y) {
        const double fy = std::min(y1, y + 1.0) - std::max(y0, static_cast<double>(y));
        if (fy <= 0.0) continue;
        for (int x = xs; x <= xe; ++x) {
            const double fx = std::min(x1, x + 1.0) - std::max(x0, static_cast<double>(x));
            if (fx > 0.0) mass += fy * fx * map.at(y, x);
        }
    }
    return mass;
}

/// Saliency mass under the element boxes normalized by the total box area, times 100.
/// Overlapping boxes count their shared region once per box. With `binarized` the
/// map is thresholded at 0.5 first.
inline double occlusion(const Layout& layout, const SaliencyMap& map, bool binarized = false) {
    if (layout.empty() || map.size() == 0) return 0.0;
    const SaliencyMap& src = map;
    SaliencyMap bin;
    if (binarized) bin = binarize(map);
    const SaliencyMap& m = binarized ? bin : src;
    double mass = 0.0, area = 0.0;
    for (const auto& e : layout) {
        mass += mass_in_box(e, m);
        area += e.area() * m.width * m.height;
    }
    return area > 0.0 ? mass / area * 100.0 : 0.0;
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw InvalidArgument("cosine similarity of vectors with different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman needs two equal-length series (n>=2)");
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Fixed-width histogram over [lo, hi]; values outside are clamped to the end bins.
inline std::vector<std::size_t> histogram(std::span<const double> v, double lo, double hi, int bins) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
        int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
        counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
    }
    return counts;
}

// Probability that a draw from `lower` is smaller than a draw from `higher` (ties count 1/2).
inline double auc(std::span<const double> lower, std::span<const double> higher) {
    if (lower.empty() || higher.empty()) return 0.5;
    double wins = 0.0;
    for (double a : lower)
        for (double b : higher) wins += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    return wins / (static_cast<double>(lower.size()) * static_cast<double>(higher.size()));
}

// One named figure-shaped series carried in a report (curve, histogram or table).
struct Series {
    std::string name;
    std::string kind;  // "curve" | "histogram" | "table"
    std::vector<double> x;
    std::vector<double> y;
    std::string x_label;
    std::string y_label;
};

struct MetricReport {
    static constexpr int kSchemaVersion = 1;

    std::map<std::string, std::string> meta;
    std::map<std::string, std::vector<double>> samples;
    std::vector<Series> series;

    void add(const std::string& metric, double value) { samples[metric].push_back(value); }

    double mean_of(const std::string& metric) const {
        auto it = samples.find(metric);
        return it == samples.end() ? 0.0 : mean(it->second);
    }
    double median_of(const std::string& metric) const {
        auto it = samples.find(metric);
        return it == samples.end() ? 0.0 : median(it->second);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = kSchemaVersion;
        j["meta"] = meta;
        nlohmann::json m = nlohmann::json::object();
        for (const auto& [name, vals] : samples) {
            m[name] = {{"per_sample", vals}, {"mean", mean(vals)}, {"median", median(vals)}, {"count", vals.size()}};
        }
        j["metrics"] = m;
        nlohmann::json s = nlohmann::json::array();
        for (const auto& ser : series)
            s.push_back({{"name", ser.name},
                         {"kind", ser.kind},
                         {"x", ser.x},
                         {"y", ser.y},
                         {"x_label", ser.x_label},
                         {"y_label", ser.y_label}});
        j["series"] = s;
        return j;
    }

    static MetricReport from_json(const nlohmann::json& j) {
        MetricReport r;
        if (!j.contains("schema_version")) throw SchemaViolation("schema_version", "missing");
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            throw SchemaViolation("schema_version", "unsupported report version");
        r.meta = j.value("meta", std::map<std::string, std::string>{});
        if (j.contains("metrics"))
            for (const auto& [name, body] : j.at("metrics").items())
                r.samples[name] = body.at("per_sample").get<std::vector<double>>();
        if (j.contains("series"))
            for (const auto& s : j.at("series"))
                r.series.push_back({s.at("name"), s.at("kind"), s.at("x").get<std::vector<double>>(),
                                    s.at("y").get<std::vector<double>>(), s.value("x_label", ""),
                                    s.value("y_label", "")});
        return r;
    }
};

}  // namespace bannergen::metrics
