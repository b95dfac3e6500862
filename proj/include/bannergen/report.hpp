// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bannergen/metrics.hpp"

namespace bannergen::report {

namespace detail {

inline std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

inline std::string escape(const std::string& in) {
    std::string out;
    for (char c : in) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    static constexpr double W = 480, H = 320, L = 60, R = 20, T = 30, B = 50;
    double px(double x) const { return L + (x1 == x0 ? 0.5 : (x - x0) / (x1 - x0)) * (W - L - R); }
    double py(double y) const { return H - B - (y1 == y0 ? 0.5 : (y - y0) / (y1 - y0)) * (H - T - B); }
};

inline void axes(std::ostringstream& s, const Frame& f, const metrics::Series& ser) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::W << "\" height=\"" << Frame::H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << Frame::W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(ser.name) << "</text>\n";
    s << "<line x1=\"" << Frame::L << "\" y1=\"" << Frame::H - Frame::B << "\" x2=\"" << Frame::W - Frame::R << "\" y2=\"" << Frame::H - Frame::B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << Frame::L << "\" y1=\"" << Frame::T << "\" x2=\"" << Frame::L << "\" y2=\"" << Frame::H - Frame::B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        s << "<text x=\"" << f.px(xv) << "\" y=\"" << Frame::H - Frame::B + 15 << "\" text-anchor=\"middle\">" << fmt(xv, 2) << "</text>\n";
        s << "<text x=\"" << Frame::L - 5 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv, 2) << "</text>\n";
    }
    s << "<text x=\"" << Frame::W / 2 << "\" y=\"" << Frame::H - 10 << "\" text-anchor=\"middle\">" << escape(ser.x_label) << "</text>\n";
    s << "<text x=\"14\" y=\"" << Frame::H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << Frame::H / 2 << ")\">"
      << escape(ser.y_label) << "</text>\n";
}

inline std::pair<double, double> range(const std::vector<double>& v, bool include_zero) {
    double lo = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
    double hi = v.empty() ? 1.0 : *std::max_element(v.begin(), v.end());
    if (include_zero) lo = std::min(lo, 0.0);
    if (hi == lo) hi = lo + 1.0;
    return {lo, hi};
}

}  // namespace detail

/// Line plot with one marker per point.
inline std::string curve_svg(const metrics::Series& ser) {
    auto [x0, x1] = detail::range(ser.x, false);
    auto [y0, y1] = detail::range(ser.y, true);
    detail::Frame f{x0, x1, y0, y1 * 1.05};
    std::ostringstream s;
    detail::axes(s, f, ser);
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < ser.x.size(); ++i) s << f.px(ser.x[i]) << "," << f.py(ser.y[i]) << " ";
    s << "\"/>\n";
    for (std::size_t i = 0; i < ser.x.size(); ++i)
        s << "<circle class=\"point\" cx=\"" << f.px(ser.x[i]) << "\" cy=\"" << f.py(ser.y[i]) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    s << "</svg>\n";
    return s.str();
}

/// Bars; x holds left bin edges (one extra right edge allowed), y the counts.
inline std::string histogram_svg(const metrics::Series& ser) {
    std::vector<double> edges = ser.x;
    if (edges.size() == ser.y.size() && !edges.empty())
        edges.push_back(edges.back() + (edges.size() > 1 ? edges[1] - edges[0] : 1.0));
    auto [x0, x1] = detail::range(edges, false);
    auto [y0, y1] = detail::range(ser.y, true);
    detail::Frame f{x0, x1, y0, y1 * 1.05};
    std::ostringstream s;
    detail::axes(s, f, ser);
    for (std::size_t i = 0; i < ser.y.size(); ++i) {
        const double left = f.px(edges[i]), right = f.px(edges[i + 1]);
        s << "<rect class=\"bar\" x=\"" << left << "\" y=\"" << f.py(ser.y[i]) << "\" width=\"" << std::max(0.0, right - left - 1)
          << "\" height=\"" << f.py(0) - f.py(ser.y[i]) << "\" fill=\"#ff7f0e\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline std::string table_markdown(const metrics::Series& ser) {
    std::ostringstream s;
    s << "| " << (ser.x_label.empty() ? "x" : ser.x_label) << " | " << (ser.y_label.empty() ? "y" : ser.y_label) << " |\n|---|---|\n";
    for (std::size_t i = 0; i < ser.x.size(); ++i) s << "| " << detail::fmt(ser.x[i], 0) << " | " << detail::fmt(ser.y[i], 3) << " |\n";
    return s.str();
}

inline std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    return out;
}

/// Writes the JSON report, summary.md and one plot (or table) per series.
/// Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const metrics::MetricReport& r, const std::filesystem::path& out_dir,
                                                      const std::string& json_name = "report.json") {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw RuntimeFailure(concat("cannot create report directory '", out_dir.string(), "': ", ec.message()));
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::filesystem::path& p, const std::string& body) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw RuntimeFailure(concat("cannot write '", p.string(), "'"));
        f << body;
        if (!f) throw RuntimeFailure(concat("write failed for '", p.string(), "'"));
        written.push_back(p);
    };
    put(out_dir / json_name, r.to_json().dump(2) + "\n");

    std::ostringstream sum;
    sum << "# Report\n\n";
    for (const auto& [k, v] : r.meta) sum << "- " << k << ": " << v << "\n";
    if (!r.samples.empty()) {
        sum << "\n| metric | n | mean | median |\n|---|---|---|---|\n";
        for (const auto& [k, v] : r.samples)
            sum << "| " << k << " | " << v.size() << " | " << detail::fmt(metrics::mean(v), 4) << " | " << detail::fmt(metrics::median(v), 4) << " |\n";
    }
    put(out_dir / "summary.md", sum.str());

    for (const auto& ser : r.series) {
        const auto stem = slug(ser.name);
        if (ser.kind == "curve") put(out_dir / (stem + ".svg"), curve_svg(ser));
        else if (ser.kind == "histogram") put(out_dir / (stem + ".svg"), histogram_svg(ser));
        else if (ser.kind == "table") put(out_dir / (stem + ".md"), table_markdown(ser));
        else throw InvalidArgument(concat("unknown series kind '", ser.kind, "'"));
    }
    return written;
}

}  // namespace bannergen::report
