// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bannergen/common.hpp"

namespace bannergen {

enum class Category : int { text = 0, button = 1, image = 2 };

inline constexpr std::array<Category, 3> kCategories = {Category::text, Category::button, Category::image};

inline constexpr std::string_view to_string(Category c) {
    switch (c) {
        case Category::text: return "text";
        case Category::button: return "button";
        case Category::image: return "image";
    }
    return "?";
}

inline Category parse_category(std::string_view s) {
    for (Category c : kCategories)
        if (to_string(c) == s) return c;
    throw InvalidArgument(concat("unknown element category '", s, "'"));
}

// A typed box in normalized canvas coordinates. (left, top) is the top-left corner.
struct LayoutElement {
    Category category = Category::text;
    double left = 0.0;
    double top = 0.0;
    double height = 0.0;
    double width = 0.0;

    double right() const { return left + width; }
    double bottom() const { return top + height; }
    double area() const { return width * height; }

    // Tolerance absorbs float rounding of grid-snapped coordinates.
    bool valid(double eps = 1e-9) const {
        return left >= -eps && top >= -eps && width > 0.0 && height > 0.0 && left + width <= 1.0 + eps &&
               top + height <= 1.0 + eps && std::isfinite(left) && std::isfinite(top);
    }

    friend bool operator==(const LayoutElement&, const LayoutElement&) = default;
};

using Layout = std::vector<LayoutElement>;

inline std::vector<Category> categories_of(const Layout& layout) {
    std::vector<Category> out;
    out.reserve(layout.size());
    for (const auto& e : layout) out.push_back(e.category);
    return out;
}

inline std::vector<Category> parse_element_spec(std::string_view csv) {
    std::vector<Category> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const auto comma = csv.find(',', start);
        const auto tok = csv.substr(start, comma == std::string_view::npos ? csv.size() - start : comma - start);
        if (!tok.empty()) out.push_back(parse_category(tok));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace bannergen
