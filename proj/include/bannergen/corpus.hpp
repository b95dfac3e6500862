// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bannergen/common.hpp"
#include "bannergen/elements.hpp"
#include "bannergen/image_io.hpp"
#include "bannergen/metrics.hpp"

namespace bannergen::corpus {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Closed style vocabulary. Every word a prompt can contain appears here.

enum class Shape : int { circle, rectangle, triangle, blob };
enum class BackgroundKind : int { flat, gradient, texture };
enum class Side : int { left, right, top, bottom, center };
enum class Split : int { train, val, test };

struct NamedColor {
    std::string_view name;
    std::array<float, 3> rgb;
};

inline constexpr std::array<NamedColor, 7> kObjectColors = {{
    {"red", {0.86f, 0.16f, 0.14f}},
    {"green", {0.13f, 0.62f, 0.22f}},
    {"blue", {0.14f, 0.30f, 0.86f}},
    {"yellow", {0.95f, 0.78f, 0.08f}},
    {"orange", {0.96f, 0.50f, 0.10f}},
    {"purple", {0.55f, 0.20f, 0.70f}},
    {"black", {0.10f, 0.10f, 0.12f}},
}};

inline constexpr std::array<NamedColor, 5> kBackgroundColors = {{
    {"white", {0.96f, 0.96f, 0.96f}},
    {"cream", {0.97f, 0.92f, 0.80f}},
    {"gray", {0.78f, 0.78f, 0.80f}},
    {"sky", {0.74f, 0.86f, 0.97f}},
    {"mint", {0.79f, 0.94f, 0.83f}},
}};

inline constexpr std::array<std::string_view, 4> kShapeWords = {"circle", "rectangle", "triangle", "blob"};
inline constexpr std::array<std::string_view, 3> kBackgroundWords = {"flat", "gradient", "texture"};
inline constexpr std::array<std::string_view, 5> kSideWords = {"left", "right", "top", "bottom", "center"};
inline constexpr std::array<std::string_view, 5> kGlueWords = {"on", "the", "and", "with", "background"};

inline constexpr std::string_view to_string(Shape s) { return kShapeWords[static_cast<int>(s)]; }
inline constexpr std::string_view to_string(BackgroundKind k) { return kBackgroundWords[static_cast<int>(k)]; }
inline constexpr std::string_view to_string(Side s) { return kSideWords[static_cast<int>(s)]; }
inline constexpr std::string_view to_string(Split s) {
    return s == Split::train ? "train" : (s == Split::val ? "val" : "test");
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw SchemaViolation("split", concat("unknown split '", s, "'"));
}

/// Every word the prompt grammar can emit, in a fixed order.
inline std::vector<std::string> prompt_vocabulary() {
    std::vector<std::string> words;
    for (const auto& c : kObjectColors) words.emplace_back(c.name);
    for (auto w : kShapeWords) words.emplace_back(w);
    for (auto w : kSideWords) words.emplace_back(w);
    for (auto w : kGlueWords) words.emplace_back(w);
    for (auto w : kBackgroundWords) words.emplace_back(w);
    for (const auto& c : kBackgroundColors) words.emplace_back(c.name);
    return words;
}

// ---------------------------------------------------------------------------
// Styles

struct ObjectStyle {
    Shape shape = Shape::circle;
    int color = 0;         // index into kObjectColors
    double cx = 0.5;       // center, normalized
    double cy = 0.5;
    double radius = 0.2;   // bounding radius as a fraction of min(H, W)
    double aspect = 0.785; // rectangle corner angle (radians)
    double phase = 0.0;    // blob lobe phase
    int lobes = 3;

    Side side() const {
        const double dx = cx - 0.5, dy = cy - 0.5;
        constexpr double kDead = 0.12;
        if (std::abs(dx) >= std::abs(dy) && std::abs(dx) > kDead) return dx < 0 ? Side::left : Side::right;
        if (std::abs(dy) > kDead) return dy < 0 ? Side::top : Side::bottom;
        return Side::center;
    }
};

struct BackgroundStyle {
    BackgroundKind kind = BackgroundKind::flat;
    int color = 0;  // index into kBackgroundColors
};

struct StyleSpec {
    BackgroundStyle background;
    std::vector<ObjectStyle> objects;
    Layout elements;
};

// Ranges the synthesizer draws styles from.
struct StyleSpace {
    int min_objects = 1;
    int max_objects = 3;
    int min_elements = 1;
    int max_elements = 4;
    double min_radius = 0.13;
    double max_radius = 0.27;
    int grid_bins = 32;
    int layout_candidates = 48;
    int placement_attempts = 64;

    void validate() const {
        if (min_objects < 0 || max_objects < min_objects || max_objects > 3)
            throw InvalidArgument("style space: objects must satisfy 0 <= min <= max <= 3");
        if (min_elements < 0 || max_elements < min_elements || max_elements > 8)
            throw InvalidArgument("style space: elements must satisfy 0 <= min <= max <= 8");
        if (!(min_radius > 0 && max_radius >= min_radius && max_radius < 0.5))
            throw InvalidArgument("style space: radius range invalid");
    }
};

struct FilterCriteria {
    double salient_ratio_min = 0.05;
    double salient_ratio_max = 0.30;
    double occlusion_max = 0.30;

    void validate() const {
        if (!(0.0 <= salient_ratio_min && salient_ratio_min < salient_ratio_max && salient_ratio_max <= 1.0))
            throw InvalidArgument("filter criteria: need 0 <= salient_ratio_min < salient_ratio_max <= 1");
        if (!(0.0 <= occlusion_max && occlusion_max <= 1.0))
            throw InvalidArgument("filter criteria: need 0 <= occlusion_max <= 1");
    }
};

struct BannerRecord {
    std::string id;
    Image image;
    SaliencyMap saliency;
    Layout elements;
    std::string prompt;
    Split split = Split::train;
    std::vector<ObjectStyle> objects;  // provenance only; not required on load

    void validate() const {
        if (image.height <= 0 || image.width <= 0) throw SchemaViolation("image", "empty raster");
        if (saliency.height != image.height || saliency.width != image.width)
            throw SchemaViolation("saliency", "dimensions differ from image");
        if (!saliency.in_unit_range()) throw SchemaViolation("saliency", "values outside [0,1]");
        if (prompt.empty()) throw SchemaViolation("prompt", "empty");
        for (std::size_t i = 0; i < elements.size(); ++i)
            if (!elements[i].valid()) throw SchemaViolation(concat("elements[", i, "]"), "box outside canvas");
    }
};

// ---------------------------------------------------------------------------
// Prompt grammar: "<color> <shape> on the <side> [and ...] with <kind> <bg> background"

inline std::string make_prompt(const StyleSpec& style) {
    std::string out;
    for (std::size_t i = 0; i < style.objects.size(); ++i) {
        const auto& o = style.objects[i];
        if (i > 0) out += " and ";
        out += concat(kObjectColors[o.color].name, ' ', to_string(o.shape), " on the ", to_string(o.side()));
    }
    if (!out.empty()) out += " with ";
    out += concat(to_string(style.background.kind), ' ', kBackgroundColors[style.background.color].name,
                  " background");
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline constexpr int kSuperSample = 4;

// Point-in-shape test in pixel units relative to the object center.
inline bool inside(const ObjectStyle& o, double dx, double dy, double r) {
    switch (o.shape) {
        case Shape::circle: return dx * dx + dy * dy <= r * r;
        case Shape::rectangle:
            return std::abs(dx) <= r * std::cos(o.aspect) && std::abs(dy) <= r * std::sin(o.aspect);
        case Shape::triangle: {
            // Upward triangle inscribed in the bounding circle.
            const double ax = 0, ay = -r;
            const double bx = r * std::sqrt(3.0) / 2, by = r / 2;
            const double cx = -bx, cy = r / 2;
            auto edge = [](double px, double py, double x0, double y0, double x1, double y1) {
                return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
            };
            const double e0 = edge(dx, dy, ax, ay, bx, by);
            const double e1 = edge(dx, dy, bx, by, cx, cy);
            const double e2 = edge(dx, dy, cx, cy, ax, ay);
            return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
        case Shape::blob: {
            const double phi = std::atan2(dy, dx);
            const double rho = r * (0.78 + 0.22 * std::sin(o.lobes * phi + o.phase));
            return dx * dx + dy * dy <= rho * rho;
        }
    }
    return false;
}

inline std::array<float, 3> background_at(const BackgroundStyle& bg, int y, int x, int h, int w) {
    auto c = kBackgroundColors[bg.color].rgb;
    switch (bg.kind) {
        case BackgroundKind::flat: break;
        case BackgroundKind::gradient: {
            const float t = (y + 0.5f) / static_cast<float>(h);
            for (auto& v : c) v = v * (1.0f - 0.22f * t);
            break;
        }
        case BackgroundKind::texture: {
            const float s = 0.045f * std::sin(2.0f * std::numbers::pi_v<float> * (x + y) / 6.0f);
            for (auto& v : c) v = std::clamp(v + s, 0.0f, 1.0f);
            break;
        }
    }
    (void)w;
    return c;
}

}  // namespace detail

/// Anti-aliased coverage of one object on an (h, w) canvas.
inline Map2D object_coverage(const ObjectStyle& o, int h, int w) {
    Map2D cov(h, w);
    const double r = o.radius * std::min(h, w);
    const double cx = o.cx * w, cy = o.cy * h;
    constexpr int ss = detail::kSuperSample;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r)) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            int hits = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const double px = x + (sx + 0.5) / ss, py = y + (sy + 0.5) / ss;
                    hits += detail::inside(o, px - cx, py - cy, r);
                }
            cov.at(y, x) = static_cast<float>(hits) / (ss * ss);
        }
    return cov;
}

/// Renders background plus objects. Objects never overlap, so the saliency map is
/// the plain sum of per-object coverage.
inline void render(const StyleSpec& style, int h, int w, Image& image, SaliencyMap& saliency) {
    image = Image(h, w);
    saliency = SaliencyMap(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto c = detail::background_at(style.background, y, x, h, w);
            for (int k = 0; k < 3; ++k) image.at(y, x, k) = c[k];
        }
    for (const auto& o : style.objects) {
        const Map2D cov = object_coverage(o, h, w);
        const auto& rgb = kObjectColors[o.color].rgb;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float a = cov.at(y, x);
                if (a <= 0.0f) continue;
                saliency.at(y, x) = std::min(1.0f, saliency.at(y, x) + a);
                for (int k = 0; k < 3; ++k) image.at(y, x, k) = (1 - a) * image.at(y, x, k) + a * rgb[k];
            }
    }
}

/// Background style named by the trailing "<kind> <color> background" of a prompt.
inline std::optional<BackgroundStyle> background_from_prompt(const std::string& prompt) {
    std::istringstream in(prompt);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    if (words.size() < 3 || words.back() != "background") return std::nullopt;
    BackgroundStyle bg;
    const auto& kind = words[words.size() - 3];
    const auto& color = words[words.size() - 2];
    auto k = std::find(kBackgroundWords.begin(), kBackgroundWords.end(), kind);
    if (k == kBackgroundWords.end()) return std::nullopt;
    bg.kind = static_cast<BackgroundKind>(k - kBackgroundWords.begin());
    auto c = std::find_if(kBackgroundColors.begin(), kBackgroundColors.end(), [&](const NamedColor& n) { return n.name == color; });
    if (c == kBackgroundColors.end()) return std::nullopt;
    bg.color = static_cast<int>(c - kBackgroundColors.begin());
    return bg;
}

inline Image render_background(const BackgroundStyle& bg, int h, int w) {
    Image image(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto c = detail::background_at(bg, y, x, h, w);
            for (int k = 0; k < 3; ++k) image.at(y, x, k) = c[k];
        }
    return image;
}

// ---------------------------------------------------------------------------
// Style sampling

namespace detail {

inline std::optional<std::vector<ObjectStyle>> place_objects(Rng& rng, const StyleSpace& space, int h, int w) {
    const int n = uniform_int(rng, space.min_objects, space.max_objects);
    const double side = std::min(h, w);
    std::vector<ObjectStyle> objs;
    for (int i = 0; i < n; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < space.placement_attempts && !placed; ++attempt) {
            ObjectStyle o;
            o.shape = static_cast<Shape>(uniform_int(rng, 0, 3));
            o.color = uniform_int(rng, 0, static_cast<int>(kObjectColors.size()) - 1);
            // Later objects are smaller so that three still fit.
            const double rmax = space.max_radius * (n >= 3 ? 0.8 : 1.0);
            o.radius = uniform(rng, space.min_radius * (n >= 3 ? 0.85 : 1.0), std::max(rmax, space.min_radius));
            o.aspect = uniform(rng, 0.55, 1.02);
            o.phase = uniform(rng, 0.0, 2 * std::numbers::pi);
            o.lobes = uniform_int(rng, 3, 5);
            const double rp = o.radius * side;
            const double mx = (rp + 1.0) / w, my = (rp + 1.0) / h;
            if (mx >= 0.5 || my >= 0.5) continue;
            o.cx = uniform(rng, mx, 1.0 - mx);
            o.cy = uniform(rng, my, 1.0 - my);
            bool clash = false;
            for (const auto& p : objs) {
                const double dx = (o.cx - p.cx) * w, dy = (o.cy - p.cy) * h;
                const double need = (o.radius + p.radius) * side + 2.0;
                if (dx * dx + dy * dy < need * need) clash = true;
            }
            if (!clash) {
                objs.push_back(o);
                placed = true;
            }
        }
        if (!placed) return std::nullopt;
    }
    return objs;
}

struct Box {
    Category category;
    int w, h;  // grid bins
};

inline Box draw_box(Rng& rng, Category c) {
    switch (c) {
        case Category::text: return {c, uniform_int(rng, 8, 16), uniform_int(rng, 2, 4)};
        case Category::button: return {c, uniform_int(rng, 4, 8), uniform_int(rng, 2, 3)};
        case Category::image: return {c, uniform_int(rng, 5, 9), uniform_int(rng, 5, 9)};
    }
    return {c, 4, 2};
}

// Stacks elements vertically along one shared edge (left or right aligned), trying
// several anchors and keeping the least occluding one.
inline Layout place_elements(Rng& rng, const StyleSpace& space, const SaliencyMap& saliency) {
    const int n = uniform_int(rng, space.min_elements, space.max_elements);
    if (n == 0) return {};
    const int g = space.grid_bins;
    std::vector<Box> boxes;
    for (int i = 0; i < n; ++i) {
        Category c = Category::text;
        if (i > 0) {
            const double u = uniform(rng, 0.0, 1.0);
            c = u < 0.45 ? Category::text : (u < 0.8 ? Category::button : Category::image);
        }
        boxes.push_back(draw_box(rng, c));
    }
    int stack_h = n - 1, max_w = 0;
    for (const auto& b : boxes) {
        stack_h += b.h;
        max_w = std::max(max_w, b.w);
    }
    while (stack_h > g - 2 && !boxes.empty()) {  // too tall: drop the last element
        stack_h -= boxes.back().h + 1;
        boxes.pop_back();
    }
    const bool right_aligned = uniform(rng, 0.0, 1.0) < 0.3;

    Layout best;
    double best_occ = std::numeric_limits<double>::infinity();
    for (int cand = 0; cand < space.layout_candidates; ++cand) {
        const int top = uniform_int(rng, 1, std::max(1, g - 1 - stack_h));
        Layout layout;
        if (right_aligned) {
            const int right = uniform_int(rng, std::min(max_w + 1, g - 1), g - 1);
            int y = top;
            for (const auto& b : boxes) {
                layout.push_back({b.category, static_cast<double>(right - b.w) / g, static_cast<double>(y) / g,
                                  static_cast<double>(b.h) / g, static_cast<double>(b.w) / g});
                y += b.h + 1;
            }
        } else {
            const int left = uniform_int(rng, 1, std::max(1, g - 1 - max_w));
            int y = top;
            for (const auto& b : boxes) {
                layout.push_back({b.category, static_cast<double>(left) / g, static_cast<double>(y) / g,
                                  static_cast<double>(b.h) / g, static_cast<double>(b.w) / g});
                y += b.h + 1;
            }
        }
        const double occ = metrics::occlusion(layout, saliency);
        if (occ < best_occ) {
            best_occ = occ;
            best = std::move(layout);
        }
    }
    return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Records

/// Synthesizes one banner record. Deterministic in (seed, canvas, space).
inline BannerRecord synth_record(std::uint64_t seed, int height, int width, const StyleSpace& space = {}) {
    if (height < 32 || width < 32) throw InvalidArgument(concat("canvas must be at least 32x32, got ", height, "x", width));
    space.validate();
    Rng rng(seed);
    constexpr int kStyleRetries = 16;
    for (int retry = 0; retry < kStyleRetries; ++retry) {
        auto objects = detail::place_objects(rng, space, height, width);
        if (!objects) continue;
        StyleSpec style;
        style.background.kind = static_cast<BackgroundKind>(uniform_int(rng, 0, 2));
        style.background.color = uniform_int(rng, 0, static_cast<int>(kBackgroundColors.size()) - 1);
        style.objects = std::move(*objects);

        BannerRecord rec;
        render(style, height, width, rec.image, rec.saliency);
        style.elements = detail::place_elements(rng, space, rec.saliency);
        rec.elements = style.elements;
        rec.prompt = make_prompt(style);
        rec.objects = style.objects;
        return rec;
    }
    throw PlacementFailure(concat("could not place objects after ", kStyleRetries, " style draws (seed ", seed, ")"));
}

/// Rounds image and saliency to 8 bits, as they will be after persistence.
inline BannerRecord quantized(BannerRecord rec) {
    for (float& v : rec.image.data) v = quantize8(v);
    for (float& v : rec.saliency.values) v = quantize8(v);
    return rec;
}

inline bool filter_record(const BannerRecord& rec, const FilterCriteria& criteria) {
    const double ratio = metrics::salient_ratio(rec.saliency);
    if (ratio < criteria.salient_ratio_min || ratio > criteria.salient_ratio_max) return false;
    return metrics::occlusion(rec.elements, rec.saliency) / 100.0 < criteria.occlusion_max;
}

// ---------------------------------------------------------------------------
// Serialization

inline json element_to_json(const LayoutElement& e) {
    return {{"category", to_string(e.category)}, {"left", e.left}, {"top", e.top}, {"height", e.height}, {"width", e.width}};
}

inline Layout layout_from_json(const json& arr, const std::string& field = "elements") {
    if (!arr.is_array()) throw SchemaViolation(field, "expected array");
    Layout out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& e = arr[i];
        const std::string where = concat(field, "[", i, "]");
        for (const char* key : {"category", "left", "top", "height", "width"})
            if (!e.contains(key)) throw SchemaViolation(concat(where, ".", key), "missing");
        LayoutElement el;
        try {
            el.category = parse_category(e.at("category").get<std::string>());
            el.left = e.at("left").get<double>();
            el.top = e.at("top").get<double>();
            el.height = e.at("height").get<double>();
            el.width = e.at("width").get<double>();
        } catch (const json::exception& ex) {
            throw SchemaViolation(where, ex.what());
        } catch (const InvalidArgument& ex) {
            throw SchemaViolation(concat(where, ".category"), ex.what());
        }
        if (!el.valid()) throw SchemaViolation(where, "box outside canvas");
        out.push_back(el);
    }
    return out;
}

inline json layout_to_json(const Layout& layout) {
    json arr = json::array();
    for (const auto& e : layout) arr.push_back(element_to_json(e));
    return arr;
}

inline json record_meta(const BannerRecord& rec) {
    json objs = json::array();
    for (const auto& o : rec.objects)
        objs.push_back({{"shape", to_string(o.shape)},
                        {"color", kObjectColors[o.color].name},
                        {"cx", o.cx},
                        {"cy", o.cy},
                        {"radius", o.radius}});
    return {{"id", rec.id},
            {"prompt", rec.prompt},
            {"split", to_string(rec.split)},
            {"height", rec.image.height},
            {"width", rec.image.width},
            {"elements", layout_to_json(rec.elements)},
            {"objects", objs}};
}

// Checksum over the 8-bit payload and metadata; independent of png encoding.
inline std::string record_checksum(const BannerRecord& rec) {
    Fnv1a h;
    for (float v : rec.image.data) {
        const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        h.update(&b, 1);
    }
    for (float v : rec.saliency.values) {
        const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        h.update(&b, 1);
    }
    h.update(record_meta(rec).dump());
    return h.hex();
}

inline void write_record(const BannerRecord& rec, const std::filesystem::path& records_dir) {
    rec.validate();
    std::filesystem::create_directories(records_dir);
    io::write_rgb(rec.image, records_dir / (rec.id + ".png"));
    io::write_gray(rec.saliency, records_dir / (rec.id + ".sal.png"));
    std::ofstream meta(records_dir / (rec.id + ".meta.json"));
    if (!meta) throw RuntimeFailure(concat("cannot write ", (records_dir / (rec.id + ".meta.json")).string()));
    meta << record_meta(rec).dump(2) << '\n';
}

inline BannerRecord read_record(const std::filesystem::path& records_dir, const std::string& id) {
    const auto meta_path = records_dir / (id + ".meta.json");
    if (!std::filesystem::exists(meta_path)) throw FileNotFound(meta_path);
    json meta;
    try {
        std::ifstream in(meta_path);
        meta = json::parse(in);
    } catch (const json::exception& ex) {
        throw SchemaViolation(id + ".meta.json", concat("malformed json: ", ex.what()));
    }
    if (!meta.is_object()) throw SchemaViolation(id + ".meta.json", "expected object");
    for (const char* key : {"prompt", "split", "elements", "height", "width"})
        if (!meta.contains(key)) throw SchemaViolation(key, "missing");
    BannerRecord rec;
    rec.id = id;
    if (!meta["prompt"].is_string()) throw SchemaViolation("prompt", "expected string");
    rec.prompt = meta["prompt"].get<std::string>();
    if (!meta["split"].is_string()) throw SchemaViolation("split", "expected string");
    rec.split = parse_split(meta["split"].get<std::string>());
    rec.elements = layout_from_json(meta["elements"]);
    if (meta.contains("objects"))
        for (const auto& o : meta["objects"]) {
            ObjectStyle s;
            const auto shape = o.value("shape", "circle");
            for (int k = 0; k < 4; ++k)
                if (kShapeWords[k] == shape) s.shape = static_cast<Shape>(k);
            const auto color = o.value("color", "red");
            for (int k = 0; k < static_cast<int>(kObjectColors.size()); ++k)
                if (kObjectColors[k].name == color) s.color = k;
            s.cx = o.value("cx", 0.5);
            s.cy = o.value("cy", 0.5);
            s.radius = o.value("radius", 0.2);
            rec.objects.push_back(s);
        }
    rec.image = io::read_rgb(records_dir / (id + ".png"));
    rec.saliency = io::read_gray(records_dir / (id + ".sal.png"));
    if (rec.image.height != meta["height"].get<int>() || rec.image.width != meta["width"].get<int>())
        throw SchemaViolation("height", "image size disagrees with metadata");
    rec.validate();
    return rec;
}

// ---------------------------------------------------------------------------
// Corpus

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct CorpusConfig {
    int height = 64;
    int width = 64;
    StyleSpace style;
    FilterCriteria criteria;
    SplitFractions splits;
};

struct ManifestEntry {
    std::string id;
    Split split;
    std::string checksum;
};

struct CorpusManifest {
    static constexpr int kVersion = 1;

    std::uint64_t seed = 0;
    int height = 0;
    int width = 0;
    FilterCriteria criteria;
    SplitFractions splits;
    std::vector<ManifestEntry> entries;
    std::size_t attempts = 0;
    std::size_t rejected = 0;
    std::size_t placement_failures = 0;
    std::string checksum;

    double rejection_rate() const { return attempts == 0 ? 0.0 : static_cast<double>(rejected) / attempts; }

    std::size_t count(Split s) const {
        return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](auto& e) { return e.split == s; }));
    }

    json to_json() const {
        json recs = json::array();
        for (const auto& e : entries) recs.push_back({{"id", e.id}, {"split", to_string(e.split)}, {"checksum", e.checksum}});
        return {{"version", kVersion},
                {"seed", seed},
                {"height", height},
                {"width", width},
                {"criteria",
                 {{"salient_ratio_min", criteria.salient_ratio_min},
                  {"salient_ratio_max", criteria.salient_ratio_max},
                  {"occlusion_max", criteria.occlusion_max}}},
                {"split_fracs", {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}}},
                {"stats",
                 {{"attempts", attempts},
                  {"rejected", rejected},
                  {"placement_failures", placement_failures},
                  {"rejection_rate", rejection_rate()}}},
                {"records", recs},
                {"checksum", checksum}};
    }

    static CorpusManifest from_json(const json& j) {
        CorpusManifest m;
        try {
            if (j.at("version").get<int>() != kVersion) throw SchemaViolation("version", "unsupported manifest version");
            m.seed = j.at("seed").get<std::uint64_t>();
            m.height = j.at("height").get<int>();
            m.width = j.at("width").get<int>();
            const auto& c = j.at("criteria");
            m.criteria = {c.at("salient_ratio_min").get<double>(), c.at("salient_ratio_max").get<double>(),
                          c.at("occlusion_max").get<double>()};
            const auto& s = j.at("split_fracs");
            m.splits = {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>()};
            const auto& st = j.at("stats");
            m.attempts = st.at("attempts").get<std::size_t>();
            m.rejected = st.at("rejected").get<std::size_t>();
            m.placement_failures = st.value("placement_failures", std::size_t{0});
            for (const auto& r : j.at("records"))
                m.entries.push_back({r.at("id").get<std::string>(), parse_split(r.at("split").get<std::string>()),
                                     r.at("checksum").get<std::string>()});
            m.checksum = j.at("checksum").get<std::string>();
        } catch (const json::out_of_range& ex) {
            throw SchemaViolation("manifest", ex.what());
        } catch (const json::type_error& ex) {
            throw SchemaViolation("manifest", ex.what());
        }
        return m;
    }
};

struct Corpus {
    CorpusManifest manifest;
    std::vector<BannerRecord> records;

    std::vector<const BannerRecord*> split(Split s) const {
        std::vector<const BannerRecord*> out;
        for (const auto& r : records)
            if (r.split == s) out.push_back(&r);
        return out;
    }
};

inline std::string record_id(std::size_t index) {
    std::string s = std::to_string(index);
    return "r" + std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

/// Generates records until `n_records` pass the filter, assigns splits with exact
/// counts ordered by a hash of (seed, index), and optionally writes everything under
/// `out_dir`.
inline Corpus build_corpus(std::size_t n_records, const CorpusConfig& cfg, std::uint64_t seed,
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
    cfg.criteria.validate();
    cfg.style.validate();
    const auto& sf = cfg.splits;
    if (sf.train < 0 || sf.val < 0 || sf.test < 0 || std::abs(sf.train + sf.val + sf.test - 1.0) > 1e-9)
        throw InvalidArgument("split fractions must be non-negative and sum to 1");

    Corpus corpus;
    auto& m = corpus.manifest;
    m.seed = seed;
    m.height = cfg.height;
    m.width = cfg.width;
    m.criteria = cfg.criteria;
    m.splits = cfg.splits;

    constexpr std::size_t kMinAttemptsForVerdict = 200;
    while (corpus.records.size() < n_records) {
        const std::size_t attempt = m.attempts++;
        BannerRecord rec;
        try {
            rec = quantized(synth_record(derive_seed(seed, attempt), cfg.height, cfg.width, cfg.style));
        } catch (const PlacementFailure&) {
            ++m.placement_failures;
            ++m.rejected;
            continue;
        }
        if (!filter_record(rec, cfg.criteria)) {
            ++m.rejected;
            if (m.attempts >= kMinAttemptsForVerdict && m.rejection_rate() > 0.99)
                throw InfeasibleStyleSpace(concat("rejection rate ", m.rejection_rate(), " after ", m.attempts,
                                                  " attempts; style space cannot satisfy filter criteria"));
            continue;
        }
        rec.id = record_id(corpus.records.size());
        corpus.records.push_back(std::move(rec));
    }

    // Exact split counts: order records by hash, then cut.
    const std::size_t n = corpus.records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return derive_seed(seed ^ 0x5bd1e995ULL, a) < derive_seed(seed ^ 0x5bd1e995ULL, b); });
    const auto n_train = static_cast<std::size_t>(std::llround(sf.train * n));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(sf.val * n)));
    for (std::size_t k = 0; k < n; ++k) {
        auto& r = corpus.records[order[k]];
        r.split = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    }

    Fnv1a total;
    for (const auto& r : corpus.records) {
        const auto sum = record_checksum(r);
        m.entries.push_back({r.id, r.split, sum});
        total.update(sum);
    }
    m.checksum = total.hex();

    if (out_dir) {
        std::filesystem::create_directories(*out_dir / "records");
        for (const auto& r : corpus.records) write_record(r, *out_dir / "records");
        std::ofstream out(*out_dir / "manifest.json");
        if (!out) throw RuntimeFailure(concat("cannot write manifest under ", out_dir->string()));
        out << m.to_json().dump(2) << '\n';
    }
    return corpus;
}

inline CorpusManifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    if (!std::filesystem::exists(path)) throw FileNotFound(path);
    std::ifstream in(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw SchemaViolation("manifest.json", ex.what());
    }
    return CorpusManifest::from_json(j);
}

/// Loads a corpus written by build_corpus, re-validating every record against the
/// manifest checksums and filter criteria.
inline Corpus load_corpus(const std::filesystem::path& root) {
    Corpus c;
    c.manifest = read_manifest(root);
    for (const auto& e : c.manifest.entries) {
        auto rec = read_record(root / "records", e.id);
        if (rec.split != e.split) throw SchemaViolation(e.id + ".split", "disagrees with manifest");
        if (record_checksum(rec) != e.checksum) throw SchemaViolation(e.id, "checksum mismatch");
        if (!filter_record(rec, c.manifest.criteria)) throw SchemaViolation(e.id, "record violates filter criteria");
        c.records.push_back(std::move(rec));
    }
    return c;
}

struct CorpusStats {
    std::size_t records = 0;
    std::size_t train = 0, val = 0, test = 0;
    double mean_salient_ratio = 0.0;
    double mean_occlusion = 0.0;
    double mean_alignment = 0.0;
    double mean_overlap = 0.0;
    double mean_elements = 0.0;
    double rejection_rate = 0.0;
};

inline CorpusStats corpus_stats(const Corpus& c) {
    CorpusStats s;
    s.records = c.records.size();
    s.train = c.manifest.count(Split::train);
    s.val = c.manifest.count(Split::val);
    s.test = c.manifest.count(Split::test);
    s.rejection_rate = c.manifest.rejection_rate();
    for (const auto& r : c.records) {
        s.mean_salient_ratio += metrics::salient_ratio(r.saliency);
        s.mean_occlusion += metrics::occlusion(r.elements, r.saliency);
        s.mean_alignment += metrics::alignment(r.elements);
        s.mean_overlap += metrics::overlap(r.elements);
        s.mean_elements += static_cast<double>(r.elements.size());
    }
    if (s.records > 0) {
        const double n = static_cast<double>(s.records);
        s.mean_salient_ratio /= n;
        s.mean_occlusion /= n;
        s.mean_alignment /= n;
        s.mean_overlap /= n;
        s.mean_elements /= n;
    }
    return s;
}

}  // namespace bannergen::corpus
