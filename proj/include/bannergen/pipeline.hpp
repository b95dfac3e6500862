// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bannergen/diffusion.hpp"
#include "bannergen/image_io.hpp"
#include "bannergen/layout.hpp"
#include "bannergen/metrics.hpp"
#include "bannergen/saliency.hpp"

namespace bannergen::pipeline {

enum class MaskSource { none, user, layout };

inline std::string_view to_string(MaskSource m) {
    switch (m) {
        case MaskSource::none: return "none";
        case MaskSource::user: return "user";
        case MaskSource::layout: return "layout";
    }
    return "?";
}
inline MaskSource parse_mask_source(std::string_view s) {
    if (s == "none") return MaskSource::none;
    if (s == "user") return MaskSource::user;
    if (s == "layout") return MaskSource::layout;
    throw InvalidArgument(concat("unknown mask source '", s, "'"));
}

struct GenerationConfig {
    double gamma = 0.5;
    double beta_reduce = 0.01;
    int sample_steps = 50;
    double guidance_scale = 1.0;
    std::uint64_t seed = 0;
    MaskSource mask_source = MaskSource::none;
    layout::DecodeConfig decode;

    void validate() const {
        if (gamma < 0) throw InvalidArgument("gamma must be >= 0");
        if (beta_reduce < 0 || beta_reduce > 1) throw InvalidArgument("beta_reduce must be in [0, 1]");
        if (sample_steps < 1) throw InvalidArgument("sample_steps must be >= 1");
        decode.validate();
    }

    nlohmann::json to_json() const {
        return {{"gamma", gamma},
                {"beta_reduce", beta_reduce},
                {"sample_steps", sample_steps},
                {"guidance_scale", guidance_scale},
                {"seed", seed},
                {"mask_source", to_string(mask_source)},
                {"top_k", decode.top_k},
                {"temperature", decode.temperature},
                {"greedy", decode.greedy}};
    }
};

struct RefineConfig {
    int iterations = 2;
    double beta_reduce = 0.01;
    int invert_steps = 50;
    layout::DecodeConfig decode;

    void validate() const {
        if (iterations < 1) throw InvalidArgument("refinement needs at least one iteration");
        if (invert_steps < 2) throw InvalidArgument("invert_steps must be >= 2");
        decode.validate();
    }
};

struct Provenance {
    std::string prompt;
    std::vector<Category> spec;
    std::uint64_t seed = 0;
    std::string diffusion_id;
    std::string layout_id;
    int iteration = 0;
    MaskSource mask_source = MaskSource::none;
    std::optional<RegionMask> mask;
    nlohmann::json config;

    nlohmann::json to_json() const {
        nlohmann::json spec_j = nlohmann::json::array();
        for (auto c : spec) spec_j.push_back(std::string(bannergen::to_string(c)));
        nlohmann::json j = {{"prompt", prompt},           {"spec", spec_j},         {"seed", seed},
                            {"diffusion_ckpt", diffusion_id}, {"layout_ckpt", layout_id}, {"iteration", iteration},
                            {"mask_source", to_string(mask_source)}, {"config", config}};
        if (mask) j["mask_coverage"] = mask->coverage();
        return j;
    }
};

struct TemplateMetrics {
    double salient_ratio = 0.0;
    double occlusion = 0.0;
    double alignment = 0.0;
    double overlap = 0.0;
};

struct Template {
    Image background;
    Layout layout;
    Provenance provenance;
    std::optional<TemplateMetrics> metrics;

    bool operator==(const Template& o) const {
        return background == o.background && layout == o.layout && provenance.to_json() == o.provenance.to_json();
    }
};

/// Loaded models shared by every pipeline stage; the detector is only needed for metrics.
struct Models {
    diffusion::DiffusionModel* diffusion = nullptr;
    layout::LayoutModel* layout = nullptr;
    const saliency::SaliencyDetector* detector = nullptr;

    void require() const {
        if (!diffusion) throw InvalidArgument("pipeline needs a diffusion checkpoint");
        if (!layout) throw InvalidArgument("pipeline needs a layout checkpoint");
    }
};

inline torch::Tensor mask_tensor(const RegionMask& m, int size) {
    auto t = to_tensor(m.map).unsqueeze(0);
    return resize_maps(t, size, size);
}

inline TemplateMetrics measure(const saliency::SaliencyDetector& det, const Image& background, const Layout& layout) {
    const auto sal = det.detect(background);
    return {metrics::salient_ratio(sal), metrics::occlusion(layout, sal), metrics::alignment(layout), metrics::overlap(layout)};
}

namespace detail {

inline std::string stage(const char* name, const std::exception& e) { return concat(name, ": ", e.what()); }

// Re-throws with the stage name prefixed, keeping the error category.
template <typename Fn>
auto staged(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw InvalidArgument(stage(name, e));
    } catch (const RuntimeFailure& e) {
        throw RuntimeFailure(stage(name, e));
    }
}

inline Provenance base_provenance(const Models& m, const std::string& prompt, const std::vector<Category>& spec, std::uint64_t seed,
                                  const nlohmann::json& cfg) {
    Provenance p;
    p.prompt = prompt;
    p.spec = spec;
    p.seed = seed;
    p.diffusion_id = m.diffusion->id();
    p.layout_id = m.layout->id();
    p.config = cfg;
    return p;
}

inline std::uint64_t layout_seed(std::uint64_t seed, int iteration) { return derive_seed(seed, 1000 + static_cast<std::uint64_t>(iteration)); }

}  // namespace detail

/// Background from text (with attention reduction iff a user mask is given), then a
/// layout with the requested categories conditioned on that background.
/// Batched: one template per (prompt, seed) pair, all sharing `spec` and the optional mask.
inline std::vector<Template> generate_templates(const Models& m, const std::vector<std::string>& prompts,
                                                const std::vector<Category>& spec, const std::optional<RegionMask>& user_mask,
                                                const std::vector<std::uint64_t>& seeds, const GenerationConfig& cfg = {}) {
    m.require();
    cfg.validate();
    if (prompts.size() != seeds.size()) throw InvalidArgument("generate_templates: one seed per prompt required");
    const int size = m.diffusion->config.image_size;
    diffusion::SampleConfig sc;
    sc.steps = cfg.sample_steps;
    sc.guidance_scale = cfg.guidance_scale;
    sc.beta_reduce = cfg.beta_reduce;
    const auto reduce = user_mask ? mask_tensor(*user_mask, size) : torch::Tensor{};
    auto bg = detail::staged("background", [&] { return diffusion::sample(*m.diffusion, prompts, seeds, sc, reduce).images; });
    std::vector<std::uint64_t> lseeds;
    for (auto s : seeds) lseeds.push_back(detail::layout_seed(s, 0));
    auto layouts = detail::staged("layout", [&] { return m.layout->generate(bg, spec, lseeds, cfg.decode); });

    std::vector<Template> out;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        Template t;
        t.background = image_from_tensor(bg[static_cast<int64_t>(i)]);
        t.layout = layouts[i];
        t.provenance = detail::base_provenance(m, prompts[i], spec, seeds[i], cfg.to_json());
        t.provenance.mask_source = user_mask ? MaskSource::user : MaskSource::none;
        t.provenance.mask = user_mask;
        if (m.detector) t.metrics = measure(*m.detector, t.background, t.layout);
        out.push_back(std::move(t));
    }
    return out;
}

inline Template generate_template(const Models& m, const std::string& prompt, const std::vector<Category>& spec,
                                  const std::optional<RegionMask>& user_mask, std::uint64_t seed, const GenerationConfig& cfg = {}) {
    return generate_templates(m, {prompt}, spec, user_mask, {seed}, cfg).front();
}

struct RefineResult {
    std::vector<Template> iterations;  // one entry per completed refinement round
    std::optional<std::string> error;
};

/// One refinement round for a batch: layout -> region mask, invert the previous
/// background, regenerate it under attention reduction, regenerate the layout.
inline std::vector<Template> refine_step(const Models& m, const std::vector<Template>& prev, const RefineConfig& cfg) {
    m.require();
    const int size = m.diffusion->config.image_size;
    std::vector<std::string> prompts;
    std::vector<Image> imgs;
    std::vector<torch::Tensor> masks;
    for (const auto& t : prev) {
        prompts.push_back(t.provenance.prompt);
        imgs.push_back(resize_image(t.background, size, size));
        masks.push_back(mask_tensor(layout::layout_to_mask(t.layout, size, size), size));
    }
    const auto mask = torch::cat(masks, 0);
    auto latent = detail::staged("inversion", [&] { return diffusion::ddim_invert(*m.diffusion, stack_images(imgs), prompts, cfg.invert_steps); });
    diffusion::SampleConfig sc;
    sc.steps = cfg.invert_steps;
    sc.beta_reduce = cfg.beta_reduce;
    std::vector<std::uint64_t> seeds;
    for (const auto& t : prev) seeds.push_back(t.provenance.seed);
    auto bg = detail::staged("background", [&] { return diffusion::sample(*m.diffusion, prompts, seeds, sc, mask, latent).images; });

    std::vector<Template> out;
    for (std::size_t i = 0; i < prev.size(); ++i) {
        const auto& p = prev[i];
        const int it = p.provenance.iteration + 1;
        auto lay = detail::staged("layout", [&] {
            return m.layout->generate(bg.slice(0, static_cast<int64_t>(i), static_cast<int64_t>(i) + 1), p.provenance.spec,
                                      {detail::layout_seed(p.provenance.seed, it)}, cfg.decode);
        });
        Template t;
        t.background = image_from_tensor(bg[static_cast<int64_t>(i)]);
        t.layout = lay.front();
        t.provenance = p.provenance;
        t.provenance.iteration = it;
        t.provenance.mask_source = MaskSource::layout;
        t.provenance.mask = layout::layout_to_mask(p.layout, size, size);
        t.provenance.config["refine"] = {{"beta_reduce", cfg.beta_reduce}, {"invert_steps", cfg.invert_steps}};
        if (m.detector) t.metrics = measure(*m.detector, t.background, t.layout);
        out.push_back(std::move(t));
    }
    return out;
}

/// Runs `cfg.iterations` rounds; the input template is left untouched and each round
/// is appended. On a failed round the completed prefix is returned with the error.
inline RefineResult refine(const Models& m, const Template& initial, const RefineConfig& cfg = {}) {
    cfg.validate();
    RefineResult r;
    std::vector<Template> cur{initial};
    for (int k = 0; k < cfg.iterations; ++k) {
        try {
            cur = refine_step(m, cur, cfg);
        } catch (const std::exception& e) {
            r.error = concat("iteration ", k + 1, ": ", e.what());
            break;
        }
        r.iterations.push_back(cur.front());
    }
    return r;
}

/// Batched trajectories: result[k][i] is template i after round k+1.
inline std::vector<std::vector<Template>> refine_batch(const Models& m, const std::vector<Template>& initial, const RefineConfig& cfg = {}) {
    cfg.validate();
    std::vector<std::vector<Template>> rounds;
    const std::vector<Template>* cur = &initial;
    for (int k = 0; k < cfg.iterations; ++k) {
        rounds.push_back(refine_step(m, *cur, cfg));
        cur = &rounds.back();
    }
    return rounds;
}

struct DeckPreset {
    std::string name;
    RegionMask mask;
    std::vector<Category> spec;
};

/// Same prompt and seed for every page; pages differ only through their region mask
/// and element spec.
inline std::vector<Template> generate_deck(const Models& m, const std::string& prompt, const std::vector<DeckPreset>& presets,
                                           std::uint64_t seed, const GenerationConfig& cfg = {}) {
    if (presets.empty()) throw InvalidArgument("deck needs at least one preset");
    std::vector<Template> out;
    for (const auto& p : presets) out.push_back(generate_template(m, prompt, p.spec, p.mask, seed, cfg));
    return out;
}

inline std::vector<DeckPreset> presets_from_json(const nlohmann::json& j, int resolution) {
    if (!j.is_array()) throw SchemaViolation("presets", "expected an array of presets");
    std::vector<DeckPreset> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& e = j[i];
        const std::string field = concat("presets[", i, "]");
        if (!e.is_object() || !e.contains("elements")) throw SchemaViolation(field, "expected an object with 'elements'");
        DeckPreset p;
        p.name = e.value("name", concat("page", i));
        const auto boxes = corpus::layout_from_json(e.at("elements"), field + ".elements");
        p.mask = layout::layout_to_mask(boxes, resolution, resolution);
        if (e.contains("spec")) {
            for (const auto& s : e.at("spec")) p.spec.push_back(parse_category(s.get<std::string>()));
        } else {
            p.spec = categories_of(boxes);
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Built-in title / title+content / content-left presets.
inline std::vector<DeckPreset> default_presets(int resolution) {
    auto preset = [&](std::string name, Layout boxes) {
        return DeckPreset{std::move(name), layout::layout_to_mask(boxes, resolution, resolution), categories_of(boxes)};
    };
    return {
        preset("title", {{Category::text, 0.15, 0.35, 0.2, 0.7}, {Category::button, 0.35, 0.6, 0.1, 0.3}}),
        preset("title_content", {{Category::text, 0.1, 0.08, 0.15, 0.8}, {Category::text, 0.1, 0.3, 0.45, 0.8}}),
        preset("content_left", {{Category::text, 0.06, 0.1, 0.15, 0.45}, {Category::text, 0.06, 0.3, 0.4, 0.45},
                                {Category::button, 0.06, 0.78, 0.1, 0.25}}),
    };
}

// ---------------------------------------------------------------------------
// Output

inline Image draw_layout(const Image& background, const Layout& layout) {
    Image out = background;
    const std::array<std::array<float, 3>, 3> colors = {{{0.9f, 0.1f, 0.1f}, {0.1f, 0.6f, 0.1f}, {0.1f, 0.2f, 0.9f}}};
    for (const auto& e : layout) {
        const auto& c = colors[static_cast<int>(e.category)];
        const int x0 = static_cast<int>(e.left * out.width), x1 = std::min(out.width - 1, static_cast<int>(e.right() * out.width));
        const int y0 = static_cast<int>(e.top * out.height), y1 = std::min(out.height - 1, static_cast<int>(e.bottom() * out.height));
        for (int x = x0; x <= x1; ++x)
            for (int k = 0; k < 3; ++k) out.at(y0, x, k) = out.at(y1, x, k) = c[k];
        for (int y = y0; y <= y1; ++y)
            for (int k = 0; k < 3; ++k) out.at(y, x0, k) = out.at(y, x1, k) = c[k];
    }
    return out;
}

/// Writes <stem>.png, <stem>.layout.json, <stem>.provenance.json and <stem>.preview.png.
inline void write_template(const Template& t, const std::filesystem::path& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    io::write_rgb(t.background, dir / (stem + ".png"));
    io::write_rgb(draw_layout(t.background, t.layout), dir / (stem + ".preview.png"));
    std::ofstream(dir / (stem + ".layout.json")) << corpus::layout_to_json(t.layout).dump(2) << "\n";
    auto prov = t.provenance.to_json();
    if (t.metrics)
        prov["metrics"] = {{"salient_ratio", t.metrics->salient_ratio},
                           {"occlusion", t.metrics->occlusion},
                           {"alignment", t.metrics->alignment},
                           {"overlap", t.metrics->overlap}};
    std::ofstream(dir / (stem + ".provenance.json")) << prov.dump(2) << "\n";
}

}  // namespace bannergen::pipeline
