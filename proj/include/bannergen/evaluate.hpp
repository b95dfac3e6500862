// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bannergen/diffusion.hpp"
#include "bannergen/features.hpp"
#include "bannergen/layout.hpp"
#include "bannergen/metrics.hpp"
#include "bannergen/pipeline.hpp"
#include "bannergen/saliency.hpp"

namespace bannergen::eval {

/// Samples in chunks of `chunk` to bound memory; returns [N,3,H,W] in [0,1].
inline torch::Tensor sample_images(diffusion::DiffusionModel& model, const std::vector<std::string>& prompts,
                                   const std::vector<std::uint64_t>& seeds, const diffusion::SampleConfig& sc,
                                   const torch::Tensor& mask = {}, int chunk = 50) {
    std::vector<torch::Tensor> parts;
    for (std::size_t s = 0; s < prompts.size(); s += chunk) {
        const auto e = std::min(prompts.size(), s + chunk);
        std::vector<std::string> p(prompts.begin() + s, prompts.begin() + e);
        std::vector<std::uint64_t> sd(seeds.begin() + s, seeds.begin() + e);
        parts.push_back(diffusion::sample(model, p, sd, sc, mask).images);
    }
    return torch::cat(parts, 0);
}

inline torch::Tensor detect(const saliency::SaliencyDetector& det, const torch::Tensor& images, int chunk = 100) {
    std::vector<torch::Tensor> parts;
    for (int64_t s = 0; s < images.size(0); s += chunk) parts.push_back(det.detect_batch(images.slice(0, s, std::min(images.size(0), s + chunk))));
    return torch::cat(parts, 0);
}

inline std::vector<double> salient_ratios(const torch::Tensor& saliency) {
    auto m = saliency.flatten(1).mean(1).to(torch::kFloat64).contiguous();
    return {m.data_ptr<double>(), m.data_ptr<double>() + m.numel()};
}

/// Prompts and seeds for n evaluation samples, cycling through the given records.
struct PromptSet {
    std::vector<std::string> prompts;
    std::vector<std::uint64_t> seeds;
};

inline PromptSet prompt_set(const std::vector<const corpus::BannerRecord*>& recs, std::size_t n, std::uint64_t seed) {
    if (recs.empty()) throw InvalidArgument("no records to draw prompts from");
    PromptSet p;
    for (std::size_t i = 0; i < n; ++i) {
        p.prompts.push_back(recs[i % recs.size()]->prompt);
        p.seeds.push_back(derive_seed(seed, i));
    }
    return p;
}

/// Centered square region covering `ratio` of the canvas.
inline RegionMask centered_mask(double ratio, int size) {
    if (ratio < 0 || ratio > 1) throw InvalidArgument("mask ratio must be in [0, 1]");
    const double side = std::sqrt(ratio);
    const double lo = (1 - side) / 2;
    Layout box;
    if (ratio > 0) box.push_back({Category::image, lo, lo, side, side});
    return layout::layout_to_mask(box, size, size);
}

struct SweepResult {
    std::vector<double> ratios;
    std::vector<double> mean_salient_ratio;
    std::vector<std::vector<double>> per_sample;
    metrics::Series series() const {
        return {"salient ratio vs mask ratio", "curve", ratios, mean_salient_ratio, "mask ratio", "mean salient ratio"};
    }
};

inline SweepResult mask_sweep(diffusion::DiffusionModel& model, const saliency::SaliencyDetector& det, const PromptSet& ps,
                              const diffusion::SampleConfig& sc, const std::vector<double>& ratios) {
    SweepResult r;
    const int size = model.config.image_size;
    for (double ratio : ratios) {
        const auto mask = pipeline::mask_tensor(centered_mask(ratio, size), size);
        auto imgs = sample_images(model, ps.prompts, ps.seeds, sc, ratio > 0 ? mask : torch::Tensor{});
        auto sr = salient_ratios(detect(det, imgs));
        r.ratios.push_back(ratio);
        r.mean_salient_ratio.push_back(metrics::mean(sr));
        r.per_sample.push_back(std::move(sr));
    }
    return r;
}

/// Per image: invert, regenerate while capturing cross-attention, aggregate it, and
/// compare with the detector's saliency of the input. Failed images are skipped and
/// reported in `failures`.
struct SimilarityResult {
    std::vector<double> cosines;
    std::vector<std::string> failures;

    metrics::Series histogram(int bins = 20) const {
        const auto counts = metrics::histogram(cosines, 0.0, 1.0, bins);
        metrics::Series s{"attention saliency cosine", "histogram", {}, {}, "cosine similarity", "images"};
        for (int b = 0; b < bins; ++b) {
            s.x.push_back(static_cast<double>(b) / bins);
            s.y.push_back(static_cast<double>(counts[b]));
        }
        return s;
    }
};

inline SimilarityResult attention_saliency_similarity(diffusion::DiffusionModel& model, const saliency::SaliencyDetector& det,
                                                      const torch::Tensor& images, const std::vector<std::string>& prompts,
                                                      int steps = 50, int chunk = 25) {
    SimilarityResult r;
    const int size = model.config.image_size;
    const auto x = resize_maps(images, size, size);
    const auto sal = detect(det, x);
    for (int64_t s = 0; s < x.size(0); s += chunk) {
        const auto e = std::min<int64_t>(x.size(0), s + chunk);
        std::vector<std::string> p(prompts.begin() + s, prompts.begin() + e);
        try {
            auto latent = diffusion::ddim_invert(model, x.slice(0, s, e), p, steps);
            diffusion::SampleConfig sc;
            sc.steps = steps;
            sc.capture = diffusion::AttentionControl::Capture::mean;
            auto res = diffusion::sample(model, p, std::vector<std::uint64_t>(p.size(), 0), sc, {}, latent);
            auto agg = diffusion::aggregate_attention(res.attention, size, size).flatten(1).contiguous();
            auto sm = sal.slice(0, s, e).flatten(1).contiguous();
            for (int64_t i = 0; i < e - s; ++i) {
                auto a = agg[i].contiguous(), b = sm[i].contiguous();
                r.cosines.push_back(metrics::cosine_similarity({a.data_ptr<float>(), static_cast<std::size_t>(a.numel())},
                                                               {b.data_ptr<float>(), static_cast<std::size_t>(b.numel())}));
            }
        } catch (const std::exception& ex) {
            r.failures.push_back(concat("images ", s, "..", e - 1, ": ", ex.what()));
        }
    }
    return r;
}

inline double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    const double mse = (a - b).pow(2).mean().item<double>();
    return mse <= 0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
}

/// Layout metrics for generated layouts, a uniform-random baseline and the ground
/// truth, all scored against each record's own saliency map.
inline metrics::MetricReport evaluate_layouts(layout::LayoutModel& model, const std::vector<const corpus::BannerRecord*>& recs,
                                              std::uint64_t seed, const layout::DecodeConfig& dc = {}) {
    metrics::MetricReport rep;
    Rng rng(derive_seed(seed, 0x7a11));
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto* r = recs[i];
        const auto spec = categories_of(layout::reading_order(r->elements));
        const auto gen = model.generate(r->image, spec, derive_seed(seed, i), dc);
        const auto rnd = layout::random_layout(spec, rng, model.vocabulary());
        rep.add("occlusion", metrics::occlusion(gen, r->saliency));
        rep.add("alignment", metrics::alignment(gen));
        rep.add("overlap", metrics::overlap(gen));
        rep.add("random_occlusion", metrics::occlusion(rnd, r->saliency));
        rep.add("random_alignment", metrics::alignment(rnd));
        rep.add("random_overlap", metrics::overlap(rnd));
        rep.add("real_occlusion", metrics::occlusion(r->elements, r->saliency));
        rep.add("real_alignment", metrics::alignment(r->elements));
        rep.add("real_overlap", metrics::overlap(r->elements));
    }
    rep.meta["layout_ckpt"] = model.id();
    rep.meta["seed"] = std::to_string(seed);
    rep.meta["records"] = std::to_string(recs.size());
    return rep;
}

/// Mean occlusion / salient ratio per refinement iteration (0 = initial template).
struct RefinementTable {
    std::vector<double> occlusion;
    std::vector<double> salient_ratio;

    std::vector<metrics::Series> series() const {
        std::vector<double> it(occlusion.size());
        std::iota(it.begin(), it.end(), 0.0);
        return {{"occlusion vs iteration", "table", it, occlusion, "iteration", "mean occlusion"},
                {"salient ratio vs iteration", "table", it, salient_ratio, "iteration", "mean salient ratio"}};
    }
};

inline RefinementTable refinement_table(const std::vector<pipeline::Template>& initial,
                                        const std::vector<std::vector<pipeline::Template>>& rounds) {
    RefinementTable t;
    auto push = [&](const std::vector<pipeline::Template>& ts) {
        std::vector<double> occ, sr;
        for (const auto& x : ts) {
            if (!x.metrics) throw InvalidArgument("refinement table needs templates with metrics (pass a detector)");
            occ.push_back(x.metrics->occlusion);
            sr.push_back(x.metrics->salient_ratio);
        }
        t.occlusion.push_back(metrics::mean(occ));
        t.salient_ratio.push_back(metrics::mean(sr));
    };
    push(initial);
    for (const auto& r : rounds) push(r);
    return t;
}

/// Euclidean embedding distances between pages of one deck, and between pages of
/// two decks that share a prompt but not a seed. Both sets pair different presets.
struct DeckConsistency {
    std::vector<double> same_seed;
    std::vector<double> different_seed;

    double ratio() const { return metrics::mean(same_seed) / std::max(1e-12, metrics::mean(different_seed)); }
    // Probability that a same-seed pair is closer than a different-seed pair.
    double auc() const { return metrics::auc(same_seed, different_seed); }
};

inline DeckConsistency deck_consistency(const features::FeatureExtractor& fx, const std::vector<std::vector<pipeline::Template>>& decks) {
    DeckConsistency r;
    std::vector<torch::Tensor> emb;
    for (const auto& d : decks) {
        std::vector<Image> imgs;
        for (const auto& t : d) imgs.push_back(t.background);
        emb.push_back(fx.embed(imgs));
    }
    for (std::size_t a = 0; a < decks.size(); ++a) {
        const auto n = emb[a].size(0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) r.same_seed.push_back((emb[a][i] - emb[a][j]).norm().item<double>());
        for (std::size_t b = a + 1; b < decks.size(); ++b) {
            if (decks[a].empty() || decks[b].empty() || decks[a][0].provenance.prompt != decks[b][0].provenance.prompt ||
                decks[a][0].provenance.seed == decks[b][0].provenance.seed)
                continue;
            for (int64_t i = 0; i < std::min(n, emb[b].size(0)); ++i)
                for (int64_t j = 0; j < std::min(n, emb[b].size(0)); ++j)
                    if (i != j) r.different_seed.push_back((emb[a][i] - emb[b][j]).norm().item<double>());
        }
    }
    return r;
}

}  // namespace bannergen::eval
