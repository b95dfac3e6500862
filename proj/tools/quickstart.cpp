// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

// Smallest end-to-end use of the library: synthesize a corpus, train the three
// models for a few epochs, then generate, refine and save one template.
//
//   bannergen_quickstart [out_dir] [epochs]

#include <iostream>

#include "bannergen/pipeline.hpp"

using namespace bannergen;

int main(int argc, char** argv) {
    const std::filesystem::path out = argc > 1 ? argv[1] : "quickstart_out";
    const int epochs = argc > 2 ? std::stoi(argv[2]) : 8;
    configure_torch(1);

    corpus::CorpusConfig cc;
    cc.height = cc.width = 32;
    const auto data = corpus::build_corpus(400, cc, 7);
    std::cout << data.records.size() << " records, first prompt: " << data.records.front().prompt << "\n";

    saliency::DetectorConfig dc;
    dc.resolution = 32;
    dc.epochs = epochs;
    const auto detector = saliency::train_detector(data, dc);

    diffusion::DiffusionConfig mc;
    mc.image_size = 32;
    mc.channel_mults = {1, 2, 2};
    diffusion::TrainConfig tc;
    tc.epochs = epochs;
    tc.lr = 3e-4;
    tc.reduce_prob = 0.5;
    auto background = diffusion::train_diffusion(data, mc, tc, [](int epoch, const diffusion::TrainStats& s) {
        if (s.step % 50 == 0) std::cout << "diffusion epoch " << epoch << " L_d " << s.loss_d << " L_c " << s.loss_c << "\n";
    });

    layout::LayoutConfig lc;
    lc.image_size = 32;
    layout::LayoutTrainConfig ltc;
    ltc.epochs = epochs;
    auto layouts = layout::train_layout(data, lc, ltc);

    pipeline::Models models{&background, &layouts, &detector};
    const auto& rec = data.records.front();
    const auto t = pipeline::generate_template(models, rec.prompt, {Category::text, Category::button}, std::nullopt, 42);
    pipeline::RefineConfig rc;
    rc.iterations = 2;
    const auto refined = pipeline::refine(models, t, rc);
    if (refined.error) std::cerr << "refinement stopped early: " << *refined.error << "\n";

    pipeline::write_template(t, out, "initial");
    for (std::size_t i = 0; i < refined.iterations.size(); ++i) pipeline::write_template(refined.iterations[i], out, concat("round", i + 1));
    std::cout << "occlusion " << t.metrics->occlusion;
    for (const auto& r : refined.iterations) std::cout << " -> " << r.metrics->occlusion;
    std::cout << "\nwrote " << out.string() << "\n";
}
