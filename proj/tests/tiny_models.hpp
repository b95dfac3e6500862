// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

// Small untrained models for fast structural tests.

#pragma once

#include "bannergen/diffusion.hpp"
#include "bannergen/layout.hpp"

namespace tiny {

inline bannergen::diffusion::DiffusionConfig diffusion_config() {
    bannergen::diffusion::DiffusionConfig c;
    c.image_size = 16;
    c.base_channels = 8;
    c.channel_mults = {1, 2};
    c.heads = 2;
    c.text_dim = 16;
    c.text_layers = 1;
    c.timesteps = 100;
    return c;
}

inline bannergen::diffusion::DiffusionModel diffusion(std::uint64_t seed = 0) {
    torch::manual_seed(seed);
    bannergen::diffusion::DiffusionModel m(diffusion_config());
    m.net->eval();
    return m;
}

inline bannergen::layout::LayoutConfig layout_config() {
    bannergen::layout::LayoutConfig c;
    c.image_size = 16;
    c.d_model = 32;
    c.heads = 2;
    c.layers = 1;
    c.ff = 64;
    c.grid = 4;
    return c;
}

inline bannergen::layout::LayoutModel layout(std::uint64_t seed = 0) {
    torch::manual_seed(seed);
    bannergen::layout::LayoutModel m(layout_config());
    m.net()->eval();
    return m;
}

}  // namespace tiny
