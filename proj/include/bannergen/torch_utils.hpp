// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bannergen/common.hpp"

namespace bannergen {

// Single-threaded intra-op execution keeps floating point reductions reproducible.
inline void configure_torch(int threads = 1) {
    torch::set_num_threads(threads);
}

inline at::Generator make_generator(std::uint64_t seed) {
    return at::detail::createCPUGenerator(seed);
}

// [3,H,W] in [0,1]
inline torch::Tensor to_tensor(const Image& img) {
    auto t = torch::from_blob(const_cast<float*>(img.data.data()), {img.height, img.width, 3}, torch::kFloat32);
    return t.permute({2, 0, 1}).contiguous().clone();
}

// [1,H,W]
inline torch::Tensor to_tensor(const Map2D& m) {
    return torch::from_blob(const_cast<float*>(m.values.data()), {1, m.height, m.width}, torch::kFloat32).clone();
}

inline Image image_from_tensor(const torch::Tensor& chw) {
    auto t = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
    Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
    std::memcpy(img.data.data(), t.data_ptr<float>(), img.data.size() * sizeof(float));
    return img;
}

inline Map2D map_from_tensor(const torch::Tensor& hw) {
    auto t = hw.detach().to(torch::kFloat32).squeeze().contiguous();
    if (t.dim() != 2) throw InvalidArgument("map_from_tensor expects a single 2-D map");
    Map2D m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
    std::memcpy(m.values.data(), t.data_ptr<float>(), m.values.size() * sizeof(float));
    return m;
}

inline torch::Tensor stack_images(const std::vector<Image>& imgs) {
    std::vector<torch::Tensor> ts;
    ts.reserve(imgs.size());
    for (const auto& i : imgs) ts.push_back(to_tensor(i));
    return torch::stack(ts);
}

inline torch::Tensor stack_maps(const std::vector<Map2D>& maps) {
    std::vector<torch::Tensor> ts;
    ts.reserve(maps.size());
    for (const auto& m : maps) ts.push_back(to_tensor(m));
    return torch::stack(ts);
}

// Area downsample when the target divides the source, otherwise area-style
// interpolation; bilinear when enlarging.
inline torch::Tensor resize_maps(const torch::Tensor& bchw, int h, int w) {
    if (bchw.size(2) == h && bchw.size(3) == w) return bchw;
    if (h <= bchw.size(2) && w <= bchw.size(3)) return torch::adaptive_avg_pool2d(bchw, {h, w});
    return torch::nn::functional::interpolate(
        bchw, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kBilinear).align_corners(false));
}

inline void check_finite(const torch::Tensor& t, const std::string& what) {
    if (!torch::isfinite(t).all().item<bool>()) throw DivergenceError(what + " is not finite");
}

// ---------------------------------------------------------------------------
// Checkpoints: module parameters plus a JSON metadata string, one file.

struct CheckpointMeta {
    std::string kind;     // "saliency" | "diffusion" | "layout" | "features"
    int version = 1;
    nlohmann::json body;  // model configuration and anything needed to rebuild it
};

template <typename ModuleHolder>
void save_checkpoint(const ModuleHolder& module, const CheckpointMeta& meta, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    module->save(archive);
    nlohmann::json j = {{"kind", meta.kind}, {"version", meta.version}, {"body", meta.body}};
    archive.write("__meta__", c10::IValue(j.dump()));
    archive.save_to(path.string());
}

inline CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path, const std::string& expected_kind) {
    if (!std::filesystem::exists(path)) throw FileNotFound(path);
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue v;
    if (!archive.try_read("__meta__", v)) throw SchemaViolation(path.filename().string(), "missing checkpoint metadata");
    const auto j = nlohmann::json::parse(v.toStringRef());
    CheckpointMeta meta{j.at("kind").get<std::string>(), j.at("version").get<int>(), j.at("body")};
    if (meta.kind != expected_kind)
        throw SchemaViolation("kind", concat("checkpoint is '", meta.kind, "', expected '", expected_kind, "'"));
    return meta;
}

template <typename ModuleHolder>
void load_checkpoint_params(ModuleHolder& module, const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    module->load(archive);
}

// Deterministic fingerprint of a module's parameters, used as a checkpoint id.
template <typename ModuleHolder>
std::string parameter_fingerprint(const ModuleHolder& module) {
    Fnv1a h;
    for (const auto& p : module->parameters()) {
        auto c = p.detach().contiguous();
        h.update(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
    }
    return h.hex();
}

}  // namespace bannergen
