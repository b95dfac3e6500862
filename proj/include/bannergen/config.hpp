// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bannergen/corpus.hpp"
#include "bannergen/diffusion.hpp"
#include "bannergen/features.hpp"
#include "bannergen/layout.hpp"
#include "bannergen/pipeline.hpp"
#include "bannergen/saliency.hpp"

namespace bannergen {

inline constexpr const char* kHomeEnv = "DESIGEN_HOME";

inline std::filesystem::path default_home() {
    if (const char* h = std::getenv(kHomeEnv); h && *h) return h;
    return "bannergen_home";
}

/// Flat key/value run configuration. Every key has a default whose JSON type is
/// the schema for that key.
class RunConfig {
public:
    RunConfig() : values_(defaults()) {}

    static nlohmann::json defaults() {
        return {
            {"home", default_home().string()},
            {"seed", 0},
            // corpus
            {"canvas_size", 64},
            {"min_objects", 1},
            {"max_objects", 3},
            {"min_elements", 1},
            {"max_elements", 4},
            {"min_radius", 0.13},
            {"max_radius", 0.27},
            {"salient_ratio_min", 0.05},
            {"salient_ratio_max", 0.30},
            {"occlusion_max", 0.30},
            {"split_train", 0.8},
            {"split_val", 0.1},
            {"split_test", 0.1},
            // saliency detector
            {"saliency_resolution", 64},
            {"saliency_epochs", 20},
            // diffusion
            {"diffusion_size", 64},
            {"diffusion_channels", 32},
            {"diffusion_mults", {1, 2, 2, 2}},
            {"timesteps", 1000},
            {"schedule", "linear"},
            {"gamma", 0.5},
            {"constraint_mask", "saliency"},
            {"constraint_tokens", "all_but_bos"},
            {"diffusion_epochs", 40},
            {"diffusion_batch", 32},
            {"diffusion_lr", 3e-4},
            {"p_uncond", 0.1},
            {"reduce_train_prob", 0.5},
            {"reduce_full_share", 0.3},
            {"beta_reduce", 0.01},
            {"sample_steps", 50},
            {"guidance_scale", 1.0},
            {"eta", 0.0},
            // layout
            {"layout_bins", 32},
            {"layout_max_elements", 8},
            {"layout_epochs", 40},
            {"layout_batch", 32},
            {"layout_lr", 5e-4},
            {"top_k", 5},
            {"temperature", 1.0},
            {"greedy", false},
            // refinement / features
            {"refine_iterations", 2},
            {"invert_steps", 50},
            {"features_dim", 64},
            {"features_epochs", 10},
        };
    }

    void set(const std::string& key, const nlohmann::json& value) {
        const auto d = defaults();
        if (!d.contains(key)) throw SchemaViolation(key, "unknown configuration key");
        values_[key] = checked(key, d.at(key), value);
    }

    void merge(const nlohmann::json& obj) {
        if (!obj.is_object()) throw SchemaViolation("<root>", "configuration must be a key/value object");
        for (const auto& [k, v] : obj.items()) set(k, v);
    }

    template <typename T>
    T get(const std::string& key) const {
        if (!values_.contains(key)) throw SchemaViolation(key, "unknown configuration key");
        return values_.at(key).get<T>();
    }

    const nlohmann::json& values() const { return values_; }
    std::filesystem::path home() const { return get<std::string>("home"); }

    corpus::CorpusConfig corpus_config() const {
        corpus::CorpusConfig c;
        c.height = c.width = get<int>("canvas_size");
        c.style.min_objects = get<int>("min_objects");
        c.style.max_objects = get<int>("max_objects");
        c.style.min_elements = get<int>("min_elements");
        c.style.max_elements = get<int>("max_elements");
        c.style.min_radius = get<double>("min_radius");
        c.style.max_radius = get<double>("max_radius");
        c.style.grid_bins = get<int>("layout_bins");
        c.criteria.salient_ratio_min = get<double>("salient_ratio_min");
        c.criteria.salient_ratio_max = get<double>("salient_ratio_max");
        c.criteria.occlusion_max = get<double>("occlusion_max");
        c.splits = {get<double>("split_train"), get<double>("split_val"), get<double>("split_test")};
        return c;
    }

    saliency::DetectorConfig detector_config() const {
        saliency::DetectorConfig c;
        c.resolution = get<int>("saliency_resolution");
        c.epochs = get<int>("saliency_epochs");
        c.seed = get<std::uint64_t>("seed");
        return c;
    }

    diffusion::DiffusionConfig diffusion_config() const {
        diffusion::DiffusionConfig c;
        c.image_size = get<int>("diffusion_size");
        c.base_channels = get<int64_t>("diffusion_channels");
        c.channel_mults = get<std::vector<int64_t>>("diffusion_mults");
        c.timesteps = get<int>("timesteps");
        c.schedule = diffusion::parse_schedule_kind(get<std::string>("schedule"));
        return c;
    }

    diffusion::TrainConfig diffusion_train_config() const {
        diffusion::TrainConfig c;
        c.gamma = get<double>("gamma");
        c.mask = diffusion::parse_constraint_mask(get<std::string>("constraint_mask"));
        c.tokens = diffusion::parse_constraint_tokens(get<std::string>("constraint_tokens"));
        c.epochs = get<int>("diffusion_epochs");
        c.batch_size = get<int>("diffusion_batch");
        c.lr = get<double>("diffusion_lr");
        c.p_uncond = get<double>("p_uncond");
        c.reduce_prob = get<double>("reduce_train_prob");
        c.reduce_full_share = get<double>("reduce_full_share");
        c.beta = get<double>("beta_reduce");
        c.seed = get<std::uint64_t>("seed");
        return c;
    }

    diffusion::SampleConfig sample_config() const {
        diffusion::SampleConfig c;
        c.steps = get<int>("sample_steps");
        c.eta = get<double>("eta");
        c.guidance_scale = get<double>("guidance_scale");
        c.beta_reduce = get<double>("beta_reduce");
        return c;
    }

    layout::LayoutConfig layout_config() const {
        layout::LayoutConfig c;
        c.image_size = get<int>("canvas_size");
        c.bins = get<int>("layout_bins");
        c.max_elements = get<int>("layout_max_elements");
        return c;
    }

    layout::LayoutTrainConfig layout_train_config() const {
        layout::LayoutTrainConfig c;
        c.epochs = get<int>("layout_epochs");
        c.batch_size = get<int>("layout_batch");
        c.lr = get<double>("layout_lr");
        c.seed = get<std::uint64_t>("seed");
        return c;
    }

    layout::DecodeConfig decode_config() const { return {get<int>("top_k"), get<double>("temperature"), get<bool>("greedy")}; }

    pipeline::GenerationConfig generation_config() const {
        pipeline::GenerationConfig g;
        g.gamma = get<double>("gamma");
        g.beta_reduce = get<double>("beta_reduce");
        g.sample_steps = get<int>("sample_steps");
        g.guidance_scale = get<double>("guidance_scale");
        g.seed = get<std::uint64_t>("seed");
        g.decode = decode_config();
        return g;
    }

    pipeline::RefineConfig refine_config() const {
        pipeline::RefineConfig r;
        r.iterations = get<int>("refine_iterations");
        r.beta_reduce = get<double>("beta_reduce");
        r.invert_steps = get<int>("invert_steps");
        r.decode = decode_config();
        return r;
    }

    features::ExtractorConfig extractor_config() const {
        features::ExtractorConfig c;
        c.image_size = get<int>("canvas_size");
        c.dim = get<int64_t>("features_dim");
        c.epochs = get<int>("features_epochs");
        c.seed = get<std::uint64_t>("seed");
        return c;
    }

private:
    static std::string type_name(const nlohmann::json& v) {
        if (v.is_boolean()) return "boolean";
        if (v.is_number_integer()) return "integer";
        if (v.is_number()) return "number";
        if (v.is_string()) return "string";
        if (v.is_array()) return "array of integers";
        return v.type_name();
    }

    static nlohmann::json checked(const std::string& key, const nlohmann::json& def, const nlohmann::json& v) {
        bool ok = false;
        if (def.is_boolean()) ok = v.is_boolean();
        else if (def.is_number_integer()) ok = v.is_number_integer();
        else if (def.is_number()) ok = v.is_number();
        else if (def.is_string()) ok = v.is_string();
        else if (def.is_array()) ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number_integer(); });
        if (!ok) throw SchemaViolation(key, concat("expected ", type_name(def), ", got ", v.type_name()));
        if (def.is_number_float()) return v.get<double>();
        return v;
    }

    nlohmann::json values_;
};

/// defaults <- file <- overrides. An absent path means defaults only.
inline RunConfig load_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides = nlohmann::json::object()) {
    RunConfig cfg;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw FileNotFound(*path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(text);
            } catch (const nlohmann::json::parse_error& e) {
                throw SchemaViolation(path->filename().string(), concat("not valid JSON: ", e.what()));
            }
            cfg.merge(j);
        }
    }
    cfg.merge(overrides);
    return cfg;
}

}  // namespace bannergen
