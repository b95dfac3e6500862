// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <numeric>

#include "bannergen/corpus.hpp"
#include "bannergen/maps.hpp"
#include "bannergen/torch_utils.hpp"

namespace bannergen::saliency {

namespace nn = torch::nn;

struct ConvBnImpl : nn::Module {
    nn::Conv2d conv{nullptr};
    nn::BatchNorm2d bn{nullptr};

    ConvBnImpl(int64_t in, int64_t out) {
        conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
        bn = register_module("bn", nn::BatchNorm2d(out));
    }
    torch::Tensor forward(const torch::Tensor& x) { return torch::relu(bn(conv(x))); }
};
TORCH_MODULE(ConvBn);

// Three-level encoder-decoder with skip connections, sigmoid head.
struct SaliencyNetImpl : nn::Module {
    ConvBn e1a{nullptr}, e1b{nullptr}, e2a{nullptr}, e2b{nullptr}, e3a{nullptr}, e3b{nullptr};
    ConvBn d2a{nullptr}, d2b{nullptr}, d1a{nullptr}, d1b{nullptr};
    nn::Conv2d head{nullptr};

    explicit SaliencyNetImpl(int64_t base = 24) {
        const int64_t c1 = base, c2 = base * 2, c3 = base * 4;
        e1a = register_module("e1a", ConvBn(3, c1));
        e1b = register_module("e1b", ConvBn(c1, c1));
        e2a = register_module("e2a", ConvBn(c1, c2));
        e2b = register_module("e2b", ConvBn(c2, c2));
        e3a = register_module("e3a", ConvBn(c2, c3));
        e3b = register_module("e3b", ConvBn(c3, c3));
        d2a = register_module("d2a", ConvBn(c3 + c2, c2));
        d2b = register_module("d2b", ConvBn(c2, c2));
        d1a = register_module("d1a", ConvBn(c2 + c1, c1));
        d1b = register_module("d1b", ConvBn(c1, c1));
        head = register_module("head", nn::Conv2d(nn::Conv2dOptions(c1, 1, 1)));
    }

    // Returns logits, [B,1,H,W]. Input in [0,1].
    torch::Tensor forward(const torch::Tensor& x) {
        namespace F = torch::nn::functional;
        auto s1 = e1b(e1a(x * 2.0 - 1.0));
        auto s2 = e2b(e2a(F::max_pool2d(s1, F::MaxPool2dFuncOptions(2))));
        auto s3 = e3b(e3a(F::max_pool2d(s2, F::MaxPool2dFuncOptions(2))));
        auto up = [](const torch::Tensor& t) {
            return F::interpolate(t, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
        };
        auto d2 = d2b(d2a(torch::cat({up(s3), s2}, 1)));
        auto d1 = d1b(d1a(torch::cat({up(d2), s1}, 1)));
        return head(d1);
    }
};
TORCH_MODULE(SaliencyNet);

struct DetectorConfig {
    int resolution = 64;
    int base_channels = 24;
    int epochs = 20;
    int batch_size = 32;
    double lr = 2e-3;
    std::uint64_t seed = 0;
    double blank_fraction = 0.1;  // extra background-only images with all-zero targets
};

struct TrainLog {
    int epoch = 0;
    double loss = 0.0;
    double val_iou = 0.0;
};

class SaliencyDetector {
public:
    SaliencyDetector() = default;
    SaliencyDetector(SaliencyNet net, int resolution, int base_channels)
        : net_(std::move(net)), resolution_(resolution), base_channels_(base_channels) {
        net_->eval();
    }

    int resolution() const { return resolution_; }
    double val_iou() const { return val_iou_; }
    void set_val_iou(double v) { val_iou_ = v; }
    const SaliencyNet& net() const { return net_; }
    SaliencyNet& net() { return net_; }

    /// Batched detection. `images` is [B,3,H,W] in [0,1]; returns [B,1,H,W] in [0,1].
    torch::Tensor detect_batch(const torch::Tensor& images) const {
        if (!torch::isfinite(images).all().item<bool>()) throw InvalidArgument("detect: input image has non-finite values");
        torch::NoGradGuard ng;
        const int64_t h = images.size(2), w = images.size(3);
        auto x = images;
        if (h != resolution_ || w != resolution_) x = resize_to(x, resolution_, resolution_);
        auto out = torch::sigmoid(net_->forward(x));
        if (h != resolution_ || w != resolution_) out = resize_to(out, h, w).clamp(0.0, 1.0);
        return out;
    }

    SaliencyMap detect(const Image& image) const {
        if (!image.finite()) throw InvalidArgument("detect: input image has non-finite values");
        return map_from_tensor(detect_batch(to_tensor(image).unsqueeze(0))[0]);
    }

    void save(const std::filesystem::path& path) const {
        save_checkpoint(net_, {"saliency", 1, {{"resolution", resolution_}, {"base_channels", base_channels_}, {"val_iou", val_iou_}}}, path);
    }

    static SaliencyDetector load(const std::filesystem::path& path) {
        const auto meta = read_checkpoint_meta(path, "saliency");
        SaliencyNet net(meta.body.at("base_channels").get<int64_t>());
        load_checkpoint_params(net, path);
        SaliencyDetector d(net, meta.body.at("resolution").get<int>(), meta.body.at("base_channels").get<int>());
        d.val_iou_ = meta.body.value("val_iou", 0.0);
        return d;
    }

private:
    static torch::Tensor resize_to(const torch::Tensor& x, int64_t h, int64_t w) {
        return torch::nn::functional::interpolate(
            x, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kBilinear).align_corners(false));
    }

    mutable SaliencyNet net_{nullptr};
    int resolution_ = 64;
    int base_channels_ = 24;
    double val_iou_ = 0.0;
};

// Mean binary IoU (threshold 0.5) between predicted and target maps, [B,1,H,W] each.
inline double mean_iou(const torch::Tensor& pred, const torch::Tensor& target) {
    auto p = pred >= 0.5, t = target >= 0.5;
    auto inter = (p & t).flatten(1).sum(1).to(torch::kFloat64);
    auto uni = (p | t).flatten(1).sum(1).to(torch::kFloat64);
    auto iou = torch::where(uni > 0, inter / uni.clamp_min(1), torch::ones_like(uni));
    return iou.mean().item<double>();
}

/// Trains a detector on the corpus analytic saliency (pixelwise BCE).
/// Validation IoU on the val split is recorded on the returned detector.
inline SaliencyDetector train_detector(const corpus::Corpus& data, const DetectorConfig& cfg,
                                       const std::function<void(const TrainLog&)>& log = {}) {
    torch::manual_seed(cfg.seed);
    SaliencyNet net(cfg.base_channels);
    const auto train = data.split(corpus::Split::train);
    auto val = data.split(corpus::Split::val);
    if (train.empty()) throw InvalidArgument("train_detector: corpus has no training records");

    std::vector<Image> imgs;
    std::vector<Map2D> maps;
    for (const auto* r : train) {
        imgs.push_back(resize_image(r->image, cfg.resolution, cfg.resolution));
        maps.push_back(resize_map(r->saliency, cfg.resolution, cfg.resolution));
    }
    // Background-only images teach the detector that plain canvases are not salient.
    const auto n_blank = static_cast<std::size_t>(std::lround(cfg.blank_fraction * train.size()));
    corpus::StyleSpace blank;
    blank.min_objects = blank.max_objects = 0;
    blank.min_elements = blank.max_elements = 0;
    for (std::size_t i = 0; i < n_blank; ++i) {
        auto r = corpus::synth_record(derive_seed(cfg.seed ^ 0xb1a2c3ULL, i), cfg.resolution, cfg.resolution, blank);
        imgs.push_back(r.image);
        maps.push_back(r.saliency);
    }
    const auto x_all = stack_images(imgs);
    const auto y_all = stack_maps(maps);

    torch::Tensor xv, yv;
    if (!val.empty()) {
        std::vector<Image> vi;
        std::vector<Map2D> vm;
        for (const auto* r : val) {
            vi.push_back(r->image);
            vm.push_back(r->saliency);
        }
        xv = stack_images(vi);
        yv = stack_maps(vm);
    }

    torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(cfg.lr).betas({0.9, 0.999}).weight_decay(1e-4));
    Rng rng(derive_seed(cfg.seed, 17));
    const auto n = static_cast<std::size_t>(x_all.size(0));
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SaliencyDetector det(net, cfg.resolution, cfg.base_channels);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        net->train();
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto e = std::min(n, s + cfg.batch_size);
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + s, order.begin() + e));
            auto logits = net->forward(x_all.index_select(0, idx));
            auto loss = torch::binary_cross_entropy_with_logits(logits, y_all.index_select(0, idx));
            if (!std::isfinite(loss.item<double>()))
                throw DivergenceError(concat("saliency training diverged at epoch ", epoch, " batch ", batches,
                                             " (loss=", loss.item<double>(), ")"));
            opt.zero_grad();
            loss.backward();
            opt.step();
            total += loss.item<double>();
            ++batches;
        }
        net->eval();
        TrainLog entry{epoch, total / std::max<std::size_t>(1, batches), 0.0};
        if (xv.defined()) entry.val_iou = mean_iou(det.detect_batch(xv), yv);
        det.set_val_iou(entry.val_iou);
        if (log) log(entry);
    }
    net->eval();
    return det;
}

}  // namespace bannergen::saliency
