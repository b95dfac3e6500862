// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <numeric>

#include "bannergen/corpus.hpp"
#include "bannergen/maps.hpp"
#include "bannergen/torch_utils.hpp"

namespace bannergen::features {

namespace nn = torch::nn;

// Convolutional autoencoder; the bottleneck is the embedding.
struct AutoencoderImpl : nn::Module {
    int image_size;
    int64_t dim;
    nn::Sequential enc{nullptr}, dec{nullptr};
    nn::Linear to_code{nullptr}, from_code{nullptr};

    AutoencoderImpl(int size, int64_t embedding_dim) : image_size(size), dim(embedding_dim) {
        enc = register_module("enc", nn::Sequential());
        for (auto [in, out] : {std::pair<int64_t, int64_t>{3, 32}, {32, 64}, {64, 64}}) {
            enc->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1)));
            enc->push_back(nn::SiLU());
        }
        const int64_t s = size / 8;
        to_code = register_module("to_code", nn::Linear(64 * s * s, dim));
        from_code = register_module("from_code", nn::Linear(dim, 64 * s * s));
        dec = register_module("dec", nn::Sequential());
        for (auto [in, out] : {std::pair<int64_t, int64_t>{64, 64}, {64, 32}, {32, 32}}) {
            dec->push_back(nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)));
            dec->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
            dec->push_back(nn::SiLU());
        }
        dec->push_back(nn::Conv2d(nn::Conv2dOptions(32, 3, 3).padding(1)));
    }

    torch::Tensor encode(const torch::Tensor& x) { return to_code(enc->forward(x * 2.0 - 1.0).flatten(1)); }

    torch::Tensor forward(const torch::Tensor& x) {
        const int64_t s = image_size / 8;
        auto h = from_code(encode(x)).view({x.size(0), 64, s, s});
        return torch::sigmoid(dec->forward(h));
    }
};
TORCH_MODULE(Autoencoder);

struct ExtractorConfig {
    int image_size = 64;
    int64_t dim = 64;
    int epochs = 10;
    int batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(Autoencoder net, ExtractorConfig cfg) : net_(std::move(net)), cfg_(cfg) { net_->eval(); }

    int64_t dim() const { return cfg_.dim; }
    const ExtractorConfig& config() const { return cfg_; }
    std::string id() const { return parameter_fingerprint(net_); }

    /// [B,3,H,W] in [0,1] -> [B,dim] float64
    torch::Tensor embed(const torch::Tensor& images) const {
        torch::NoGradGuard ng;
        auto x = images.to(torch::kFloat32);
        if (x.size(2) != cfg_.image_size || x.size(3) != cfg_.image_size) x = resize_maps(x, cfg_.image_size, cfg_.image_size);
        return net_->encode(x).to(torch::kFloat64);
    }

    torch::Tensor embed(const std::vector<Image>& images) const { return embed(stack_images(images)); }

    double reconstruction_error(const torch::Tensor& images) const {
        torch::NoGradGuard ng;
        return torch::mse_loss(net_->forward(images), images).item<double>();
    }

    void save(const std::filesystem::path& path) const {
        save_checkpoint(net_, {"features", 1, {{"image_size", cfg_.image_size}, {"dim", cfg_.dim}}}, path);
    }
    static FeatureExtractor load(const std::filesystem::path& path) {
        const auto meta = read_checkpoint_meta(path, "features");
        ExtractorConfig cfg;
        cfg.image_size = meta.body.at("image_size");
        cfg.dim = meta.body.at("dim");
        Autoencoder net(cfg.image_size, cfg.dim);
        load_checkpoint_params(net, path);
        return FeatureExtractor(net, cfg);
    }

private:
    mutable Autoencoder net_{nullptr};
    ExtractorConfig cfg_;
};

inline FeatureExtractor train_extractor(const corpus::Corpus& data, const ExtractorConfig& cfg,
                                        const std::function<void(int epoch, double loss)>& log = {}) {
    if (cfg.image_size % 8 != 0) throw InvalidArgument("extractor image_size must be a multiple of 8");
    torch::manual_seed(cfg.seed);
    Autoencoder net(cfg.image_size, cfg.dim);
    const auto train = data.split(corpus::Split::train);
    if (train.empty()) throw InvalidArgument("train_extractor: corpus has no training records");
    std::vector<Image> imgs;
    for (const auto* r : train) imgs.push_back(resize_image(r->image, cfg.image_size, cfg.image_size));
    const auto x_all = stack_images(imgs);
    torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(cfg.lr).betas({0.9, 0.999}));
    Rng rng(derive_seed(cfg.seed, 31));
    const auto n = static_cast<std::size_t>(x_all.size(0));
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        net->train();
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto e = std::min(n, s + cfg.batch_size);
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + s, order.begin() + e));
            auto x = x_all.index_select(0, idx);
            auto loss = torch::mse_loss(net->forward(x), x);
            if (!std::isfinite(loss.item<double>())) throw DivergenceError(concat("extractor training diverged at epoch ", epoch));
            opt.zero_grad();
            loss.backward();
            opt.step();
            total += loss.item<double>();
            ++batches;
        }
        if (log) log(epoch, total / std::max(1, batches));
    }
    return FeatureExtractor(net, cfg);
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues clamp to 0.
inline torch::Tensor sqrtm_psd(const torch::Tensor& m) {
    auto [vals, vecs] = torch::linalg_eigh(m);
    return torch::matmul(vecs * vals.clamp_min(0.0).sqrt().unsqueeze(0), vecs.transpose(0, 1));
}

/// Frechet distance between Gaussians fitted to two embedding sets ([N,d] each).
inline double fd_lite(const torch::Tensor& a, const torch::Tensor& b, double jitter = 1e-6) {
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1)) throw InvalidArgument("fd_lite: feature sets must be [N,d] with equal d");
    if (a.size(0) < 2 || b.size(0) < 2) throw InvalidArgument("fd_lite: need at least 2 samples per side");
    const auto A = a.to(torch::kFloat64), B = b.to(torch::kFloat64);
    const auto mu_a = A.mean(0), mu_b = B.mean(0);
    const auto eye = torch::eye(A.size(1), torch::kFloat64) * jitter;
    const auto ca = torch::cov(A.transpose(0, 1)) + eye;
    const auto cb = torch::cov(B.transpose(0, 1)) + eye;
    const auto sa = sqrtm_psd(ca);
    auto inner = torch::matmul(torch::matmul(sa, cb), sa);
    inner = (inner + inner.transpose(0, 1)) / 2.0;
    const double tr_sqrt = sqrtm_psd(inner).trace().item<double>();
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    return mean_term + ca.trace().item<double>() + cb.trace().item<double>() - 2.0 * tr_sqrt;
}

}  // namespace bannergen::features
