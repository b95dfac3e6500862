// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "bannergen/corpus.hpp"
#include "bannergen/elements.hpp"
#include "bannergen/maps.hpp"
#include "bannergen/torch_utils.hpp"

namespace bannergen::layout {

namespace nn = torch::nn;

enum class Role { special, category, left, top, height, width };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::special: return "special";
        case Role::category: return "category";
        case Role::left: return "left";
        case Role::top: return "top";
        case Role::height: return "height";
        case Role::width: return "width";
    }
    return "?";
}

/// Token ids: [pad]=0, [bos]=1, [eos]=2, three categories, then `bins` position
/// tokens shared by left/top/height/width. Role inside an element span follows
/// from the sequence position.
struct LayoutVocabulary {
    static constexpr int64_t pad = 0;
    static constexpr int64_t bos = 1;
    static constexpr int64_t eos = 2;
    static constexpr int64_t first_category = 3;
    static constexpr int64_t first_bin = first_category + static_cast<int64_t>(kCategories.size());

    int bins = 32;

    int64_t size() const { return first_bin + bins; }
    int64_t category_token(Category c) const { return first_category + static_cast<int64_t>(c); }
    int64_t bin_token(int bin) const { return first_bin + bin; }
    bool is_category(int64_t tok) const { return tok >= first_category && tok < first_bin; }
    bool is_bin(int64_t tok) const { return tok >= first_bin && tok < size(); }
    Category category_of(int64_t tok) const { return static_cast<Category>(tok - first_category); }
    int bin_of(int64_t tok) const { return static_cast<int>(tok - first_bin); }

    int quantize(double v) const { return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1); }
    double center(int bin) const { return (bin + 0.5) / bins; }

    // Role of sequence position i (i = 0 is [bos]).
    static Role role_at(std::size_t i) {
        if (i == 0) return Role::special;
        switch ((i - 1) % 5) {
            case 0: return Role::category;
            case 1: return Role::left;
            case 2: return Role::top;
            case 3: return Role::height;
            default: return Role::width;
        }
    }

    std::size_t max_length(int max_elements) const { return 5 * static_cast<std::size_t>(max_elements) + 2; }
};

using LayoutSequence = std::vector<int64_t>;

inline Layout reading_order(Layout layout) {
    std::stable_sort(layout.begin(), layout.end(), [](const LayoutElement& a, const LayoutElement& b) {
        if (a.top != b.top) return a.top < b.top;
        return a.left < b.left;
    });
    return layout;
}

/// [bos] (cat, left, top, height, width)* [eos], elements in reading order.
/// Size bins are capped so the decoded box never leaves the canvas.
inline LayoutSequence tokenize_layout(const Layout& layout, const LayoutVocabulary& vocab = {}) {
    LayoutSequence seq{LayoutVocabulary::bos};
    for (const auto& e : reading_order(layout)) {
        const int a = vocab.quantize(e.left), b = vocab.quantize(e.top);
        const int h = std::min(vocab.quantize(e.height), vocab.bins - 1 - b);
        const int w = std::min(vocab.quantize(e.width), vocab.bins - 1 - a);
        seq.insert(seq.end(), {vocab.category_token(e.category), vocab.bin_token(a), vocab.bin_token(b), vocab.bin_token(h),
                               vocab.bin_token(w)});
    }
    seq.push_back(LayoutVocabulary::eos);
    return seq;
}

inline Layout detokenize_layout(const LayoutSequence& seq, const LayoutVocabulary& vocab = {}) {
    if (seq.empty() || seq.front() != LayoutVocabulary::bos) throw DecodeError(0, "sequence must start with [bos]");
    if (seq.size() < 2 || seq.back() != LayoutVocabulary::eos)
        throw DecodeError(seq.empty() ? 0 : seq.size() - 1, "sequence must end with [eos]");
    if ((seq.size() - 2) % 5 != 0) throw DecodeError(seq.size() - 1, "incomplete element span");
    Layout out;
    for (std::size_t i = 1; i + 1 < seq.size(); i += 5) {
        if (!vocab.is_category(seq[i])) throw DecodeError(i, concat("expected category token, got ", seq[i]));
        int v[4];
        for (int k = 0; k < 4; ++k) {
            if (!vocab.is_bin(seq[i + 1 + k]))
                throw DecodeError(i + 1 + k, concat("expected ", to_string(LayoutVocabulary::role_at(i + 1 + k)),
                                                    " token, got ", seq[i + 1 + k]));
            v[k] = vocab.bin_of(seq[i + 1 + k]);
        }
        if (v[2] > vocab.bins - 1 - v[1]) throw DecodeError(i + 3, "height leaves the canvas");
        if (v[3] > vocab.bins - 1 - v[0]) throw DecodeError(i + 4, "width leaves the canvas");
        out.push_back({vocab.category_of(seq[i]), vocab.center(v[0]), vocab.center(v[1]), vocab.center(v[2]), vocab.center(v[3])});
    }
    return out;
}

/// Structural validity without throwing.
inline bool valid_sequence(const LayoutSequence& seq, const LayoutVocabulary& vocab = {}) {
    try {
        detokenize_layout(seq, vocab);
        return true;
    } catch (const DecodeError&) {
        return false;
    }
}

/// Binary union of element boxes; a cell is set when its center lies in a box.
inline RegionMask layout_to_mask(const Layout& layout, int height, int width) {
    if (height < 1 || width < 1) throw InvalidArgument("mask resolution must be positive");
    RegionMask m = RegionMask::zeros(height, width);
    for (int y = 0; y < height; ++y) {
        const double cy = (y + 0.5) / height;
        for (int x = 0; x < width; ++x) {
            const double cx = (x + 0.5) / width;
            for (const auto& e : layout)
                if (cx >= e.left && cx < e.right() && cy >= e.top && cy < e.bottom()) {
                    m.map.at(y, x) = 1.0f;
                    break;
                }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Model

struct LayoutConfig {
    int image_size = 64;
    int bins = 32;
    int max_elements = 8;
    int64_t d_model = 128;
    int64_t heads = 4;
    int64_t layers = 4;
    int64_t ff = 256;
    int grid = 8;
    double dropout = 0.1;

    LayoutVocabulary vocabulary() const { return {bins}; }

    nlohmann::json to_json() const {
        return {{"image_size", image_size}, {"bins", bins},   {"max_elements", max_elements},
                {"d_model", d_model},       {"heads", heads}, {"layers", layers},
                {"ff", ff},                 {"grid", grid},   {"dropout", dropout}};
    }
    static LayoutConfig from_json(const nlohmann::json& j) {
        LayoutConfig c;
        c.image_size = j.at("image_size");
        c.bins = j.at("bins");
        c.max_elements = j.at("max_elements");
        c.d_model = j.at("d_model");
        c.heads = j.at("heads");
        c.layers = j.at("layers");
        c.ff = j.at("ff");
        c.grid = j.at("grid");
        c.dropout = j.at("dropout");
        return c;
    }
};

/// Strided convolutions to a grid x grid map of d-dimensional features.
struct ImageEncoderImpl : nn::Module {
    nn::Sequential body{nullptr};
    nn::Embedding pos{nullptr};
    int grid;

    ImageEncoderImpl(int64_t d, int grid_size) : grid(grid_size) {
        body = register_module("body", nn::Sequential());
        auto block = [&](int64_t in, int64_t out, int64_t stride) {
            body->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
            body->push_back(nn::GroupNorm(8, out));
            body->push_back(nn::SiLU());
        };
        block(5, 32, 1);
        block(32, 64, 2);
        block(64, 64, 1);
        block(64, d, 2);
        block(d, d, 1);
        pos = register_module("pos", nn::Embedding(grid * grid, d));
    }

    // [B,3,S,S] in [0,1] -> [grid*grid, B, d]
    torch::Tensor forward(const torch::Tensor& images) {
        const int64_t B = images.size(0), H = images.size(2), W = images.size(3);
        auto ys = torch::linspace(-1.0, 1.0, H).view({1, 1, H, 1}).expand({B, 1, H, W});
        auto xs = torch::linspace(-1.0, 1.0, W).view({1, 1, 1, W}).expand({B, 1, H, W});
        auto f = body->forward(torch::cat({images * 2.0 - 1.0, xs, ys}, 1));
        f = torch::adaptive_avg_pool2d(f, {grid, grid}).flatten(2).permute({2, 0, 1});
        return f + pos->weight.unsqueeze(1);
    }
};
TORCH_MODULE(ImageEncoder);

/// Autoregressive decoder over layout tokens with cross-attention to I(x).
struct LayoutNetImpl : nn::Module {
    LayoutConfig cfg;
    ImageEncoder encoder{nullptr};
    nn::Embedding tok{nullptr}, pos{nullptr};
    nn::TransformerDecoder decoder{nullptr};
    nn::LayerNorm norm{nullptr};
    nn::Linear head{nullptr};

    explicit LayoutNetImpl(LayoutConfig c) : cfg(c) {
        const auto vocab = cfg.vocabulary();
        encoder = register_module("encoder", ImageEncoder(cfg.d_model, cfg.grid));
        tok = register_module("tok", nn::Embedding(vocab.size(), cfg.d_model));
        pos = register_module("pos", nn::Embedding(static_cast<int64_t>(vocab.max_length(cfg.max_elements)), cfg.d_model));
        auto layer = nn::TransformerDecoderLayer(
            nn::TransformerDecoderLayerOptions(cfg.d_model, cfg.heads).dim_feedforward(cfg.ff).dropout(cfg.dropout));
        decoder = register_module("decoder", nn::TransformerDecoder(nn::TransformerDecoderOptions(layer, cfg.layers)));
        norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({cfg.d_model})));
        head = register_module("head", nn::Linear(cfg.d_model, vocab.size()));
    }

    torch::Tensor encode(const torch::Tensor& images) {
        auto x = images;
        if (x.size(2) != cfg.image_size || x.size(3) != cfg.image_size)
            x = torch::nn::functional::interpolate(x, torch::nn::functional::InterpolateFuncOptions()
                                                          .size(std::vector<int64_t>{cfg.image_size, cfg.image_size})
                                                          .mode(torch::kBilinear)
                                                          .align_corners(false));
        return encoder(x);
    }

    // tokens [B,L], memory [G,B,d] -> logits [B,L,V]
    torch::Tensor decode(const torch::Tensor& tokens, const torch::Tensor& memory) {
        const int64_t L = tokens.size(1);
        auto x = tok(tokens) + pos(torch::arange(L, torch::kInt64)).unsqueeze(0);
        auto causal = torch::triu(torch::full({L, L}, -std::numeric_limits<float>::infinity()), 1);
        auto pad = tokens == LayoutVocabulary::pad;
        auto y = decoder->forward(x.transpose(0, 1), memory, causal, torch::Tensor(), pad);
        return head(norm(y.transpose(0, 1)));
    }

    torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& tokens) { return decode(tokens, encode(images)); }
};
TORCH_MODULE(LayoutNet);

/// Mean next-token cross-entropy over non-pad targets. logits [B,L,V], targets [B,L].
inline torch::Tensor layout_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
    return torch::nn::functional::cross_entropy(
        logits.reshape({-1, logits.size(-1)}), targets.reshape({-1}),
        torch::nn::functional::CrossEntropyFuncOptions().ignore_index(LayoutVocabulary::pad));
}

struct DecodeConfig {
    int top_k = 5;
    double temperature = 1.0;
    bool greedy = false;

    void validate() const {
        if (!greedy && (top_k < 1 || temperature <= 0)) throw InvalidArgument("top_k >= 1 and temperature > 0 required");
    }
};

class LayoutModel {
public:
    LayoutModel() = default;
    explicit LayoutModel(LayoutConfig cfg) : cfg_(cfg), net_(LayoutNet(cfg)) {}

    const LayoutConfig& config() const { return cfg_; }
    LayoutVocabulary vocabulary() const { return cfg_.vocabulary(); }
    LayoutNet& net() { return net_; }
    std::string id() const { return parameter_fingerprint(net_); }

    void save(const std::filesystem::path& path) const {
        save_checkpoint(net_, {"layout", 1, {{"config", cfg_.to_json()}, {"vocabulary", {{"bins", cfg_.bins}, {"size", vocabulary().size()}}}}},
                        path);
    }
    static LayoutModel load(const std::filesystem::path& path) {
        const auto meta = read_checkpoint_meta(path, "layout");
        LayoutModel m(LayoutConfig::from_json(meta.body.at("config")));
        load_checkpoint_params(m.net_, path);
        m.net_->eval();
        return m;
    }

    /// Fixed categories, sampled positions. Invalid tokens for each role are masked
    /// out before sampling, so every result decodes. `images` is [B,3,H,W] in [0,1];
    /// one seed per image.
    std::vector<Layout> generate(const torch::Tensor& images, const std::vector<Category>& spec,
                                 const std::vector<std::uint64_t>& seeds, const DecodeConfig& dc = {}) {
        dc.validate();
        if (static_cast<int>(spec.size()) > cfg_.max_elements)
            throw InvalidArgument(concat("element spec has ", spec.size(), " entries, limit is ", cfg_.max_elements));
        const auto B = images.size(0);
        if (static_cast<std::size_t>(B) != seeds.size()) throw InvalidArgument("generate: one seed per image required");
        if (spec.empty()) return std::vector<Layout>(static_cast<std::size_t>(B));
        torch::NoGradGuard ng;
        net_->eval();
        const auto vocab = vocabulary();
        std::vector<at::Generator> gens;
        for (auto s : seeds) gens.push_back(make_generator(s));

        auto memory = net_->encode(images);
        std::vector<LayoutSequence> seqs(static_cast<std::size_t>(B), LayoutSequence{LayoutVocabulary::bos});
        for (Category c : spec) {
            for (auto& s : seqs) s.push_back(vocab.category_token(c));
            for (int k = 0; k < 4; ++k) {
                std::vector<int64_t> flat;
                for (const auto& s : seqs) flat.insert(flat.end(), s.begin(), s.end());
                const auto L = static_cast<int64_t>(seqs[0].size());
                auto tokens = torch::tensor(flat, torch::kInt64).view({B, L});
                auto logits = net_->decode(tokens, memory).select(1, L - 1);  // [B,V]
                for (int64_t b = 0; b < B; ++b) {
                    auto& s = seqs[b];
                    int hi = vocab.bins - 1;
                    if (k == 2) hi = vocab.bins - 1 - vocab.bin_of(s[s.size() - 1]);  // height vs top
                    if (k == 3) hi = vocab.bins - 1 - vocab.bin_of(s[s.size() - 3]);  // width vs left
                    auto row = logits[b].slice(0, LayoutVocabulary::first_bin, LayoutVocabulary::first_bin + hi + 1);
                    s.push_back(vocab.bin_token(pick(row, dc, gens[b])));
                }
            }
        }
        std::vector<Layout> out;
        for (auto& s : seqs) {
            s.push_back(LayoutVocabulary::eos);
            out.push_back(detokenize_layout(s, vocab));
        }
        return out;
    }

    Layout generate(const Image& image, const std::vector<Category>& spec, std::uint64_t seed, const DecodeConfig& dc = {}) {
        return generate(to_tensor(image).unsqueeze(0), spec, {seed}, dc).front();
    }

private:
    static int pick(const torch::Tensor& logits, const DecodeConfig& dc, at::Generator& gen) {
        if (dc.greedy) return static_cast<int>(logits.argmax().item<int64_t>());
        const auto k = std::min<int64_t>(dc.top_k, logits.size(0));
        auto [vals, idx] = torch::topk(logits / dc.temperature, k);
        auto probs = torch::softmax(vals.to(torch::kFloat64), 0);
        auto choice = torch::multinomial(probs, 1, false, gen).item<int64_t>();
        return static_cast<int>(idx[choice].item<int64_t>());
    }

    LayoutConfig cfg_;
    LayoutNet net_{nullptr};
};

/// Uniform placement over the token ranges the decoder may emit.
inline Layout random_layout(const std::vector<Category>& spec, Rng& rng, const LayoutVocabulary& vocab = {}) {
    LayoutSequence seq{LayoutVocabulary::bos};
    for (Category c : spec) {
        const int a = uniform_int(rng, 0, vocab.bins - 1), b = uniform_int(rng, 0, vocab.bins - 1);
        const int h = uniform_int(rng, 0, vocab.bins - 1 - b), w = uniform_int(rng, 0, vocab.bins - 1 - a);
        seq.insert(seq.end(), {vocab.category_token(c), vocab.bin_token(a), vocab.bin_token(b), vocab.bin_token(h), vocab.bin_token(w)});
    }
    seq.push_back(LayoutVocabulary::eos);
    return detokenize_layout(seq, vocab);
}

// ---------------------------------------------------------------------------
// Training

struct LayoutTrainConfig {
    int epochs = 40;
    int batch_size = 32;
    double lr = 5e-4;
    std::uint64_t seed = 0;
    bool flip_augment = true;
    double grad_clip = 1.0;
};

struct LayoutTrainLog {
    int epoch = 0;
    int64_t step = 0;
    double loss = 0.0;
};

inline Layout mirror_layout(const Layout& layout) {
    Layout out = layout;
    for (auto& e : out) e.left = std::clamp(1.0 - e.left - e.width, 0.0, 1.0);
    return out;
}

// [B, max_len] token matrix, padded with [pad].
inline torch::Tensor pad_sequences(const std::vector<LayoutSequence>& seqs, std::size_t length) {
    std::vector<int64_t> flat(seqs.size() * length, LayoutVocabulary::pad);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (seqs[i].size() > length) throw InvalidArgument(concat("layout sequence longer than ", length, " tokens"));
        std::copy(seqs[i].begin(), seqs[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * length));
    }
    return torch::tensor(flat, torch::kInt64).view({static_cast<int64_t>(seqs.size()), static_cast<int64_t>(length)});
}

class LayoutTrainer {
public:
    LayoutTrainer(LayoutModel& model, const LayoutTrainConfig& cfg)
        : model_(model), cfg_(cfg),
          opt_(model.net()->parameters(), torch::optim::AdamWOptions(cfg.lr).betas({0.9, 0.999}).weight_decay(0.01)) {}

    double step(const torch::Tensor& images, const torch::Tensor& tokens) {
        model_.net()->train();
        using torch::indexing::Slice;
        auto input = tokens.index({Slice(), Slice(0, -1)});
        auto target = tokens.index({Slice(), Slice(1, torch::indexing::None)});
        auto loss = layout_loss(model_.net()->forward(images, input), target);
        const double v = loss.item<double>();
        ++steps_;
        if (!std::isfinite(v)) throw DivergenceError(concat("layout training diverged at step ", steps_, " (loss=", v, ")"));
        opt_.zero_grad();
        loss.backward();
        if (cfg_.grad_clip > 0) torch::nn::utils::clip_grad_norm_(model_.net()->parameters(), cfg_.grad_clip);
        opt_.step();
        return v;
    }

    int64_t steps() const { return steps_; }

private:
    LayoutModel& model_;
    LayoutTrainConfig cfg_;
    torch::optim::AdamW opt_;
    int64_t steps_ = 0;
};

inline LayoutModel train_layout(const corpus::Corpus& data, const LayoutConfig& model_cfg, const LayoutTrainConfig& cfg,
                                const std::function<void(const LayoutTrainLog&)>& log = {}) {
    torch::manual_seed(cfg.seed);
    LayoutModel model(model_cfg);
    const auto vocab = model.vocabulary();
    const auto train = data.split(corpus::Split::train);
    if (train.empty()) throw InvalidArgument("train_layout: corpus has no training records");

    std::vector<Image> imgs;
    std::vector<LayoutSequence> seqs;
    for (const auto* r : train) {
        if (static_cast<int>(r->elements.size()) > model_cfg.max_elements) continue;
        const auto img = resize_image(r->image, model_cfg.image_size, model_cfg.image_size);
        imgs.push_back(img);
        seqs.push_back(tokenize_layout(r->elements, vocab));
        if (cfg.flip_augment) {
            Image flipped = img;
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x)
                    for (int c = 0; c < 3; ++c) flipped.at(y, x, c) = img.at(y, img.width - 1 - x, c);
            imgs.push_back(flipped);
            seqs.push_back(tokenize_layout(mirror_layout(r->elements), vocab));
        }
    }
    const auto x_all = stack_images(imgs);
    const auto t_all = pad_sequences(seqs, vocab.max_length(model_cfg.max_elements));

    LayoutTrainer trainer(model, cfg);
    Rng rng(derive_seed(cfg.seed, 23));
    const auto n = static_cast<std::size_t>(x_all.size(0));
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto e = std::min(n, s + cfg.batch_size);
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + s, order.begin() + e));
            const double loss = trainer.step(x_all.index_select(0, idx), t_all.index_select(0, idx));
            if (log) log({epoch, trainer.steps(), loss});
        }
    }
    model.net()->eval();
    return model;
}

}  // namespace bannergen::layout
