// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bannergen/corpus.hpp"
#include "bannergen/torch_utils.hpp"

namespace bannergen::text {

inline constexpr int64_t kPad = 0;
inline constexpr int64_t kBos = 1;
inline constexpr int64_t kEos = 2;
inline constexpr int64_t kFirstWord = 3;

// Word-level tokenizer over the closed prompt grammar.
class PromptTokenizer {
public:
    static constexpr int kDefaultMaxTokens = 32;

    explicit PromptTokenizer(std::vector<std::string> words = corpus::prompt_vocabulary(), int max_tokens = kDefaultMaxTokens)
        : words_(std::move(words)), max_tokens_(max_tokens) {
        for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = kFirstWord + static_cast<int64_t>(i);
    }

    int64_t vocab_size() const { return kFirstWord + static_cast<int64_t>(words_.size()); }
    int max_tokens() const { return max_tokens_; }
    const std::vector<std::string>& words() const { return words_; }

    /// [bos] w1 .. wn [eos] [pad]..., exactly max_tokens long.
    std::vector<int64_t> encode(const std::string& prompt) const {
        std::vector<int64_t> ids{kBos};
        std::istringstream in(prompt);
        std::string w;
        while (in >> w) {
            auto it = index_.find(w);
            if (it == index_.end()) throw TokenizerError(w);
            ids.push_back(it->second);
        }
        ids.push_back(kEos);
        if (static_cast<int>(ids.size()) > max_tokens_)
            throw InvalidArgument(concat("prompt has ", ids.size(), " tokens, limit is ", max_tokens_));
        ids.resize(static_cast<std::size_t>(max_tokens_), kPad);
        return ids;
    }

    // [B, max_tokens] int64
    torch::Tensor encode_batch(const std::vector<std::string>& prompts) const {
        std::vector<int64_t> flat;
        flat.reserve(prompts.size() * max_tokens_);
        for (const auto& p : prompts) {
            auto ids = encode(p);
            flat.insert(flat.end(), ids.begin(), ids.end());
        }
        return torch::tensor(flat, torch::kInt64).view({static_cast<int64_t>(prompts.size()), max_tokens_});
    }

private:
    std::vector<std::string> words_;
    std::map<std::string, int64_t> index_;
    int max_tokens_;
};

// Token masks derived from ids.
inline torch::Tensor valid_mask(const torch::Tensor& ids) { return ids != kPad; }
inline torch::Tensor word_mask(const torch::Tensor& ids) { return ids >= kFirstWord; }

struct TextEncoderConfig {
    int64_t vocab_size = 0;
    int64_t max_tokens = PromptTokenizer::kDefaultMaxTokens;
    int64_t dim = 64;
    int64_t heads = 4;
    int64_t layers = 2;
    bool causal = true;
};

/// Token + learned position embeddings followed by a small transformer encoder.
/// With `causal`, each token sees only its prefix, so the [bos] output does not
/// depend on the prompt.
struct TextEncoderImpl : torch::nn::Module {
    TextEncoderConfig cfg;
    torch::nn::Embedding tok{nullptr}, pos{nullptr};
    torch::nn::TransformerEncoder encoder{nullptr};
    torch::nn::LayerNorm norm{nullptr};

    explicit TextEncoderImpl(TextEncoderConfig c) : cfg(c) {
        tok = register_module("tok", torch::nn::Embedding(cfg.vocab_size, cfg.dim));
        pos = register_module("pos", torch::nn::Embedding(cfg.max_tokens, cfg.dim));
        auto layer = torch::nn::TransformerEncoderLayer(
            torch::nn::TransformerEncoderLayerOptions(cfg.dim, cfg.heads).dim_feedforward(cfg.dim * 2).dropout(0.0));
        encoder = register_module("encoder", torch::nn::TransformerEncoder(torch::nn::TransformerEncoderOptions(layer, cfg.layers)));
        norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.dim})));
    }

    // ids [B,L] -> embeddings [B,L,D]
    torch::Tensor forward(const torch::Tensor& ids) {
        const int64_t L = ids.size(1);
        if (L > cfg.max_tokens) throw InvalidArgument("token sequence longer than encoder context");
        auto positions = torch::arange(L, torch::kInt64);
        auto x = tok(ids) + pos(positions).unsqueeze(0);
        auto attn_mask = cfg.causal ? torch::triu(torch::full({L, L}, -std::numeric_limits<float>::infinity()), 1) : torch::zeros({L, L});
        auto pad = ids == kPad;
        // [bos] is never padding, so every query row keeps at least one valid key.
        auto y = encoder(x.transpose(0, 1), attn_mask, pad);
        return norm(y.transpose(0, 1));
    }
};
TORCH_MODULE(TextEncoder);

}  // namespace bannergen::text
