// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bannergen/corpus.hpp"
#include "bannergen/maps.hpp"
#include "bannergen/text.hpp"
#include "bannergen/torch_utils.hpp"

namespace bannergen::diffusion {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// Noise schedule

enum class ScheduleKind { linear, cosine };

inline std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }
inline ScheduleKind parse_schedule_kind(std::string_view s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw InvalidArgument(concat("unknown schedule kind '", s, "'"));
}

struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> betas;       // betas[t-1], t = 1..T
    std::vector<double> alpha_bars;  // alpha_bars[t], alpha_bars[0] = 1

    double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }

    // [T+1] float64, index t
    torch::Tensor alpha_bar_tensor() const { return torch::tensor(alpha_bars, torch::kFloat64); }
};

inline NoiseSchedule make_noise_schedule(int T, ScheduleKind kind = ScheduleKind::linear, double beta_start = 1e-4,
                                         double beta_end = 0.02) {
    if (T < 1) throw InvalidArgument(concat("noise schedule needs T >= 1, got ", T));
    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.betas.resize(static_cast<std::size_t>(T));
    if (kind == ScheduleKind::linear) {
        for (int t = 1; t <= T; ++t)
            s.betas[t - 1] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1.0);
    } else {
        constexpr double off = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / T + off) / (1 + off) * std::numbers::pi / 2);
            return c * c;
        };
        for (int t = 1; t <= T; ++t) s.betas[t - 1] = std::clamp(1.0 - f(t) / f(t - 1), 1e-8, 0.999);
    }
    s.alpha_bars.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) s.alpha_bars[t] = s.alpha_bars[t - 1] * (1.0 - s.betas[t - 1]);
    return s;
}

/// Closed-form forward process for one scalar alpha_bar.
inline double q_sample(double x0, double alpha_bar, double noise) {
    return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * noise;
}

/// Batched forward process; `t` holds one integer timestep in [1,T] per sample.
inline torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& noise,
                              const NoiseSchedule& schedule) {
    if (!x0.sizes().equals(noise.sizes())) throw InvalidArgument("q_sample: noise shape differs from x0");
    if (t.dim() != 1 || t.size(0) != x0.size(0)) throw InvalidArgument("q_sample: need one timestep per sample");
    if (t.min().item<int64_t>() < 1 || t.max().item<int64_t>() > schedule.T)
        throw InvalidArgument("q_sample: timestep outside [1, T]");
    auto ab = schedule.alpha_bar_tensor().index_select(0, t).to(x0.dtype());
    std::vector<int64_t> shape(static_cast<std::size_t>(x0.dim()), 1);
    shape[0] = x0.size(0);
    ab = ab.view(shape);
    return ab.sqrt() * x0 + (1 - ab).sqrt() * noise;
}

/// Evenly strided DDIM timesteps 1, 1+k, 1+2k, ... (ascending).
inline std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw InvalidArgument(concat("sampling steps must be in [1, T], got ", steps));
    const int stride = T / steps;
    std::vector<int> ts(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) ts[i] = 1 + i * stride;
    return ts;
}

// ---------------------------------------------------------------------------
// Attention capture and control

struct AttentionLayer {
    int height = 0;
    int width = 0;
    int timestep = -1;      // -1: averaged over the captured timesteps
    torch::Tensor weights;  // [B, heads, H*W, L]
};

struct AttentionStack {
    std::vector<AttentionLayer> layers;
    torch::Tensor token_mask;  // [B, L] bool, prompt words (special and padding tokens excluded)

    bool empty() const { return layers.empty(); }
};

/// A' = beta * A * M + A * (1 - M), applied after the softmax and not renormalized.
/// `mask` broadcasts against `weights`.
inline torch::Tensor reduce_attention(const torch::Tensor& weights, const torch::Tensor& mask, double beta) {
    if (beta < 0.0 || beta > 1.0) throw InvalidArgument("reduction ratio must be in [0, 1]");
    return weights * (beta * mask + (1.0 - mask));
}

// Resizes [B,1,H,W] masks to an attention resolution and lays them out as
// [B,1,h*w,1] so they broadcast over heads and tokens.
inline torch::Tensor mask_for_layer(const torch::Tensor& mask, int h, int w) {
    auto m = resize_maps(mask, h, w);
    if (m.size(2) != h || m.size(3) != w) throw std::logic_error("mask resize produced the wrong resolution");
    return m.flatten(2).unsqueeze(-1);
}

// Hook object threaded through every cross-attention layer of one forward pass.
struct AttentionControl {
    enum class Capture { off, graph, mean, per_step };

    Capture capture = Capture::off;
    torch::Tensor reduce_mask;  // [B or 1, 1, H, W]; undefined disables reduction
    double beta = 0.01;

    int timestep = 0;
    int cursor = 0;
    std::vector<AttentionLayer> captured;
    std::vector<int> counts;

    void begin_pass(int t) {
        timestep = t;
        cursor = 0;
    }

    torch::Tensor process(const torch::Tensor& attn, int h, int w) {
        auto out = attn;
        if (reduce_mask.defined()) out = reduce_attention(attn, mask_for_layer(reduce_mask, h, w), beta);
        switch (capture) {
            case Capture::off: break;
            case Capture::graph: captured.push_back({h, w, timestep, out}); break;
            case Capture::per_step: captured.push_back({h, w, timestep, out.detach().clone()}); break;
            case Capture::mean:
                if (static_cast<std::size_t>(cursor) >= captured.size()) {
                    captured.push_back({h, w, -1, out.detach().clone()});
                    counts.push_back(1);
                } else {
                    captured[cursor].weights.add_(out.detach());
                    counts[cursor] += 1;
                }
                break;
        }
        ++cursor;
        return out;
    }

    AttentionStack finish(const torch::Tensor& ids) {
        AttentionStack s;
        s.token_mask = text::word_mask(ids);
        for (std::size_t i = 0; i < captured.size(); ++i) {
            auto layer = captured[i];
            if (capture == Capture::mean && counts[i] > 1) layer.weights = layer.weights / counts[i];
            s.layers.push_back(layer);
        }
        return s;
    }
};

/// Mean over layers, heads and prompt-word tokens, each layer resized to (h, w),
/// then max-normalized per sample. Returns [B, h, w].
inline torch::Tensor aggregate_attention(const AttentionStack& stack, int h, int w) {
    if (stack.empty()) throw InvalidArgument("aggregate_attention: empty attention stack");
    torch::NoGradGuard ng;
    const auto tok = stack.token_mask.to(torch::kFloat32);           // [B,L]
    const auto denom = tok.sum(1).clamp_min(1.0).view({-1, 1});      // [B,1]
    torch::Tensor acc;
    for (const auto& layer : stack.layers) {
        auto per_token = layer.weights.mean(1);                            // [B,HW,L]
        auto m = (per_token * tok.unsqueeze(1)).sum(-1) / denom;           // [B,HW]
        auto grid = m.view({-1, 1, layer.height, layer.width});
        auto r = resize_maps(grid, h, w);
        acc = acc.defined() ? acc + r : r;
    }
    acc = acc / static_cast<double>(stack.layers.size());
    auto out = acc.squeeze(1);
    auto mx = std::get<0>(out.flatten(1).max(1)).view({-1, 1, 1});
    return torch::where(mx > 0, out / mx.clamp_min(1e-12), out);
}

enum class ConstraintMask { saliency, complement, full };
enum class ConstraintTokens { words, all_but_bos };

inline std::string_view to_string(ConstraintMask m) {
    switch (m) {
        case ConstraintMask::saliency: return "saliency";
        case ConstraintMask::complement: return "complement";
        case ConstraintMask::full: return "full";
    }
    return "?";
}
inline ConstraintMask parse_constraint_mask(std::string_view s) {
    if (s == "saliency") return ConstraintMask::saliency;
    if (s == "complement") return ConstraintMask::complement;
    if (s == "full") return ConstraintMask::full;
    throw InvalidArgument(concat("unknown constraint mask '", s, "'"));
}
inline std::string_view to_string(ConstraintTokens t) { return t == ConstraintTokens::words ? "words" : "all_but_bos"; }
inline ConstraintTokens parse_constraint_tokens(std::string_view s) {
    if (s == "words") return ConstraintTokens::words;
    if (s == "all_but_bos") return ConstraintTokens::all_but_bos;
    throw InvalidArgument(concat("unknown constraint token set '", s, "'"));
}

inline torch::Tensor constraint_mask(const torch::Tensor& saliency, ConstraintMask kind) {
    switch (kind) {
        case ConstraintMask::saliency: return saliency;
        case ConstraintMask::complement: return 1.0 - saliency;
        case ConstraintMask::full: return torch::ones_like(saliency);
    }
    return saliency;
}

/// Salient attention constraint: mean of |A * M| over every captured entry
/// (layers, heads, batch, selected tokens, spatial positions). `token_mask` [B,L]
/// selects the tokens that count; `mask` is [B,1,H,W] at image resolution.
inline torch::Tensor saliency_attention_loss(const std::vector<AttentionLayer>& layers, const torch::Tensor& mask,
                                             const torch::Tensor& token_mask) {
    if (layers.empty()) throw InvalidArgument("saliency_attention_loss: no attention captured");
    const auto tok = token_mask.to(torch::kFloat32).unsqueeze(1).unsqueeze(1);  // [B,1,1,L]
    torch::Tensor total;
    double count = 0.0;
    const double n_tok = token_mask.to(torch::kFloat64).sum().item<double>();
    for (const auto& layer : layers) {
        const auto m = mask_for_layer(mask, layer.height, layer.width);  // [B,1,HW,1]
        if (m.size(2) != layer.weights.size(2)) throw std::logic_error("constraint mask / attention resolution mismatch");
        auto s = (layer.weights * m * tok).abs().sum();
        total = total.defined() ? total + s : s;
        count += static_cast<double>(layer.weights.size(1)) * static_cast<double>(layer.weights.size(2)) * n_tok;
    }
    if (count == 0.0) return total * 0.0;
    return total / count;
}

inline torch::Tensor saliency_attention_loss(const AttentionStack& stack, const torch::Tensor& mask) {
    return saliency_attention_loss(stack.layers, mask, stack.token_mask);
}

// ---------------------------------------------------------------------------
// Network

inline int64_t groups_for(int64_t ch) { return ch % 8 == 0 ? 8 : (ch % 4 == 0 ? 4 : 1); }

struct CrossAttentionImpl : nn::Module {
    int64_t heads;
    int64_t head_dim;
    nn::GroupNorm norm{nullptr};
    nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, o{nullptr};

    CrossAttentionImpl(int64_t channels, int64_t ctx_dim, int64_t n_heads)
        : heads(n_heads), head_dim(channels / n_heads) {
        if (channels % n_heads != 0) throw InvalidArgument("channels must be divisible by heads");
        norm = register_module("norm", nn::GroupNorm(groups_for(channels), channels));
        q = register_module("q", nn::Linear(nn::LinearOptions(channels, channels).bias(false)));
        k = register_module("k", nn::Linear(nn::LinearOptions(ctx_dim, channels).bias(false)));
        v = register_module("v", nn::Linear(nn::LinearOptions(ctx_dim, channels).bias(false)));
        o = register_module("o", nn::Linear(channels, channels));
    }

    // x [B,C,H,W], ctx [B,L,D], pad [B,L] (true = padding)
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& ctx, const torch::Tensor& pad, AttentionControl* ctl) {
        const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3), L = ctx.size(1);
        auto h = norm(x).flatten(2).transpose(1, 2);                                 // [B,HW,C]
        auto qh = q(h).view({B, H * W, heads, head_dim}).transpose(1, 2);            // [B,h,HW,d]
        auto kh = k(ctx).view({B, L, heads, head_dim}).transpose(1, 2);              // [B,h,L,d]
        auto vh = v(ctx).view({B, L, heads, head_dim}).transpose(1, 2);              // [B,h,L,d]
        auto logits = torch::matmul(qh, kh.transpose(-1, -2)) / std::sqrt(static_cast<double>(head_dim));
        logits = logits.masked_fill(pad.view({B, 1, 1, L}), -std::numeric_limits<float>::infinity());
        auto attn = torch::softmax(logits, -1);                                      // [B,h,HW,L]
        if (ctl) attn = ctl->process(attn, static_cast<int>(H), static_cast<int>(W));
        auto out = torch::matmul(attn, vh).transpose(1, 2).reshape({B, H * W, C});
        out = o(out).transpose(1, 2).view({B, C, H, W});
        return x + out;
    }
};
TORCH_MODULE(CrossAttention);

struct ResBlockImpl : nn::Module {
    nn::GroupNorm n1{nullptr}, n2{nullptr};
    nn::Conv2d c1{nullptr}, c2{nullptr}, skip{nullptr};
    nn::Linear temb{nullptr};

    ResBlockImpl(int64_t in, int64_t out, int64_t temb_dim) {
        n1 = register_module("n1", nn::GroupNorm(groups_for(in), in));
        c1 = register_module("c1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
        temb = register_module("temb", nn::Linear(temb_dim, out));
        n2 = register_module("n2", nn::GroupNorm(groups_for(out), out));
        c2 = register_module("c2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
        if (in != out) skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t) {
        auto h = c1(torch::silu(n1(x)));
        h = h + temb(torch::silu(t)).unsqueeze(-1).unsqueeze(-1);
        h = c2(torch::silu(n2(h)));
        return (skip ? skip(x) : x) + h;
    }
};
TORCH_MODULE(ResBlock);

struct DiffusionConfig {
    int image_size = 64;
    int64_t base_channels = 32;
    std::vector<int64_t> channel_mults = {1, 2, 2, 2};  // one entry per resolution level
    int attention_max_resolution = 16;                   // cross-attention at this size and below
    int64_t heads = 4;
    int64_t text_dim = 64;
    int64_t text_layers = 2;
    bool causal_text = true;
    bool coord_channels = true;
    bool pooled_text = true;  // final-token text embedding added to the timestep embedding
    int timesteps = 1000;
    ScheduleKind schedule = ScheduleKind::linear;

    // Levels run from image_size down to 8x8.
    int levels() const {
        int n = 1;
        for (int s = image_size; s > 8; s /= 2) ++n;
        return n;
    }

    void validate() const {
        if (image_size < 8 || (image_size & (image_size - 1)) != 0)
            throw InvalidArgument("diffusion image_size must be a power of two >= 8");
        if (static_cast<int>(channel_mults.size()) < levels())
            throw InvalidArgument(concat("channel_mults needs ", levels(), " entries for image_size ", image_size));
    }

    nlohmann::json to_json() const {
        return {{"image_size", image_size},   {"base_channels", base_channels},
                {"channel_mults", channel_mults}, {"attention_max_resolution", attention_max_resolution},
                {"heads", heads},             {"text_dim", text_dim},
                {"text_layers", text_layers}, {"causal_text", causal_text},
                {"coord_channels", coord_channels}, {"pooled_text", pooled_text},
                {"timesteps", timesteps},
                {"schedule", to_string(schedule)}};
    }
    static DiffusionConfig from_json(const nlohmann::json& j) {
        DiffusionConfig c;
        c.image_size = j.at("image_size");
        c.base_channels = j.at("base_channels");
        c.channel_mults = j.at("channel_mults").get<std::vector<int64_t>>();
        c.attention_max_resolution = j.at("attention_max_resolution");
        c.heads = j.at("heads");
        c.text_dim = j.at("text_dim");
        c.text_layers = j.at("text_layers");
        c.causal_text = j.at("causal_text");
        c.coord_channels = j.at("coord_channels");
        c.pooled_text = j.at("pooled_text");
        c.timesteps = j.at("timesteps");
        c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
        return c;
    }
};

inline torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
    const int64_t half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
    auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
    return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

/// U-shaped noise predictor. Text reaches the image path only through the
/// cross-attention blocks at resolutions <= attention_max_resolution.
struct UNetImpl : nn::Module {
    DiffusionConfig cfg;
    int64_t temb_dim;
    nn::Linear t1{nullptr}, t2{nullptr}, text_proj{nullptr};
    nn::Conv2d conv_in{nullptr}, conv_out{nullptr};
    nn::GroupNorm norm_out{nullptr};
    nn::ModuleList down_res, down_attn, downsample, up_res, up_attn, upsample;
    ResBlock mid1{nullptr}, mid2{nullptr};
    CrossAttention mid_attn{nullptr};
    std::vector<bool> level_has_attn;

    explicit UNetImpl(DiffusionConfig c) : cfg(std::move(c)) {
        cfg.validate();
        const int64_t base = cfg.base_channels;
        temb_dim = base * 4;
        t1 = register_module("t1", nn::Linear(base, temb_dim));
        t2 = register_module("t2", nn::Linear(temb_dim, temb_dim));
        if (cfg.pooled_text) text_proj = register_module("text_proj", nn::Linear(cfg.text_dim, temb_dim));
        const int64_t in_ch = 3 + (cfg.coord_channels ? 2 : 0);
        conv_in = register_module("conv_in", nn::Conv2d(nn::Conv2dOptions(in_ch, base, 3).padding(1)));

        const int L = cfg.levels();
        down_res = register_module("down_res", nn::ModuleList());
        down_attn = register_module("down_attn", nn::ModuleList());
        downsample = register_module("downsample", nn::ModuleList());
        up_res = register_module("up_res", nn::ModuleList());
        up_attn = register_module("up_attn", nn::ModuleList());
        upsample = register_module("upsample", nn::ModuleList());

        std::vector<int64_t> chs;
        int64_t prev = base;
        int res = cfg.image_size;
        for (int l = 0; l < L; ++l, res /= 2) {
            const int64_t ch = base * cfg.channel_mults[l];
            const bool attn = res <= cfg.attention_max_resolution;
            level_has_attn.push_back(attn);
            down_res->push_back(ResBlock(prev, ch, temb_dim));
            if (attn) down_attn->push_back(CrossAttention(ch, cfg.text_dim, cfg.heads));
            else down_attn->push_back(nn::Identity());
            if (l + 1 < L) downsample->push_back(nn::Conv2d(nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
            chs.push_back(ch);
            prev = ch;
        }
        mid1 = register_module("mid1", ResBlock(prev, prev, temb_dim));
        mid_attn = register_module("mid_attn", CrossAttention(prev, cfg.text_dim, cfg.heads));
        mid2 = register_module("mid2", ResBlock(prev, prev, temb_dim));
        for (int l = L - 1; l >= 0; --l) {
            const int64_t ch = chs[l];
            up_res->push_back(ResBlock(prev + ch, ch, temb_dim));
            if (level_has_attn[l]) up_attn->push_back(CrossAttention(ch, cfg.text_dim, cfg.heads));
            else up_attn->push_back(nn::Identity());
            if (l > 0) upsample->push_back(nn::Conv2d(nn::Conv2dOptions(ch, chs[l - 1], 3).padding(1)));
            prev = l > 0 ? chs[l - 1] : ch;
        }
        norm_out = register_module("norm_out", nn::GroupNorm(groups_for(base), base));
        conv_out = register_module("conv_out", nn::Conv2d(nn::Conv2dOptions(base, 3, 3).padding(1)));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& ctx,
                          const torch::Tensor& pad, AttentionControl* ctl) {
        const int L = cfg.levels();
        auto temb = t2(torch::silu(t1(timestep_embedding(t, cfg.base_channels))));
        if (text_proj) {
            // last non-padding token; with a causal encoder it has seen the whole prompt
            auto last = (~pad).sum(1).sub(1).clamp_min(0);
            auto pooled = ctx.gather(1, last.view({-1, 1, 1}).expand({-1, 1, ctx.size(2)})).squeeze(1);
            temb = temb + text_proj(pooled);
        }
        auto in = x;
        if (cfg.coord_channels) {
            const int64_t B = x.size(0), H = x.size(2), W = x.size(3);
            auto ys = torch::linspace(-1.0, 1.0, H).view({1, 1, H, 1}).expand({B, 1, H, W});
            auto xs = torch::linspace(-1.0, 1.0, W).view({1, 1, 1, W}).expand({B, 1, H, W});
            in = torch::cat({x, xs, ys}, 1);
        }
        auto h = conv_in(in);
        std::vector<torch::Tensor> skips;
        for (int l = 0; l < L; ++l) {
            h = down_res[l]->as<ResBlock>()->forward(h, temb);
            if (level_has_attn[l]) h = down_attn[l]->as<CrossAttention>()->forward(h, ctx, pad, ctl);
            skips.push_back(h);
            if (l + 1 < L) h = downsample[l]->as<nn::Conv2d>()->forward(h);
        }
        h = mid1(h, temb);
        h = mid_attn(h, ctx, pad, ctl);
        h = mid2(h, temb);
        for (int i = 0; i < L; ++i) {
            const int l = L - 1 - i;
            h = up_res[i]->as<ResBlock>()->forward(torch::cat({h, skips[l]}, 1), temb);
            if (level_has_attn[l]) h = up_attn[i]->as<CrossAttention>()->forward(h, ctx, pad, ctl);
            if (l > 0) {
                h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
                h = upsample[i]->as<nn::Conv2d>()->forward(h);
            }
        }
        return conv_out(torch::silu(norm_out(h)));
    }
};
TORCH_MODULE(UNet);

struct DiffusionNetImpl : nn::Module {
    text::TextEncoder text_encoder{nullptr};
    UNet unet{nullptr};

    DiffusionNetImpl(const DiffusionConfig& cfg, int64_t vocab_size, int64_t max_tokens) {
        text_encoder = register_module(
            "text_encoder",
            text::TextEncoder(text::TextEncoderConfig{vocab_size, max_tokens, cfg.text_dim, cfg.heads, cfg.text_layers, cfg.causal_text}));
        unet = register_module("unet", UNet(cfg));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& ids, AttentionControl* ctl) {
        auto ctx = text_encoder(ids);
        return unet(x, t, ctx, ids == text::kPad, ctl);
    }
};
TORCH_MODULE(DiffusionNet);

/// Network, schedule and tokenizer travel together; this is the unit that is
/// checkpointed and sampled from.
struct DiffusionModel {
    DiffusionConfig config;
    text::PromptTokenizer tokenizer;
    NoiseSchedule schedule;
    DiffusionNet net{nullptr};

    DiffusionModel() = default;
    explicit DiffusionModel(DiffusionConfig cfg, text::PromptTokenizer tok = text::PromptTokenizer{})
        : config(std::move(cfg)), tokenizer(std::move(tok)), schedule(make_noise_schedule(config.timesteps, config.schedule)),
          net(DiffusionNet(config, tokenizer.vocab_size(), tokenizer.max_tokens())) {}

    /// Embeddings of a prompt, [L, D]; padding rows are present but never attended.
    torch::Tensor encode_text(const std::string& prompt) {
        torch::NoGradGuard ng;
        auto ids = tokenizer.encode_batch({prompt});
        return net->text_encoder->forward(ids)[0];
    }

    std::string id() const { return parameter_fingerprint(net); }

    void save(const std::filesystem::path& path) const {
        save_checkpoint(net,
                        {"diffusion", 1,
                         {{"config", config.to_json()},
                          {"vocabulary", tokenizer.words()},
                          {"max_tokens", tokenizer.max_tokens()},
                          {"schedule", {{"T", schedule.T}, {"kind", to_string(schedule.kind)}}}}},
                        path);
    }

    static DiffusionModel load(const std::filesystem::path& path) {
        const auto meta = read_checkpoint_meta(path, "diffusion");
        DiffusionModel m(DiffusionConfig::from_json(meta.body.at("config")),
                         text::PromptTokenizer(meta.body.at("vocabulary").get<std::vector<std::string>>(),
                                               meta.body.at("max_tokens").get<int>()));
        load_checkpoint_params(m.net, path);
        m.net->eval();
        return m;
    }
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double gamma = 0.5;
    ConstraintMask mask = ConstraintMask::saliency;
    ConstraintTokens tokens = ConstraintTokens::all_but_bos;
    double lr = 1e-4;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
    double p_uncond = 0.1;
    double grad_clip = 1.0;
    double ema_decay = 0.999;  // 0 disables the weight average
    // Share of samples trained under attention reduction, so reduced regions
    // decode as background. Most get a random box clipped to the non-salient
    // area; a `reduce_full_share` of them reduce the whole canvas and are
    // trained toward the prompt's object-free background when the batch
    // carries one.
    double reduce_prob = 0.0;
    double reduce_full_share = 0.3;
    double beta = 0.01;

    void validate() const {
        if (gamma < 0) throw InvalidArgument("gamma must be >= 0");
        if (batch_size < 1 || epochs < 0) throw InvalidArgument("batch_size >= 1 and epochs >= 0 required");
        if (reduce_prob < 0 || reduce_prob > 1) throw InvalidArgument("reduce_prob must lie in [0,1]");
        if (reduce_full_share < 0 || reduce_full_share > 1) throw InvalidArgument("reduce_full_share must lie in [0,1]");
        if (beta < 0 || beta > 1) throw InvalidArgument("beta must lie in [0,1]");
    }
};

struct TrainStats {
    int64_t step = 0;
    double loss_d = 0.0;
    double loss_c = 0.0;
    double loss_total = 0.0;
    double lr = 0.0;
};

struct TrainBatch {
    torch::Tensor images;       // [B,3,H,W] in [-1,1]
    torch::Tensor ids;          // [B,L]
    torch::Tensor saliency;     // [B,1,H,W] in [0,1]
    torch::Tensor backgrounds;  // [B,3,H,W] in [-1,1], object-free; optional
};

inline torch::Tensor constraint_tokens(const torch::Tensor& ids, ConstraintTokens which) {
    return which == ConstraintTokens::words ? text::word_mask(ids) : (ids != text::kPad) & (ids != text::kBos);
}

// Single logical writer over the model parameters.
class Trainer {
public:
    Trainer(DiffusionModel& model, TrainConfig cfg)
        : model_(model), cfg_(cfg),
          opt_(model.net->parameters(), torch::optim::AdamWOptions(cfg.lr).betas({0.9, 0.999}).weight_decay(0.01)),
          gen_(make_generator(derive_seed(cfg.seed, 101))) {
        cfg_.validate();
        if (cfg_.ema_decay > 0) {
            torch::NoGradGuard ng;
            for (const auto& p : model_.net->parameters()) ema_.push_back(p.detach().clone());
        }
    }

    /// Predicted-noise MSE plus gamma times the attention constraint, captured from
    /// the same forward pass with one uniformly drawn timestep per sample.
    TrainStats step(const TrainBatch& batch) {
        model_.net->train();
        const int64_t B = batch.images.size(0);
        auto t = torch::randint(1, model_.schedule.T + 1, {B}, gen_, torch::kInt64);
        auto noise = torch::randn(batch.images.sizes(), gen_, torch::kFloat32);
        auto x0 = batch.images;
        auto saliency = batch.saliency;
        AttentionControl ctl;
        ctl.capture = AttentionControl::Capture::graph;
        if (cfg_.reduce_prob > 0) {
            auto [box, full] = random_boxes(B, x0.size(2), x0.size(3));
            if (batch.backgrounds.defined()) {
                x0 = x0 * (1 - full) + batch.backgrounds * full;
                saliency = saliency * (1 - full);
            } else {
                box = box + full;
                full = torch::zeros_like(full);
            }
            ctl.reduce_mask = box * (saliency < 0.05).to(torch::kFloat32) + full;
            ctl.beta = cfg_.beta;
        }
        auto x_t = q_sample(x0, t, noise, model_.schedule);

        ctl.begin_pass(0);
        auto eps = model_.net->forward(x_t, t, batch.ids, &ctl);
        auto loss_d = F::mse_loss(eps, noise);
        auto m = constraint_mask(saliency, cfg_.mask);
        auto loss_c = saliency_attention_loss(ctl.captured, m, constraint_tokens(batch.ids, cfg_.tokens));
        auto loss = loss_d + cfg_.gamma * loss_c;

        TrainStats s;
        s.step = ++steps_;
        s.loss_d = loss_d.item<double>();
        s.loss_c = loss_c.item<double>();
        s.loss_total = loss.item<double>();
        s.lr = cfg_.lr;
        if (!std::isfinite(s.loss_total))
            throw DivergenceError(concat("diffusion training diverged at step ", s.step, ": L_d=", s.loss_d,
                                         " L_c=", s.loss_c, " L_total=", s.loss_total));
        opt_.zero_grad();
        loss.backward();
        if (cfg_.grad_clip > 0) torch::nn::utils::clip_grad_norm_(model_.net->parameters(), cfg_.grad_clip);
        opt_.step();
        if (!ema_.empty()) {
            torch::NoGradGuard ng;
            const double d = std::min(cfg_.ema_decay, (1.0 + steps_) / (10.0 + steps_));
            auto params = model_.net->parameters();
            for (std::size_t i = 0; i < params.size(); ++i) ema_[i].mul_(d).add_(params[i].detach(), 1.0 - d);
        }
        return s;
    }

    /// Replaces the live weights with their running average.
    void apply_ema() {
        if (ema_.empty()) return;
        torch::NoGradGuard ng;
        auto params = model_.net->parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(ema_[i]);
    }

    const TrainConfig& config() const { return cfg_; }

private:
    // Per selected sample either a random box or the whole canvas; returned as
    // separate [B,1,H,W] masks.
    std::pair<torch::Tensor, torch::Tensor> random_boxes(int64_t B, int64_t H, int64_t W) {
        auto u = torch::rand({B, 6}, gen_, torch::kFloat64);
        auto box = torch::zeros({B, 1, H, W});
        auto full = torch::zeros({B, 1, H, W});
        for (int64_t b = 0; b < B; ++b) {
            if (u[b][0].item<double>() >= cfg_.reduce_prob) continue;
            if (u[b][5].item<double>() < cfg_.reduce_full_share) {
                full[b].fill_(1.0);
                continue;
            }
            const auto h = static_cast<int64_t>(std::ceil(H * (0.25 + 0.75 * u[b][1].item<double>())));
            const auto w = static_cast<int64_t>(std::ceil(W * (0.25 + 0.75 * u[b][2].item<double>())));
            const auto y = static_cast<int64_t>(u[b][3].item<double>() * static_cast<double>(H - h + 1));
            const auto x = static_cast<int64_t>(u[b][4].item<double>() * static_cast<double>(W - w + 1));
            box[b].slice(1, y, y + h).slice(2, x, x + w).fill_(1.0);
        }
        return {box, full};
    }

    DiffusionModel& model_;
    TrainConfig cfg_;
    torch::optim::AdamW opt_;
    at::Generator gen_;
    std::vector<torch::Tensor> ema_;
    int64_t steps_ = 0;
};

struct TrainingData {
    torch::Tensor images;       // [N,3,H,W] in [-1,1]
    torch::Tensor ids;          // [N,L]
    torch::Tensor saliency;     // [N,1,H,W]
    torch::Tensor backgrounds;  // [N,3,H,W] in [-1,1]; undefined unless every prompt names its background
};

inline TrainingData prepare_training_data(const std::vector<const corpus::BannerRecord*>& recs,
                                          const text::PromptTokenizer& tok, int image_size) {
    std::vector<Image> imgs;
    std::vector<Map2D> maps;
    std::vector<Image> bgs;
    std::vector<std::string> prompts;
    for (const auto* r : recs) {
        imgs.push_back(resize_image(r->image, image_size, image_size));
        maps.push_back(resize_map(r->saliency, image_size, image_size, ResizeMode::area));
        prompts.push_back(r->prompt);
        if (const auto bg = corpus::background_from_prompt(r->prompt); bg && bgs.size() + 1 == imgs.size())
            bgs.push_back(resize_image(corpus::render_background(*bg, r->image.height, r->image.width), image_size, image_size));
    }
    TrainingData td{stack_images(imgs) * 2.0 - 1.0, tok.encode_batch(prompts), stack_maps(maps), {}};
    if (!bgs.empty() && bgs.size() == imgs.size()) td.backgrounds = stack_images(bgs) * 2.0 - 1.0;
    return td;
}

/// Continues training `model` in place for `cfg.epochs` epochs.
inline void fit_diffusion(DiffusionModel& model, const corpus::Corpus& data, const TrainConfig& cfg,
                          const std::function<void(int epoch, const TrainStats&)>& log = {}) {
    const auto train = data.split(corpus::Split::train);
    if (train.empty()) throw InvalidArgument("train_diffusion: corpus has no training records");
    const auto td = prepare_training_data(train, model.tokenizer, model.config.image_size);
    const auto empty_ids = model.tokenizer.encode_batch({""});

    Trainer trainer(model, cfg);
    Rng rng(derive_seed(cfg.seed, 7));
    const auto n = static_cast<std::size_t>(td.images.size(0));
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto e = std::min(n, s + cfg.batch_size);
            auto idx = torch::tensor(std::vector<int64_t>(order.begin() + s, order.begin() + e));
            TrainBatch b{td.images.index_select(0, idx), td.ids.index_select(0, idx).clone(), td.saliency.index_select(0, idx),
                         td.backgrounds.defined() ? td.backgrounds.index_select(0, idx) : torch::Tensor()};
            if (cfg.p_uncond > 0)
                for (int64_t i = 0; i < b.ids.size(0); ++i)
                    if (uniform(rng, 0.0, 1.0) < cfg.p_uncond) b.ids[i].copy_(empty_ids[0]);
            const auto stats = trainer.step(b);
            if (log) log(epoch, stats);
        }
    }
    trainer.apply_ema();
    model.net->eval();
}

inline DiffusionModel train_diffusion(const corpus::Corpus& data, const DiffusionConfig& model_cfg, const TrainConfig& cfg,
                                      const std::function<void(int epoch, const TrainStats&)>& log = {}) {
    torch::manual_seed(cfg.seed);
    DiffusionModel model(model_cfg);
    fit_diffusion(model, data, cfg, log);
    return model;
}

// ---------------------------------------------------------------------------
// Sampling and inversion

struct SampleConfig {
    int steps = 50;
    double eta = 0.0;           // 0: deterministic DDIM, 1: ancestral
    double guidance_scale = 1.0;
    double beta_reduce = 0.01;
    bool clip_x0 = true;
    AttentionControl::Capture capture = AttentionControl::Capture::off;
};

struct SampleResult {
    torch::Tensor images;   // [B,3,H,W] in [0,1]
    AttentionStack attention;
};

namespace detail {

inline torch::Tensor predict_eps(DiffusionModel& model, const torch::Tensor& x, int t, const torch::Tensor& ids,
                                 const torch::Tensor& uncond_ids, double guidance, AttentionControl& ctl) {
    auto tt = torch::full({x.size(0)}, t, torch::kInt64);
    ctl.begin_pass(t);
    auto eps = model.net->forward(x, tt, ids, &ctl);
    if (guidance == 1.0) return eps;
    AttentionControl uc;
    uc.reduce_mask = ctl.reduce_mask;
    uc.beta = ctl.beta;
    auto eps_u = model.net->forward(x, tt, uncond_ids, &uc);
    return eps_u + guidance * (eps - eps_u);
}

inline torch::Tensor initial_noise(const std::vector<std::uint64_t>& seeds, int size) {
    std::vector<torch::Tensor> xs;
    for (auto s : seeds) {
        auto g = make_generator(s);
        xs.push_back(torch::randn({3, size, size}, g, torch::kFloat32));
    }
    return torch::stack(xs);
}

}  // namespace detail

/// DDIM sampling (eta = 0 deterministic). Starts from seeded Gaussian noise, or from
/// `init_latent` when given. `reduce_mask` ([B or 1,1,H,W], 1 = preserve space)
/// applies attention reduction at every cross-attention layer and timestep.
inline SampleResult sample(DiffusionModel& model, const std::vector<std::string>& prompts,
                           const std::vector<std::uint64_t>& seeds, const SampleConfig& cfg,
                           const torch::Tensor& reduce_mask = {}, const torch::Tensor& init_latent = {}) {
    if (prompts.size() != seeds.size()) throw InvalidArgument("sample: one seed per prompt required");
    torch::NoGradGuard ng;
    model.net->eval();
    const int size = model.config.image_size;
    auto ids = model.tokenizer.encode_batch(prompts);
    auto uncond = model.tokenizer.encode_batch(std::vector<std::string>(prompts.size(), ""));
    const auto ts = ddim_timesteps(model.schedule.T, cfg.steps);

    torch::Tensor x = init_latent.defined() ? init_latent.clone() : detail::initial_noise(seeds, size);
    std::vector<at::Generator> gens;
    for (auto s : seeds) gens.push_back(make_generator(derive_seed(s, 0x5eed)));

    AttentionControl ctl;
    ctl.capture = cfg.capture;
    ctl.beta = cfg.beta_reduce;
    if (reduce_mask.defined()) ctl.reduce_mask = reduce_mask.to(torch::kFloat32);

    for (int i = static_cast<int>(ts.size()) - 1; i >= 0; --i) {
        const int t = ts[i];
        const int t_prev = i > 0 ? ts[i - 1] : 0;
        const double ab = model.schedule.alpha_bar(t), ab_prev = model.schedule.alpha_bar(t_prev);
        auto eps = detail::predict_eps(model, x, t, ids, uncond, cfg.guidance_scale, ctl);
        auto x0 = (x - std::sqrt(1 - ab) * eps) / std::sqrt(ab);
        if (cfg.clip_x0) x0 = x0.clamp(-1.0, 1.0);
        double sigma = 0.0;
        if (cfg.eta > 0 && !init_latent.defined())
            sigma = cfg.eta * std::sqrt((1 - ab_prev) / (1 - ab)) * std::sqrt(1 - ab / ab_prev);
        x = std::sqrt(ab_prev) * x0 + std::sqrt(std::max(0.0, 1 - ab_prev - sigma * sigma)) * eps;
        if (sigma > 0 && t_prev > 0) {
            std::vector<torch::Tensor> zs;
            for (auto& g : gens) zs.push_back(torch::randn({3, size, size}, g, torch::kFloat32));
            x = x + sigma * torch::stack(zs);
        }
    }
    SampleResult r;
    r.images = ((x.clamp(-1.0, 1.0) + 1.0) / 2.0).contiguous();
    if (cfg.capture != AttentionControl::Capture::off) r.attention = ctl.finish(ids);
    return r;
}

/// Deterministic DDIM inversion: walks an image ([B,3,H,W] in [0,1]) up the
/// sampling timestep grid to the initial latent that regenerates it.
inline torch::Tensor ddim_invert(DiffusionModel& model, const torch::Tensor& images, const std::vector<std::string>& prompts,
                                 int steps, double guidance_scale = 1.0) {
    if (steps < 2) throw InvalidArgument(concat("ddim_invert needs at least 2 steps, got ", steps));
    if (images.size(0) != static_cast<int64_t>(prompts.size())) throw InvalidArgument("ddim_invert: one prompt per image");
    torch::NoGradGuard ng;
    model.net->eval();
    auto ids = model.tokenizer.encode_batch(prompts);
    auto uncond = model.tokenizer.encode_batch(std::vector<std::string>(prompts.size(), ""));
    const auto ts = ddim_timesteps(model.schedule.T, steps);
    auto x = images.to(torch::kFloat32) * 2.0 - 1.0;
    AttentionControl ctl;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = i > 0 ? ts[i - 1] : 0;
        const double ab = model.schedule.alpha_bar(t), ab_prev = model.schedule.alpha_bar(t_prev);
        auto eps = detail::predict_eps(model, x, t, ids, uncond, guidance_scale, ctl);
        auto x0 = (x - std::sqrt(1 - ab_prev) * eps) / std::sqrt(ab_prev);
        x = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
    }
    return x;
}

}  // namespace bannergen::diffusion
