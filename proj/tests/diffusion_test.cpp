// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "bannergen/diffusion.hpp"
#include "oracle.hpp"
#include "tiny_models.hpp"

using namespace bannergen;
using namespace bannergen::diffusion;

namespace {

const std::string kPrompt = "red circle on the left with flat white background";

AttentionStack stack_of(std::vector<torch::Tensor> layers, int h, int w, const torch::Tensor& tokens) {
    AttentionStack s;
    for (auto& l : layers) s.layers.push_back({h, w, -1, l});
    s.token_mask = tokens;
    return s;
}

TrainBatch batch_from(DiffusionModel& m, int n, std::uint64_t seed) {
    std::vector<const corpus::BannerRecord*> recs;
    std::vector<corpus::BannerRecord> store;
    for (int i = 0; i < n; ++i) store.push_back(corpus::synth_record(derive_seed(seed, i), 32, 32));
    for (const auto& r : store) recs.push_back(&r);
    auto td = prepare_training_data(recs, m.tokenizer, m.config.image_size);
    return {td.images, td.ids, td.saliency, td.backgrounds};
}

}  // namespace

TEST(NoiseSchedule, LinearFirstStep) {
    const auto s = make_noise_schedule(1000, ScheduleKind::linear, 1e-4, 0.02);
    EXPECT_NEAR(s.alpha_bar(1), 0.9999, 1e-12);
    EXPECT_EQ(s.alpha_bar(0), 1.0);
    EXPECT_NEAR(s.beta(1000), 0.02, 1e-12);
}

TEST(NoiseSchedule, StrictlyDecreasing) {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine})
        for (int T : {1, 2, 10, 1000}) {
            const auto s = make_noise_schedule(T, kind);
            for (int t = 1; t <= T; ++t) {
                EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
                EXPECT_GT(s.beta(t), 0.0);
                EXPECT_LT(s.beta(t), 1.0);
            }
        }
}

TEST(NoiseSchedule, SingleStep) {
    const auto s = make_noise_schedule(1, ScheduleKind::linear, 3e-3);
    ASSERT_EQ(s.betas.size(), 1u);
    EXPECT_NEAR(s.alpha_bar(1), 1 - 3e-3, 1e-15);
    EXPECT_THROW(make_noise_schedule(0), InvalidArgument);
}

TEST(QSample, ClosedFormCases) {
    EXPECT_EQ(q_sample(0.7, 1.0, 5.0), 0.7);
    EXPECT_EQ(q_sample(0.7, 0.0, 5.0), 5.0);
    EXPECT_EQ(q_sample(1.0, 0.25, 0.0), 0.5);
}

TEST(QSample, BatchedMatchesScalar) {
    const auto s = make_noise_schedule(50);
    auto x0 = torch::rand({3, 2, 2}, torch::kFloat64), noise = torch::randn({3, 2, 2}, torch::kFloat64);
    auto t = torch::tensor(std::vector<int64_t>{1, 25, 50});
    auto xt = q_sample(x0, t, noise, s);
    for (int b = 0; b < 3; ++b) {
        const int tt = static_cast<int>(t[b].item<int64_t>());
        EXPECT_NEAR(xt[b][1][0].item<double>(), q_sample(x0[b][1][0].item<double>(), s.alpha_bar(tt), noise[b][1][0].item<double>()), 1e-12);
    }
    EXPECT_THROW(q_sample(x0, t, torch::randn({3, 2, 3}), s), InvalidArgument);
    EXPECT_THROW(q_sample(x0, torch::tensor(std::vector<int64_t>{0, 1, 2}), noise, s), InvalidArgument);
}

TEST(DdimTimesteps, EvenStride) {
    EXPECT_EQ(ddim_timesteps(1000, 4), (std::vector<int>{1, 251, 501, 751}));
    EXPECT_THROW(ddim_timesteps(10, 0), InvalidArgument);
    EXPECT_THROW(ddim_timesteps(10, 11), InvalidArgument);
}

TEST(ReduceAttention, FullMaskScalesEveryWeight) {
    auto w = torch::rand({2, 3, 16, 5}, torch::kFloat64);
    auto r = reduce_attention(w, torch::ones({1, 1, 16, 1}, torch::kFloat64), 0.01);
    EXPECT_TRUE(torch::equal(r, w * 0.01));
}

TEST(ReduceAttention, EmptyMaskIsIdentity) {
    auto w = torch::rand({2, 3, 16, 5}, torch::kFloat64);
    EXPECT_TRUE(torch::equal(reduce_attention(w, torch::zeros({1, 1, 16, 1}, torch::kFloat64), 0.01), w));
}

TEST(ReduceAttention, MixedMaskHandValues) {
    auto w = torch::tensor(std::vector<double>{0.4, 0.6}, torch::kFloat64).view({1, 1, 2, 1});
    auto m = torch::tensor(std::vector<double>{1.0, 0.0}, torch::kFloat64).view({1, 1, 2, 1});
    auto r = reduce_attention(w, m, 0.01);
    EXPECT_DOUBLE_EQ(r[0][0][0][0].item<double>(), 0.004);
    EXPECT_DOUBLE_EQ(r[0][0][1][0].item<double>(), 0.6);
    EXPECT_THROW(reduce_attention(w, m, 1.5), InvalidArgument);
}

TEST(AggregateAttention, UniformAttentionIsConstant) {
    auto tok = torch::tensor(std::vector<int64_t>{1, 1, 1}).view({1, 3}).to(torch::kBool);
    auto s = stack_of({torch::full({1, 2, 16, 3}, 1.0 / 3), torch::full({1, 2, 4, 3}, 1.0 / 3)}, 4, 4, tok);
    s.layers[1].height = s.layers[1].width = 2;
    auto a = aggregate_attention(s, 4, 4);
    EXPECT_TRUE(torch::allclose(a, torch::ones({1, 4, 4})));
}

TEST(AggregateAttention, SingleLayerHeadTokenIsMaxNormalized) {
    auto w = torch::rand({1, 1, 9, 1});
    auto tok = torch::ones({1, 1}, torch::kBool);
    auto a = aggregate_attention(stack_of({w}, 3, 3, tok), 3, 3);
    EXPECT_TRUE(torch::allclose(a, (w / w.max()).view({1, 3, 3})));
}

TEST(AggregateAttention, DisjointOneHotLayersAverage) {
    auto a = torch::zeros({1, 1, 4, 1}), b = torch::zeros({1, 1, 4, 1});
    a[0][0][0][0] = 1.0;
    b[0][0][3][0] = 1.0;
    auto tok = torch::ones({1, 1}, torch::kBool);
    auto s = stack_of({a, b}, 2, 2, tok);
    auto out = aggregate_attention(s, 2, 2);
    // each cell holds 0.5 before normalization, so both become 1
    EXPECT_FLOAT_EQ(out[0][0][0].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(out[0][1][1].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(out[0][0][1].item<float>(), 0.0f);
    EXPECT_FLOAT_EQ(out.sum().item<float>(), 2.0f);
    EXPECT_THROW(aggregate_attention(AttentionStack{}, 2, 2), InvalidArgument);
}

TEST(ConstraintLoss, ZeroMaskGivesZero) {
    auto tok = torch::ones({2, 4}, torch::kBool);
    auto s = stack_of({torch::full({2, 2, 16, 4}, 0.25)}, 4, 4, tok);
    EXPECT_EQ(saliency_attention_loss(s, torch::zeros({2, 1, 8, 8})).item<double>(), 0.0);
}

TEST(ConstraintLoss, UniformRowsOverKTokens) {
    for (int k : {1, 3, 7}) {
        auto tok = torch::ones({1, k}, torch::kBool);
        auto s = stack_of({torch::full({1, 2, 16, k}, 1.0 / k), torch::full({1, 2, 64, k}, 1.0 / k)}, 4, 4, tok);
        s.layers[1].height = s.layers[1].width = 8;
        EXPECT_NEAR(saliency_attention_loss(s, torch::ones({1, 1, 8, 8})).item<double>(), 1.0 / k, 1e-7);
    }
}

TEST(ConstraintLoss, OnlySelectedTokensCount) {
    auto w = torch::zeros({1, 1, 4, 3});
    w.select(3, 0).fill_(1.0);  // all mass on an unselected token
    auto tok = torch::tensor(std::vector<int64_t>{0, 1, 1}).view({1, 3}).to(torch::kBool);
    EXPECT_EQ(saliency_attention_loss(stack_of({w}, 2, 2, tok), torch::ones({1, 1, 2, 2})).item<double>(), 0.0);
}

TEST(Tokenizer, EncodingAndErrors) {
    text::PromptTokenizer tok;
    const auto empty = tok.encode("");
    EXPECT_EQ(empty[0], text::kBos);
    EXPECT_EQ(empty[1], text::kEos);
    EXPECT_EQ(empty[2], text::kPad);
    try {
        tok.encode("red zeppelin");
        FAIL() << "expected a tokenizer error";
    } catch (const TokenizerError& e) {
        EXPECT_NE(std::string(e.what()).find("zeppelin"), std::string::npos);
    }
}

TEST(TextEncoder, DeterministicAndInjective) {
    auto m = tiny::diffusion();
    const auto a = m.encode_text(kPrompt), b = m.encode_text(kPrompt);
    EXPECT_TRUE(torch::equal(a, b));
    const auto c = m.encode_text("blue circle on the left with flat white background");
    EXPECT_FALSE(torch::allclose(a, c));
    EXPECT_TRUE(torch::isfinite(m.encode_text("")).all().item<bool>());
}

TEST(TextEncoder, CausalBosIgnoresPrompt) {
    auto m = tiny::diffusion();
    const auto a = m.encode_text(kPrompt), b = m.encode_text("green blob on the top with texture mint background");
    EXPECT_TRUE(torch::allclose(a[0], b[0]));
}

TEST(Capture, RowsSumToOneBeforeReduction) {
    auto m = tiny::diffusion();
    AttentionControl ctl;
    ctl.capture = AttentionControl::Capture::graph;
    torch::NoGradGuard ng;
    auto ids = m.tokenizer.encode_batch({kPrompt, ""});
    m.net->forward(torch::randn({2, 3, 16, 16}), torch::tensor(std::vector<int64_t>{5, 80}), ids, &ctl);
    ASSERT_FALSE(ctl.captured.empty());
    for (const auto& l : ctl.captured) {
        EXPECT_EQ(l.weights.size(2), l.height * l.width);
        EXPECT_TRUE(torch::allclose(l.weights.sum(-1), torch::ones_like(l.weights.sum(-1)), 0, 1e-5));
        EXPECT_GE(l.weights.min().item<float>(), 0.0f);
    }
}

TEST(Capture, SupersetMaskDoesNotIncreaseMaskedMass) {
    auto m = tiny::diffusion();
    auto ids = m.tokenizer.encode_batch({kPrompt});
    auto x = torch::randn({1, 3, 16, 16});
    auto t = torch::tensor(std::vector<int64_t>{40});
    auto inner = torch::zeros({1, 1, 16, 16});
    inner.slice(2, 0, 8).slice(3, 0, 8).fill_(1.0);
    auto outer = torch::zeros({1, 1, 16, 16});
    outer.slice(2, 0, 12).fill_(1.0);
    auto masked_mass = [&](const torch::Tensor& mask) {
        AttentionControl ctl;
        ctl.capture = AttentionControl::Capture::per_step;
        if (mask.defined()) ctl.reduce_mask = mask;
        torch::NoGradGuard ng;
        m.net->forward(x, t, ids, &ctl);
        double mass = 0;
        for (const auto& l : ctl.captured) mass += (l.weights * mask_for_layer(inner, l.height, l.width)).sum().item<double>();
        return mass;
    };
    const double none = masked_mass({}), small = masked_mass(inner), big = masked_mass(outer);
    EXPECT_LT(small, none);
    EXPECT_LE(big, small * (1 + 1e-5));
}

TEST(Trainer, LossBookkeepingEveryStep) {
    auto m = tiny::diffusion();
    TrainConfig cfg;
    cfg.gamma = 0.5;
    cfg.batch_size = 4;
    Trainer tr(m, cfg);
    const auto b = batch_from(m, 4, 1);
    for (int i = 0; i < 10; ++i) {
        const auto s = tr.step(b);
        EXPECT_EQ(s.step, i + 1);
        EXPECT_GE(s.loss_d, 0.0);
        EXPECT_GE(s.loss_c, 0.0);
        EXPECT_NEAR(s.loss_total, s.loss_d + 0.5 * s.loss_c, 1e-6);
    }
}

TEST(Trainer, GammaZeroTotalIsDenoisingLoss) {
    auto m = tiny::diffusion();
    TrainConfig cfg;
    cfg.gamma = 0.0;
    Trainer tr(m, cfg);
    const auto s = tr.step(batch_from(m, 2, 2));
    EXPECT_NEAR(s.loss_total, s.loss_d, 1e-7);
    EXPECT_GT(s.loss_c, 0.0);
}

TEST(Trainer, DenoisingLossDropsWithTraining) {
    auto m = tiny::diffusion(4);
    const auto b = batch_from(m, 8, 3);
    auto eval_loss = [&] {
        torch::NoGradGuard ng;
        m.net->eval();
        auto g = make_generator(77);
        auto t = torch::randint(1, m.schedule.T + 1, {b.images.size(0)}, g, torch::kInt64);
        auto noise = torch::randn(b.images.sizes(), g, torch::kFloat32);
        return torch::mse_loss(m.net->forward(q_sample(b.images, t, noise, m.schedule), t, b.ids, nullptr), noise).item<double>();
    };
    const double before = eval_loss();
    TrainConfig cfg;
    cfg.lr = 2e-3;
    cfg.ema_decay = 0;
    Trainer tr(m, cfg);
    for (int i = 0; i < 40; ++i) tr.step(b);
    EXPECT_LT(eval_loss(), before);
}

TEST(Trainer, NegativeGammaRejected) {
    auto m = tiny::diffusion();
    TrainConfig cfg;
    cfg.gamma = -1;
    EXPECT_THROW(Trainer(m, cfg), InvalidArgument);
}

TEST(Sampling, SameSeedIsBitIdentical) {
    auto m = tiny::diffusion();
    SampleConfig sc;
    sc.steps = 5;
    const auto a = sample(m, {kPrompt, kPrompt}, {1, 2}, sc).images;
    const auto b = sample(m, {kPrompt, kPrompt}, {1, 2}, sc).images;
    EXPECT_TRUE(torch::equal(a, b));
    EXPECT_FALSE(torch::equal(a[0], a[1]));
    EXPECT_TRUE(torch::isfinite(a).all().item<bool>());
    EXPECT_GE(a.min().item<float>(), 0.0f);
    EXPECT_LE(a.max().item<float>(), 1.0f);
    EXPECT_EQ(a.sizes(), (std::vector<int64_t>{2, 3, 16, 16}));
}

TEST(Sampling, GuidedAndStochasticStayInRange) {
    auto m = tiny::diffusion();
    SampleConfig sc;
    sc.steps = 4;
    sc.guidance_scale = 3.0;
    sc.eta = 1.0;
    const auto a = sample(m, {kPrompt}, {5}, sc).images;
    EXPECT_TRUE(torch::equal(a, sample(m, {kPrompt}, {5}, sc).images));
    EXPECT_GE(a.min().item<float>(), 0.0f);
    EXPECT_LE(a.max().item<float>(), 1.0f);
}

TEST(Sampling, MeanCaptureAveragesOverSteps) {
    auto m = tiny::diffusion();
    SampleConfig sc;
    sc.steps = 3;
    sc.capture = AttentionControl::Capture::mean;
    const auto r = sample(m, {kPrompt}, {1}, sc);
    ASSERT_FALSE(r.attention.empty());
    for (const auto& l : r.attention.layers) {
        auto rows = l.weights.sum(-1);
        EXPECT_TRUE(torch::allclose(rows, torch::ones_like(rows), 0, 1e-5));
    }
    EXPECT_EQ(aggregate_attention(r.attention, 16, 16).sizes(), (std::vector<int64_t>{1, 16, 16}));
}

TEST(Sampling, OutOfVocabularyPromptRejected) {
    auto m = tiny::diffusion();
    EXPECT_THROW(sample(m, {"red spaceship"}, {1}, SampleConfig{}), TokenizerError);
    EXPECT_THROW(sample(m, {kPrompt}, {1, 2}, SampleConfig{}), InvalidArgument);
}

TEST(Inversion, NeedsTwoSteps) {
    auto m = tiny::diffusion();
    EXPECT_THROW(ddim_invert(m, torch::rand({1, 3, 16, 16}), {kPrompt}, 1), InvalidArgument);
    EXPECT_EQ(ddim_invert(m, torch::rand({1, 3, 16, 16}), {kPrompt}, 2).sizes(), (std::vector<int64_t>{1, 3, 16, 16}));
}

TEST(Checkpoint, SaveLoadRoundTrip) {
    oracle::TempDir dir("diff");
    auto m = tiny::diffusion(9);
    m.save(dir.path / "m.pt");
    auto back = DiffusionModel::load(dir.path / "m.pt");
    EXPECT_EQ(back.id(), m.id());
    EXPECT_EQ(back.config.to_json(), m.config.to_json());
    SampleConfig sc;
    sc.steps = 3;
    EXPECT_TRUE(torch::equal(sample(m, {kPrompt}, {3}, sc).images, sample(back, {kPrompt}, {3}, sc).images));
    EXPECT_THROW(DiffusionModel::load(dir.path / "nope.pt"), FileNotFound);
}

TEST(DiffusionConfig, ValidatesShape) {
    auto c = tiny::diffusion_config();
    c.image_size = 24;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = tiny::diffusion_config();
    c.channel_mults = {1};
    EXPECT_THROW(c.validate(), InvalidArgument);
}
