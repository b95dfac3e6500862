// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "bannergen/features.hpp"
#include "oracle.hpp"

using namespace bannergen;
using namespace bannergen::features;

TEST(FdLite, IdenticalSetsGiveZero) {
    torch::manual_seed(0);
    auto a = torch::randn({200, 16}, torch::kFloat64);
    EXPECT_NEAR(fd_lite(a, a), 0.0, 1e-6);
}

TEST(FdLite, MeanShiftClosedForm) {
    torch::manual_seed(1);
    auto a = torch::randn({300, 8}, torch::kFloat64);
    auto d = torch::linspace(-1, 2, 8, torch::kFloat64);
    EXPECT_NEAR(fd_lite(a, a + d), d.pow(2).sum().item<double>(), 1e-6);
}

TEST(FdLite, ScaledCovarianceClosedForm) {
    // N(0, I) vs N(0, 4I) in d dims: tr(I) + tr(4I) - 2 tr(2I) = d
    auto eye = torch::eye(6, torch::kFloat64);
    auto a = torch::cat({eye, -eye}) * std::sqrt(6.0);
    EXPECT_NEAR(fd_lite(a, a * 2, 0.0), 6.0 * 12.0 / 11.0, 1e-9);
}

TEST(FdLite, SymmetricAndNonNegative) {
    torch::manual_seed(2);
    for (int i = 0; i < 10; ++i) {
        auto a = torch::randn({50, 5}, torch::kFloat64) * (1 + i);
        auto b = torch::rand({70, 5}, torch::kFloat64) + i * 0.1;
        const double ab = fd_lite(a, b), ba = fd_lite(b, a);
        EXPECT_NEAR(ab, ba, 1e-6);
        EXPECT_GE(ab, -1e-6);
    }
}

TEST(FdLite, RejectsDegenerateInput) {
    EXPECT_THROW(fd_lite(torch::zeros({1, 3}), torch::zeros({5, 3})), InvalidArgument);
    EXPECT_THROW(fd_lite(torch::zeros({4, 3}), torch::zeros({5, 2})), InvalidArgument);
}

TEST(SqrtmPsd, SquaresBack) {
    torch::manual_seed(3);
    auto x = torch::randn({6, 6}, torch::kFloat64);
    auto m = torch::matmul(x, x.t());
    auto s = sqrtm_psd(m);
    EXPECT_TRUE(torch::allclose(torch::matmul(s, s), m, 1e-8, 1e-8));
}

TEST(Extractor, DeterministicFixedDimension) {
    corpus::Corpus c;
    for (int i = 0; i < 16; ++i) {
        auto r = corpus::synth_record(i, 32, 32);
        r.split = corpus::Split::train;
        c.records.push_back(std::move(r));
    }
    ExtractorConfig cfg;
    cfg.image_size = 32;
    cfg.dim = 12;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    const auto fx = train_extractor(c, cfg);
    std::vector<Image> imgs{c.records[0].image, c.records[1].image};
    const auto a = fx.embed(imgs), b = fx.embed(imgs);
    EXPECT_EQ(a.sizes(), (std::vector<int64_t>{2, 12}));
    EXPECT_EQ(a.dtype(), torch::kFloat64);
    EXPECT_TRUE(torch::equal(a, b));

    oracle::TempDir dir("fx");
    fx.save(dir.path / "f.pt");
    const auto back = FeatureExtractor::load(dir.path / "f.pt");
    EXPECT_TRUE(torch::equal(back.embed(imgs), a));
    EXPECT_EQ(back.id(), fx.id());
}
