// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "bannergen/config.hpp"
#include "bannergen/report.hpp"
#include "oracle.hpp"

using namespace bannergen;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
    oracle::TempDir dir("cfg");
    std::ofstream(dir.path / "empty.json") << "\n";
    EXPECT_EQ(load_config(dir.path / "empty.json").values(), RunConfig().values());
    EXPECT_EQ(load_config(std::nullopt).values(), RunConfig().values());
}

TEST(Config, FlagOverridesFile) {
    oracle::TempDir dir("cfg");
    std::ofstream(dir.path / "c.json") << R"({"gamma": 0.25, "top_k": 3})";
    const auto c = load_config(dir.path / "c.json", {{"gamma", 0.5}});
    EXPECT_EQ(c.get<double>("gamma"), 0.5);
    EXPECT_EQ(c.get<int>("top_k"), 3);
    EXPECT_EQ(c.diffusion_train_config().gamma, 0.5);
}

TEST(Config, MisspelledKeyRejected) {
    oracle::TempDir dir("cfg");
    std::ofstream(dir.path / "c.json") << R"({"gama": 0.25})";
    try {
        load_config(dir.path / "c.json");
        FAIL() << "expected rejection";
    } catch (const SchemaViolation& e) {
        EXPECT_NE(std::string(e.what()).find("gama"), std::string::npos);
    }
}

TEST(Config, TypeMismatchNamesKeyAndType) {
    RunConfig c;
    try {
        c.set("sample_steps", "fifty");
        FAIL() << "expected rejection";
    } catch (const SchemaViolation& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("sample_steps"), std::string::npos);
        EXPECT_NE(what.find("integer"), std::string::npos);
    }
    EXPECT_THROW(c.set("diffusion_mults", nlohmann::json::array({1, "2"})), SchemaViolation);
    c.set("gamma", 1);
    EXPECT_EQ(c.get<double>("gamma"), 1.0);
}

TEST(Config, MalformedFileAndMissingFile) {
    oracle::TempDir dir("cfg");
    std::ofstream(dir.path / "bad.json") << "{gamma: ";
    EXPECT_THROW(load_config(dir.path / "bad.json"), SchemaViolation);
    EXPECT_THROW(load_config(dir.path / "absent.json"), FileNotFound);
    std::ofstream(dir.path / "arr.json") << "[1, 2]";
    EXPECT_THROW(load_config(dir.path / "arr.json"), SchemaViolation);
}

TEST(Config, ModuleConfigsFollowValues) {
    const auto c = load_config(std::nullopt, {{"canvas_size", 48}, {"layout_bins", 16}, {"schedule", "cosine"}, {"greedy", true}});
    EXPECT_EQ(c.corpus_config().height, 48);
    EXPECT_EQ(c.layout_config().bins, 16);
    EXPECT_EQ(c.diffusion_config().schedule, diffusion::ScheduleKind::cosine);
    EXPECT_TRUE(c.decode_config().greedy);
}

TEST(Config, HomeFromEnvironment) {
    ::setenv(kHomeEnv, "/tmp/bannergen_home_test", 1);
    EXPECT_EQ(default_home(), std::filesystem::path("/tmp/bannergen_home_test"));
    EXPECT_EQ(RunConfig().home(), std::filesystem::path("/tmp/bannergen_home_test"));
    ::unsetenv(kHomeEnv);
}

TEST(Report, SweepGivesOneCurveWithFivePoints) {
    oracle::TempDir dir("rep");
    metrics::MetricReport r;
    r.meta["run"] = "sweep";
    r.series.push_back({"salient ratio vs mask ratio", "curve", {0, 0.25, 0.5, 0.75, 1}, {0.3, 0.25, 0.2, 0.18, 0.1}, "mask ratio", "sr"});
    const auto written = report::emit_report(r, dir.path);
    EXPECT_EQ(written.size(), 3u);
    const auto svg = slurp(dir.path / "salient_ratio_vs_mask_ratio.svg");
    std::size_t points = 0;
    for (auto p = svg.find("class=\"point\""); p != std::string::npos; p = svg.find("class=\"point\"", p + 1)) ++points;
    EXPECT_EQ(points, 5u);
}

TEST(Report, RerunIsByteIdentical) {
    oracle::TempDir a("rep_a"), b("rep_b");
    metrics::MetricReport r;
    for (double v : {0.1, 0.7, 0.3}) r.add("cosine", v);
    r.series.push_back({"hist", "histogram", {0, 0.5}, {1, 2}, "x", "n"});
    report::emit_report(r, a.path);
    report::emit_report(r, b.path);
    EXPECT_EQ(slurp(a.path / "report.json"), slurp(b.path / "report.json"));
    EXPECT_EQ(slurp(a.path / "hist.svg"), slurp(b.path / "hist.svg"));
}

TEST(Report, EmptyMetricsWriteMetadataOnly) {
    oracle::TempDir dir("rep");
    metrics::MetricReport r;
    r.meta["note"] = "nothing measured";
    const auto written = report::emit_report(r, dir.path);
    EXPECT_EQ(written.size(), 2u);
    EXPECT_NE(slurp(dir.path / "summary.md").find("nothing measured"), std::string::npos);
}

TEST(Report, UnwritablePathFailsDescriptively) {
    oracle::TempDir dir("rep");
    std::ofstream(dir.path / "file") << "x";
    try {
        report::emit_report(metrics::MetricReport{}, dir.path / "file" / "sub");
        FAIL() << "expected failure";
    } catch (const RuntimeFailure& e) {
        EXPECT_NE(std::string(e.what()).find("sub"), std::string::npos);
    }
}

TEST(Report, UnknownSeriesKindRejected) {
    oracle::TempDir dir("rep");
    metrics::MetricReport r;
    r.series.push_back({"x", "pie", {}, {}, "", ""});
    EXPECT_THROW(report::emit_report(r, dir.path), InvalidArgument);
}
