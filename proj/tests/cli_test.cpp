// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include <gtest/gtest.h>

#include "oracle.hpp"

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

Outcome run(const std::string& args) {
    const std::string cmd = std::string(BANNERGEN_CLI) + " " + args + " 2>&1";
    Outcome o;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return o;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) o.output += buf.data();
    const int status = ::pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

const std::vector<std::string> kCommands = {
    "corpus build",  "corpus stats",    "train saliency", "train diffusion", "train layout",    "train features",  "generate",
    "layout generate", "run generate", "run refine",     "run deck",        "eval background", "eval layout",     "analyze attention",
};

}  // namespace

TEST(Cli, HelpOnEverySubcommand) {
    const auto top = run("--help");
    EXPECT_EQ(top.code, 0);
    EXPECT_NE(top.output.find("corpus"), std::string::npos);
    for (const auto& c : kCommands) {
        const auto o = run(c + " --help");
        EXPECT_EQ(o.code, 0) << c;
        EXPECT_NE(o.output.find("Usage"), std::string::npos) << c << ": " << o.output;
    }
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
    const auto o = run("frobnicate");
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.output.find("frobnicate"), std::string::npos) << o.output;
    EXPECT_EQ(run("").code, 1);
}

TEST(Cli, UnknownFlagNamed) {
    const auto o = run("corpus build --n 3 --colour red");
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.output.find("--colour"), std::string::npos) << o.output;
}

TEST(Cli, MalformedInvocationsExitOne) {
    oracle::TempDir dir("cli_bad");
    std::ofstream(dir.path / "typo.json") << R"({"gama": 1})";
    const std::vector<std::string> bad = {
        "corpus",
        "corpus build",
        "corpus build --n -4",
        "corpus build --n many",
        "corpus build --n 3 --seed abc",
        "train",
        "generate --prompt x",
        "run deck --prompt",
        "eval layout",
        "corpus build --n 3 --out " + (dir.path / "c").string() + " --config " + (dir.path / "typo.json").string(),
        "generate --prompt 'red circle' --out x.png --steps 0.5",
    };
    for (const auto& args : bad) EXPECT_EQ(run(args).code, 1) << args;
}

TEST(Cli, CorpusBuildHappyPath) {
    oracle::TempDir dir("cli");
    const auto o = run("corpus build --n 100 --out " + (dir.path / "d").string() + " --seed 1 --size 32");
    ASSERT_EQ(o.code, 0) << o.output;
    EXPECT_TRUE(std::filesystem::exists(dir.path / "d" / "manifest.json"));
    const auto s = run("corpus stats --dir " + (dir.path / "d").string());
    EXPECT_EQ(s.code, 0) << s.output;
    EXPECT_NE(s.output.find("\"records\": 100"), std::string::npos) << s.output;
}

TEST(Cli, HomeEnvironmentSuppliesDefaultPaths) {
    oracle::TempDir dir("cli_home");
    const auto o = run("corpus build --n 5 --size 32 --home " + dir.path.string());
    ASSERT_EQ(o.code, 0) << o.output;
    EXPECT_TRUE(std::filesystem::exists(dir.path / "corpus" / "manifest.json"));
    const auto env = run("corpus stats");  // falls back to ./bannergen_home or $DESIGEN_HOME
    EXPECT_NE(env.code, 0);
    const std::string with_env = "DESIGEN_HOME=" + dir.path.string() + " " + BANNERGEN_CLI + " corpus stats 2>&1";
    EXPECT_EQ(std::system(with_env.c_str()), 0);
}

TEST(Cli, MissingCheckpointIsDescriptive) {
    oracle::TempDir dir("cli_ckpt");
    const auto o = run("generate --prompt 'red circle on the left with flat white background' --out " + (dir.path / "x.png").string() +
                       " --ckpt " + (dir.path / "nope.pt").string());
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("nope.pt"), std::string::npos) << o.output;
}
