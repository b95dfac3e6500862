// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "bannergen/config.hpp"
#include "bannergen/evaluate.hpp"
#include "bannergen/image_io.hpp"
#include "bannergen/report.hpp"

namespace bg = bannergen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
    std::optional<std::string> config_path;
    std::optional<std::string> home;
    json overrides = json::object();

    bg::RunConfig config() const {
        auto o = overrides;
        if (home) o["home"] = *home;
        return bg::load_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, o);
    }
};

void add_common(CLI::App* sub, Context& ctx) {
    sub->add_option_function<std::string>("--config", [&ctx](const std::string& v) { ctx.config_path = v; },
                                          "JSON key/value configuration file");
    sub->add_option_function<std::string>("--home", [&ctx](const std::string& v) { ctx.home = v; },
                                          "artifact root (default: $DESIGEN_HOME)");
}

template <typename T>
void add_key(CLI::App* sub, Context& ctx, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<T>(flag, [&ctx, key](const T& v) { ctx.overrides[key] = v; }, help);
}

fs::path or_home(const std::optional<std::string>& p, const bg::RunConfig& cfg, const char* name) {
    return p ? fs::path(*p) : cfg.home() / name;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw bg::RuntimeFailure(bg::concat("cannot write '", path.string(), "'"));
    out << j.dump(2) << "\n";
}

// Report path "x/y.json": JSON at that path, plots alongside it.
void emit(const bg::metrics::MetricReport& rep, const fs::path& report) {
    const auto dir = report.has_parent_path() ? report.parent_path() : fs::path(".");
    const auto name = report.extension() == ".json" ? report.filename().string() : "report.json";
    const auto out_dir = report.extension() == ".json" ? dir : report;
    for (const auto& p : bg::report::emit_report(rep, out_dir, name)) std::cout << "wrote " << p.string() << "\n";
}

bg::corpus::Corpus open_corpus(const fs::path& dir) {
    std::cout << "loading corpus " << dir.string() << "\n";
    return bg::corpus::load_corpus(dir);
}

std::optional<bg::RegionMask> read_mask(const std::string& arg) {
    if (arg.empty() || arg == "none") return std::nullopt;
    return bg::RegionMask{bg::io::read_gray(arg)};
}

std::string join(const std::vector<bg::Category>& spec) {
    std::string s;
    for (auto c : spec) s += (s.empty() ? "" : ",") + std::string(bg::to_string(c));
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    bg::configure_torch(1);
    CLI::App app{"Background and layout generation for graphic design templates"};
    app.require_subcommand(1);
    Context ctx;
    std::function<void()> action;

    // ---- corpus
    auto* corpus = app.add_subcommand("corpus", "build or inspect a synthetic banner corpus");
    corpus->require_subcommand(1);
    {
        auto* build = corpus->add_subcommand("build", "render, filter and split a corpus");
        add_common(build, ctx);
        static std::size_t n = 0;
        static std::optional<std::string> out;
        build->add_option("--n", n, "number of accepted records")->required()->check(CLI::PositiveNumber);
        build->add_option_function<std::string>("--out", [](const std::string& v) { out = v; }, "output directory");
        add_key<std::uint64_t>(build, ctx, "--seed", "seed", "corpus seed");
        add_key<int>(build, ctx, "--size", "canvas_size", "canvas size in pixels");
        build->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto dir = or_home(out, cfg, "corpus");
                auto c = bg::corpus::build_corpus(n, cfg.corpus_config(), cfg.get<std::uint64_t>("seed"), dir);
                const auto s = bg::corpus::corpus_stats(c);
                std::cout << "wrote " << s.records << " records to " << dir.string() << " (train " << s.train << ", val " << s.val
                          << ", test " << s.test << "; rejection rate " << s.rejection_rate << ")\n";
            };
        });

        auto* stats = corpus->add_subcommand("stats", "summary statistics of a corpus");
        add_common(stats, ctx);
        static std::optional<std::string> dir;
        stats->add_option_function<std::string>("--dir", [](const std::string& v) { dir = v; }, "corpus directory");
        stats->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto c = open_corpus(or_home(dir, cfg, "corpus"));
                const auto s = bg::corpus::corpus_stats(c);
                json j = {{"records", s.records},
                          {"splits", {{"train", s.train}, {"val", s.val}, {"test", s.test}}},
                          {"mean_salient_ratio", s.mean_salient_ratio},
                          {"mean_occlusion", s.mean_occlusion},
                          {"mean_alignment", s.mean_alignment},
                          {"mean_overlap", s.mean_overlap},
                          {"mean_elements", s.mean_elements},
                          {"rejection_rate", s.rejection_rate}};
                std::cout << j.dump(2) << "\n";
            };
        });
    }

    // ---- train
    auto* train = app.add_subcommand("train", "train one model");
    train->require_subcommand(1);
    static std::optional<std::string> corpus_dir, out_path;
    auto corpus_opt = [](CLI::App* s) {
        s->add_option_function<std::string>("--corpus", [](const std::string& v) { corpus_dir = v; }, "corpus directory");
        s->add_option_function<std::string>("--out", [](const std::string& v) { out_path = v; }, "checkpoint path");
    };
    {
        auto* sal = train->add_subcommand("saliency", "train the saliency detector");
        add_common(sal, ctx);
        corpus_opt(sal);
        add_key<int>(sal, ctx, "--epochs", "saliency_epochs", "epochs");
        add_key<std::uint64_t>(sal, ctx, "--seed", "seed", "training seed");
        sal->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                auto det = bg::saliency::train_detector(c, cfg.detector_config(), [](const bg::saliency::TrainLog& l) {
                    std::cout << "epoch " << l.epoch << " loss " << l.loss << " val_iou " << l.val_iou << "\n";
                });
                const auto path = or_home(out_path, cfg, "saliency.pt");
                det.save(path);
                write_json(fs::path(path.string() + ".config.json"), cfg.values());
                std::cout << "saved " << path.string() << "\n";
            };
        });

        auto* dif = train->add_subcommand("diffusion", "train the text-to-background diffusion model");
        add_common(dif, ctx);
        corpus_opt(dif);
        add_key<double>(dif, ctx, "--gamma", "gamma", "weight of the saliency attention constraint");
        add_key<int>(dif, ctx, "--epochs", "diffusion_epochs", "epochs");
        add_key<std::uint64_t>(dif, ctx, "--seed", "seed", "training seed");
        dif->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                int last = -1;
                auto model = bg::diffusion::train_diffusion(c, cfg.diffusion_config(), cfg.diffusion_train_config(),
                                                            [&](int epoch, const bg::diffusion::TrainStats& s) {
                                                                if (epoch == last) return;
                                                                last = epoch;
                                                                std::cout << "epoch " << epoch << " step " << s.step << " L_d " << s.loss_d
                                                                          << " L_c " << s.loss_c << " L_total " << s.loss_total << "\n";
                                                            });
                const auto path = or_home(out_path, cfg, "diffusion.pt");
                model.save(path);
                write_json(fs::path(path.string() + ".config.json"), cfg.values());
                std::cout << "saved " << path.string() << "\n";
            };
        });

        auto* lay = train->add_subcommand("layout", "train the background-conditioned layout model");
        add_common(lay, ctx);
        corpus_opt(lay);
        add_key<int>(lay, ctx, "--epochs", "layout_epochs", "epochs");
        add_key<std::uint64_t>(lay, ctx, "--seed", "seed", "training seed");
        lay->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                int last = -1;
                auto model = bg::layout::train_layout(c, cfg.layout_config(), cfg.layout_train_config(), [&](const bg::layout::LayoutTrainLog& l) {
                    if (l.epoch == last) return;
                    last = l.epoch;
                    std::cout << "epoch " << l.epoch << " step " << l.step << " loss " << l.loss << "\n";
                });
                const auto path = or_home(out_path, cfg, "layout.pt");
                model.save(path);
                write_json(fs::path(path.string() + ".config.json"), cfg.values());
                std::cout << "saved " << path.string() << "\n";
            };
        });

        auto* feat = train->add_subcommand("features", "train the feature extractor used by FD-lite");
        add_common(feat, ctx);
        corpus_opt(feat);
        add_key<int>(feat, ctx, "--epochs", "features_epochs", "epochs");
        feat->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                auto fx = bg::features::train_extractor(c, cfg.extractor_config(),
                                                        [](int e, double l) { std::cout << "epoch " << e << " loss " << l << "\n"; });
                const auto path = or_home(out_path, cfg, "features.pt");
                fx.save(path);
                std::cout << "saved " << path.string() << "\n";
            };
        });
    }

    // ---- generate (background only)
    static std::optional<std::string> ckpt, detector_ckpt, layout_ckpt, features_ckpt, report_path;
    static std::string prompt, mask_arg = "none", spec_arg = "text,text,button";
    {
        auto* gen = app.add_subcommand("generate", "sample one background from a prompt");
        add_common(gen, ctx);
        static std::string out;
        gen->add_option_function<std::string>("--ckpt", [](const std::string& v) { ckpt = v; }, "diffusion checkpoint");
        gen->add_option("--prompt", prompt, "text prompt")->required();
        gen->add_option("--mask", mask_arg, "grayscale PNG region mask to keep clear, or 'none'");
        add_key<std::uint64_t>(gen, ctx, "--seed", "seed", "sampling seed");
        add_key<int>(gen, ctx, "--steps", "sample_steps", "sampling steps");
        add_key<double>(gen, ctx, "--beta", "beta_reduce", "attention reduction ratio");
        gen->add_option("--out", out, "output PNG")->required();
        gen->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto model = bg::diffusion::DiffusionModel::load(or_home(ckpt, cfg, "diffusion.pt"));
                const auto mask = read_mask(mask_arg);
                const int size = model.config.image_size;
                auto res = bg::diffusion::sample(model, {prompt}, {cfg.get<std::uint64_t>("seed")}, cfg.sample_config(),
                                                 mask ? bg::pipeline::mask_tensor(*mask, size) : torch::Tensor{});
                bg::io::write_rgb(bg::image_from_tensor(res.images[0]), out);
                write_json(fs::path(out + ".provenance.json"),
                           {{"prompt", prompt}, {"mask", mask_arg}, {"diffusion_ckpt", model.id()}, {"config", cfg.values()}});
                std::cout << "wrote " << out << "\n";
            };
        });
    }

    // ---- layout generate
    {
        auto* lay = app.add_subcommand("layout", "layout model commands");
        lay->require_subcommand(1);
        auto* gen = lay->add_subcommand("generate", "generate a layout for a background image");
        add_common(gen, ctx);
        static std::string image, out;
        gen->add_option_function<std::string>("--ckpt", [](const std::string& v) { layout_ckpt = v; }, "layout checkpoint");
        gen->add_option("--image", image, "background PNG")->required();
        gen->add_option("--spec", spec_arg, "comma separated element categories");
        add_key<std::uint64_t>(gen, ctx, "--seed", "seed", "decoding seed");
        add_key<bool>(gen, ctx, "--greedy", "greedy", "greedy decoding");
        gen->add_option("--out", out, "output layout JSON")->required();
        gen->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto model = bg::layout::LayoutModel::load(or_home(layout_ckpt, cfg, "layout.pt"));
                const auto spec = bg::parse_element_spec(spec_arg);
                const auto layout = model.generate(bg::io::read_rgb(image), spec, cfg.get<std::uint64_t>("seed"), cfg.decode_config());
                write_json(out, bg::corpus::layout_to_json(layout));
                std::cout << "wrote " << out << " (" << layout.size() << " elements)\n";
            };
        });
    }

    // ---- run generate | refine | deck
    {
        auto* run = app.add_subcommand("run", "end-to-end template pipeline");
        run->require_subcommand(1);
        static std::string out_dir;
        static std::string presets_arg = "default";
        auto models_opts = [&](CLI::App* s) {
            add_common(s, ctx);
            s->add_option_function<std::string>("--diffusion", [](const std::string& v) { ckpt = v; }, "diffusion checkpoint");
            s->add_option_function<std::string>("--layout", [](const std::string& v) { layout_ckpt = v; }, "layout checkpoint");
            s->add_option_function<std::string>("--detector", [](const std::string& v) { detector_ckpt = v; },
                                                "saliency checkpoint for per-template metrics");
            s->add_option("--prompt", prompt, "text prompt")->required();
            add_key<std::uint64_t>(s, ctx, "--seed", "seed", "template seed");
            s->add_option("--out", out_dir, "output directory")->required();
        };
        struct Loaded {
            bg::diffusion::DiffusionModel diffusion;
            bg::layout::LayoutModel layout;
            std::optional<bg::saliency::SaliencyDetector> detector;
            bg::pipeline::Models models() {
                return {&diffusion, &layout, detector ? &*detector : nullptr};
            }
        };
        static auto load = [](const bg::RunConfig& cfg) {
            Loaded l{bg::diffusion::DiffusionModel::load(or_home(ckpt, cfg, "diffusion.pt")),
                     bg::layout::LayoutModel::load(or_home(layout_ckpt, cfg, "layout.pt")), std::nullopt};
            const auto det = or_home(detector_ckpt, cfg, "saliency.pt");
            if (detector_ckpt || fs::exists(det)) l.detector = bg::saliency::SaliencyDetector::load(det);
            return l;
        };

        auto* gen = run->add_subcommand("generate", "background then layout");
        models_opts(gen);
        gen->add_option("--spec", spec_arg, "comma separated element categories");
        gen->add_option("--mask", mask_arg, "grayscale PNG region mask, or 'none'");
        gen->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto l = load(cfg);
                const auto t = bg::pipeline::generate_template(l.models(), prompt, bg::parse_element_spec(spec_arg), read_mask(mask_arg),
                                                               cfg.get<std::uint64_t>("seed"), cfg.generation_config());
                bg::pipeline::write_template(t, out_dir, "template");
                write_json(fs::path(out_dir) / "config.json", cfg.values());
                std::cout << "wrote " << out_dir << "\n";
            };
        });

        auto* ref = run->add_subcommand("refine", "generate, then alternate layout masks and background regeneration");
        models_opts(ref);
        ref->add_option("--spec", spec_arg, "comma separated element categories");
        add_key<int>(ref, ctx, "--k", "refine_iterations", "refinement iterations");
        ref->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto l = load(cfg);
                const auto t0 = bg::pipeline::generate_template(l.models(), prompt, bg::parse_element_spec(spec_arg), std::nullopt,
                                                                cfg.get<std::uint64_t>("seed"), cfg.generation_config());
                bg::pipeline::write_template(t0, out_dir, "iter0");
                const auto r = bg::pipeline::refine(l.models(), t0, cfg.refine_config());
                json table = json::array();
                if (t0.metrics) table.push_back({{"iteration", 0}, {"occlusion", t0.metrics->occlusion}, {"salient_ratio", t0.metrics->salient_ratio}});
                for (const auto& t : r.iterations) {
                    bg::pipeline::write_template(t, out_dir, bg::concat("iter", t.provenance.iteration));
                    if (t.metrics)
                        table.push_back({{"iteration", t.provenance.iteration}, {"occlusion", t.metrics->occlusion}, {"salient_ratio", t.metrics->salient_ratio}});
                }
                json traj = {{"iterations", table}, {"config", cfg.values()}};
                if (r.error) traj["error"] = *r.error;
                write_json(fs::path(out_dir) / "trajectory.json", traj);
                std::cout << "wrote " << out_dir << " (" << r.iterations.size() << " refinement iterations)\n";
                if (r.error) throw bg::RuntimeFailure(*r.error);
            };
        });

        auto* deck = run->add_subcommand("deck", "one template per preset mask, shared prompt and seed");
        models_opts(deck);
        deck->add_option("--presets", presets_arg, "presets JSON file, or 'default'");
        deck->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto l = load(cfg);
                const int size = l.diffusion.config.image_size;
                std::vector<bg::pipeline::DeckPreset> presets;
                if (presets_arg == "default") {
                    presets = bg::pipeline::default_presets(size);
                } else {
                    std::ifstream in(presets_arg);
                    if (!in) throw bg::FileNotFound(presets_arg);
                    json j;
                    try {
                        in >> j;
                    } catch (const json::parse_error& e) {
                        throw bg::SchemaViolation("presets", e.what());
                    }
                    presets = bg::pipeline::presets_from_json(j, size);
                }
                const auto pages = bg::pipeline::generate_deck(l.models(), prompt, presets, cfg.get<std::uint64_t>("seed"), cfg.generation_config());
                for (std::size_t i = 0; i < pages.size(); ++i) bg::pipeline::write_template(pages[i], out_dir, presets[i].name);
                write_json(fs::path(out_dir) / "config.json", cfg.values());
                std::cout << "wrote " << pages.size() << " pages to " << out_dir << "\n";
            };
        });
    }

    // ---- eval background | layout
    {
        auto* ev = app.add_subcommand("eval", "evaluate checkpoints");
        ev->require_subcommand(1);
        static std::size_t n = 200;
        static bool sweep = false;

        auto* bgd = ev->add_subcommand("background", "salient ratio (and optional mask sweep / FD-lite) of sampled backgrounds");
        add_common(bgd, ctx);
        bgd->add_option_function<std::string>("--ckpt", [](const std::string& v) { ckpt = v; }, "diffusion checkpoint");
        bgd->add_option_function<std::string>("--detector", [](const std::string& v) { detector_ckpt = v; }, "saliency checkpoint");
        bgd->add_option_function<std::string>("--features", [](const std::string& v) { features_ckpt = v; }, "feature extractor for FD-lite");
        bgd->add_option_function<std::string>("--corpus", [](const std::string& v) { corpus_dir = v; }, "corpus providing test prompts");
        bgd->add_option("--n", n, "number of samples")->check(CLI::PositiveNumber);
        bgd->add_flag("--sweep", sweep, "add the mask-ratio sweep curve");
        add_key<std::uint64_t>(bgd, ctx, "--seed", "seed", "sampling seed");
        bgd->add_option_function<std::string>("--report", [](const std::string& v) { report_path = v; }, "report JSON path")->required();
        bgd->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto model = bg::diffusion::DiffusionModel::load(or_home(ckpt, cfg, "diffusion.pt"));
                const auto det = bg::saliency::SaliencyDetector::load(or_home(detector_ckpt, cfg, "saliency.pt"));
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                const auto test = c.split(bg::corpus::Split::test);
                const auto ps = bg::eval::prompt_set(test, n, cfg.get<std::uint64_t>("seed"));
                const auto sc = cfg.sample_config();
                auto imgs = bg::eval::sample_images(model, ps.prompts, ps.seeds, sc);
                bg::metrics::MetricReport rep;
                for (double v : bg::eval::salient_ratios(bg::eval::detect(det, imgs))) rep.add("salient_ratio", v);
                rep.meta = {{"diffusion_ckpt", model.id()}, {"corpus", c.manifest.checksum}, {"seed", std::to_string(cfg.get<std::uint64_t>("seed"))},
                            {"samples", std::to_string(n)}};
                if (sweep) {
                    const auto s = bg::eval::mask_sweep(model, det, ps, sc, {0.0, 0.25, 0.5, 0.75, 1.0});
                    rep.series.push_back(s.series());
                    for (std::size_t i = 0; i < s.ratios.size(); ++i)
                        for (double v : s.per_sample[i]) rep.add(bg::concat("salient_ratio@mask", s.ratios[i]), v);
                }
                const auto fpath = or_home(features_ckpt, cfg, "features.pt");
                if (features_ckpt || fs::exists(fpath)) {
                    const auto fx = bg::features::FeatureExtractor::load(fpath);
                    std::vector<bg::Image> real;
                    for (const auto* r : test) real.push_back(r->image);
                    rep.add("fd_lite", bg::features::fd_lite(fx.embed(imgs), fx.embed(real)));
                }
                emit(rep, *report_path);
                std::cout << "mean salient ratio " << rep.mean_of("salient_ratio") << "\n";
            };
        });

        auto* lay = ev->add_subcommand("layout", "occlusion / alignment / overlap on test backgrounds");
        add_common(lay, ctx);
        lay->add_option_function<std::string>("--ckpt", [](const std::string& v) { layout_ckpt = v; }, "layout checkpoint");
        lay->add_option_function<std::string>("--corpus", [](const std::string& v) { corpus_dir = v; }, "corpus directory");
        add_key<std::uint64_t>(lay, ctx, "--seed", "seed", "decoding seed");
        lay->add_option_function<std::string>("--report", [](const std::string& v) { report_path = v; }, "report JSON path")->required();
        lay->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto model = bg::layout::LayoutModel::load(or_home(layout_ckpt, cfg, "layout.pt"));
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                auto rep = bg::eval::evaluate_layouts(model, c.split(bg::corpus::Split::test), cfg.get<std::uint64_t>("seed"), cfg.decode_config());
                rep.meta["corpus"] = c.manifest.checksum;
                emit(rep, *report_path);
                std::cout << "occlusion " << rep.mean_of("occlusion") << " (random " << rep.mean_of("random_occlusion") << ", real "
                          << rep.mean_of("real_occlusion") << ")\n";
            };
        });
    }

    // ---- analyze attention
    {
        auto* an = app.add_subcommand("analyze", "analyses of trained models");
        an->require_subcommand(1);
        auto* att = an->add_subcommand("attention", "cosine between aggregated cross-attention and saliency");
        add_common(att, ctx);
        static std::size_t n = 100;
        att->add_option_function<std::string>("--ckpt", [](const std::string& v) { ckpt = v; }, "diffusion checkpoint");
        att->add_option_function<std::string>("--detector", [](const std::string& v) { detector_ckpt = v; }, "saliency checkpoint");
        att->add_option_function<std::string>("--corpus", [](const std::string& v) { corpus_dir = v; }, "corpus directory");
        att->add_option("--n", n, "number of corpus images")->check(CLI::PositiveNumber);
        att->add_option_function<std::string>("--report", [](const std::string& v) { report_path = v; }, "report JSON path")->required();
        att->callback([&] {
            action = [&] {
                const auto cfg = ctx.config();
                auto model = bg::diffusion::DiffusionModel::load(or_home(ckpt, cfg, "diffusion.pt"));
                const auto det = bg::saliency::SaliencyDetector::load(or_home(detector_ckpt, cfg, "saliency.pt"));
                const auto c = open_corpus(or_home(corpus_dir, cfg, "corpus"));
                const auto test = c.split(bg::corpus::Split::test);
                std::vector<bg::Image> imgs;
                std::vector<std::string> prompts;
                for (std::size_t i = 0; i < std::min(n, test.size()); ++i) {
                    imgs.push_back(test[i]->image);
                    prompts.push_back(test[i]->prompt);
                }
                const auto r = bg::eval::attention_saliency_similarity(model, det, bg::stack_images(imgs), prompts, cfg.get<int>("invert_steps"));
                bg::metrics::MetricReport rep;
                for (double v : r.cosines) rep.add("cosine", v);
                rep.series.push_back(r.histogram());
                rep.meta = {{"diffusion_ckpt", model.id()}, {"corpus", c.manifest.checksum}, {"images", std::to_string(imgs.size())},
                            {"failures", std::to_string(r.failures.size())}};
                emit(rep, *report_path);
                for (const auto& f : r.failures) std::cerr << "skipped " << f << "\n";
                std::cout << "median cosine " << rep.median_of("cosine") << "\n";
            };
        });
    }

    if (argc > 1 && argv[1][0] != '-' && app.get_subcommands([&](CLI::App* s) { return s->check_name(argv[1]); }).empty()) {
        std::cerr << "unknown subcommand '" << argv[1] << "'\n" << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (action) action();
        return 0;
    } catch (const bg::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}
