// Copyright (C) 2026 The bannergen Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Trains (or reloads) every model at 32x32 on a
// 2,000-record corpus and prints one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include "bannergen/evaluate.hpp"
#include "bannergen/report.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using namespace bannergen;

namespace {

constexpr int kSize = 32;
constexpr std::size_t kRecords = 2000;
constexpr std::uint64_t kCorpusSeed = 1;
const std::string kTag = "v7";

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

diffusion::DiffusionConfig diffusion_config() {
    diffusion::DiffusionConfig c;
    c.image_size = kSize;
    c.base_channels = 32;
    c.channel_mults = {1, 2, 2};
    return c;
}

diffusion::TrainConfig diffusion_train_config(double gamma, std::uint64_t seed) {
    diffusion::TrainConfig c;
    c.gamma = gamma;
    c.seed = seed;
    c.epochs = 30;
    c.lr = 3e-4;
    c.reduce_prob = 0.5;
    return c;
}

// Trains on first use and caches every model under one directory.
class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    const fs::path& dir() const { return dir_; }

    const corpus::Corpus& corpus() {
        if (!corpus_) {
            corpus::CorpusConfig cc;
            cc.height = cc.width = kSize;
            corpus_ = corpus::build_corpus(kRecords, cc, kCorpusSeed);
        }
        return *corpus_;
    }

    const saliency::SaliencyDetector& detector() {
        if (!detector_) {
            detector_ = fetch<saliency::SaliencyDetector>("detector", [&] {
                saliency::DetectorConfig dc;
                dc.resolution = kSize;
                dc.epochs = 15;
                return saliency::train_detector(corpus(), dc, [](const saliency::TrainLog& l) {
                    std::cerr << "  epoch " << l.epoch << " loss " << num(l.loss) << " val iou " << num(l.val_iou) << "\n";
                });
            });
        }
        return *detector_;
    }

    diffusion::DiffusionModel& diffusion(double gamma, std::uint64_t seed) {
        const auto name = concat("diffusion_g", num(gamma, 2), "_s", seed);
        auto it = diffusion_.find(name);
        if (it == diffusion_.end()) {
            it = diffusion_
                     .emplace(name, fetch<diffusion::DiffusionModel>(name, [&] {
                         int last = -1;
                         return diffusion::train_diffusion(corpus(), diffusion_config(), diffusion_train_config(gamma, seed),
                                                           [&](int epoch, const diffusion::TrainStats& s) {
                                                               if (epoch == last) return;
                                                               last = epoch;
                                                               std::cerr << "  epoch " << epoch << " L_d " << num(s.loss_d) << " L_c "
                                                                         << num(s.loss_c, 6) << "\n";
                                                           });
                     }))
                     .first;
        }
        return it->second;
    }

    layout::LayoutModel& layout() {
        if (!layout_) {
            layout_ = fetch<layout::LayoutModel>("layout", [&] {
                layout::LayoutConfig lc;
                lc.image_size = kSize;
                lc.grid = 8;
                layout::LayoutTrainConfig tc;
                tc.epochs = 30;
                int last = -1;
                return layout::train_layout(corpus(), lc, tc, [&](const layout::LayoutTrainLog& l) {
                    if (l.epoch == last) return;
                    last = l.epoch;
                    std::cerr << "  epoch " << l.epoch << " loss " << num(l.loss) << "\n";
                });
            });
        }
        return *layout_;
    }

    const features::FeatureExtractor& features() {
        if (!features_) {
            features_ = fetch<features::FeatureExtractor>("features", [&] {
                features::ExtractorConfig fc;
                fc.image_size = kSize;
                fc.epochs = 15;
                return features::train_extractor(corpus(), fc,
                                                 [](int e, double loss) { std::cerr << "  epoch " << e << " loss " << num(loss, 5) << "\n"; });
            });
        }
        return *features_;
    }

private:
    template <class T, class Train>
    T fetch(const std::string& name, Train train) {
        const auto path = dir_ / (name + "_" + kTag + ".pt");
        if (fs::exists(path)) return T::load(path);
        std::cerr << "training " << name << "\n";
        const auto t0 = std::chrono::steady_clock::now();
        T model = train();
        const auto tmp = fs::path(path.string() + ".tmp");
        model.save(tmp);
        fs::rename(tmp, path);
        std::cerr << "trained " << name << " in " << num(seconds_since(t0), 0) << " s\n";
        return model;
    }

    fs::path dir_;
    std::optional<corpus::Corpus> corpus_;
    std::optional<saliency::SaliencyDetector> detector_;
    std::map<std::string, diffusion::DiffusionModel> diffusion_;
    std::optional<layout::LayoutModel> layout_;
    std::optional<features::FeatureExtractor> features_;
};

std::vector<const corpus::BannerRecord*> test_split(Artifacts& a) { return a.corpus().split(corpus::Split::test); }

torch::Tensor images_of(const std::vector<const corpus::BannerRecord*>& recs) {
    std::vector<Image> imgs;
    for (const auto* r : recs) imgs.push_back(r->image);
    return stack_images(imgs);
}

double mean_salient_ratio(Artifacts& a, diffusion::DiffusionModel& m, const eval::PromptSet& ps, const torch::Tensor& mask = {}) {
    diffusion::SampleConfig sc;
    return metrics::mean(eval::salient_ratios(eval::detect(a.detector(), eval::sample_images(m, ps.prompts, ps.seeds, sc, mask))));
}

// ---------------------------------------------------------------------------

Verdict metric_oracle() {
    auto box = [](double l, double t, double h, double w) { return LayoutElement{Category::text, l, t, h, w}; };
    std::vector<std::string> bad;
    auto hand = [&](const char* what, double got, double want, double tol) {
        if (std::abs(got - want) > tol) bad.push_back(concat(what, " ", got, " != ", want));
    };
    SaliencyMap quarter(4, 4);
    quarter.at(0, 0) = quarter.at(1, 3) = quarter.at(2, 2) = quarter.at(3, 1) = 1.0f;
    hand("salient ratio", metrics::salient_ratio(quarter), 0.25, 0.0);
    hand("alignment", metrics::alignment({box(0.10, 0.05, 0.10, 0.20), box(0.13, 0.50, 0.30, 0.50)}), 3.0, 1e-9);
    hand("overlap identical", metrics::overlap({box(0.2, 0.2, 0.3, 0.3), box(0.2, 0.2, 0.3, 0.3)}), 100.0, 1e-9);
    const Layout pair{box(0.0, 0.0, 0.2, 0.2), box(0.1, 0.0, 0.2, 0.2)};
    const double iou_pair = metrics::overlap(pair);
    hand("overlap pair", iou_pair, 33.33, 0.1);
    SaliencyMap left(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) left.at(y, x) = 1.0f;
    hand("occlusion half", metrics::occlusion({box(0.25, 0.25, 0.5, 0.5)}, left), 50.0, 1e-9);

    std::mt19937_64 rng(2026);
    constexpr int kLayouts = 60;
    double worst = 0.0;
    for (int i = 0; i < kLayouts; ++i) {
        const auto l = oracle::random_layout(rng);
        const auto m = oracle::random_map(rng, 50);
        worst = std::max({worst, std::abs(metrics::alignment(l) - oracle::alignment(l)), std::abs(metrics::overlap(l) - oracle::overlap(l)),
                          std::abs(metrics::occlusion(l, m) - oracle::occlusion(l, m)),
                          100 * std::abs(metrics::salient_ratio(m) - oracle::salient_ratio(m))});
    }
    std::string detail = concat(kLayouts, " layouts, max |diff| ", num(worst), ", IoU pair ", num(iou_pair, 2));
    for (const auto& b : bad) detail += "; " + b;
    return {bad.empty() && worst <= 0.5, detail};
}

Verdict reduction_exact() {
    torch::manual_seed(3);
    auto w = torch::softmax(torch::randn({2, 4, 64, 7}, torch::kFloat64), -1);
    const double beta = 0.01;
    auto mixed = (torch::rand({2, 1, 64, 1}, torch::kFloat64) < 0.5).to(torch::kFloat64);
    int mismatches = 0;
    for (const auto& [name, m] : std::vector<std::pair<std::string, torch::Tensor>>{
             {"full", torch::ones({1, 1, 64, 1}, torch::kFloat64)}, {"empty", torch::zeros({1, 1, 64, 1}, torch::kFloat64)}, {"mixed", mixed}}) {
        const auto got = diffusion::reduce_attention(w, m, beta).contiguous();
        const auto mb = m.expand({2, 4, 64, 7}).contiguous();
        const auto wa = w.accessor<double, 4>();
        const auto ma = mb.accessor<double, 4>();
        const auto ga = got.accessor<double, 4>();
        for (int b = 0; b < 2; ++b)
            for (int h = 0; h < 4; ++h)
                for (int p = 0; p < 64; ++p)
                    for (int k = 0; k < 7; ++k) {
                        const double want = ma[b][h][p][k] == 1.0 ? beta * wa[b][h][p][k] : wa[b][h][p][k];
                        if (ga[b][h][p][k] != want) ++mismatches;
                    }
    }
    return {mismatches == 0, concat("full/empty/mixed masks, beta 0.01, ", mismatches, " mismatching weights")};
}

Verdict loss_bookkeeping(Artifacts& a) {
    auto train = a.corpus().split(corpus::Split::train);
    diffusion::DiffusionModel model(diffusion_config());
    torch::manual_seed(5);
    auto tc = diffusion_train_config(0.5, 5);
    diffusion::Trainer trainer(model, tc);
    const auto td = diffusion::prepare_training_data(train, model.tokenizer, kSize);
    double worst = 0.0;
    constexpr int kSteps = 100;
    for (int s = 0; s < kSteps; ++s) {
        const int64_t lo = (s * tc.batch_size) % (td.images.size(0) - tc.batch_size);
        const auto st = trainer.step({td.images.slice(0, lo, lo + tc.batch_size), td.ids.slice(0, lo, lo + tc.batch_size),
                                      td.saliency.slice(0, lo, lo + tc.batch_size), td.backgrounds.slice(0, lo, lo + tc.batch_size)});
        worst = std::max(worst, std::abs(st.loss_total - (st.loss_d + 0.5 * st.loss_c)));
    }
    return {worst <= 1e-6, concat(kSteps, " steps, max |L_total - L_d - 0.5 L_c| = ", worst)};
}

Verdict tokenizer(Artifacts& a) {
    const layout::LayoutVocabulary vocab;
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto l = layout::reading_order(oracle::random_layout(rng, 8));
        const auto back = layout::detokenize_layout(layout::tokenize_layout(l, vocab), vocab);
        for (std::size_t k = 0; k < l.size(); ++k)
            worst = std::max({worst, std::abs(back[k].left - l[k].left), std::abs(back[k].top - l[k].top),
                              std::abs(back[k].height - l[k].height), std::abs(back[k].width - l[k].width)});
    }

    auto& model = a.layout();
    const auto test = test_split(a);
    std::mt19937_64 srng(78);
    int invalid = 0, decoded = 0;
    constexpr int kBatch = 100, kDecodes = 10000;
    for (int b = 0; decoded < kDecodes; ++b) {
        std::vector<Category> spec(1 + srng() % 5);
        for (auto& c : spec) c = kCategories[srng() % kCategories.size()];
        std::vector<const corpus::BannerRecord*> recs;
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < kBatch; ++i) {
            recs.push_back(test[(b * kBatch + i) % test.size()]);
            seeds.push_back(derive_seed(9, static_cast<std::uint64_t>(b * kBatch + i)));
        }
        try {
            for (const auto& l : model.generate(images_of(recs), spec, seeds)) {
                bool ok = layout::valid_sequence(layout::tokenize_layout(l, vocab), vocab) && l.size() == spec.size();
                for (const auto& e : l) ok = ok && e.left >= 0 && e.top >= 0 && e.right() <= 1 + 1e-9 && e.bottom() <= 1 + 1e-9;
                invalid += ok ? 0 : 1;
            }
        } catch (const DecodeError&) {
            invalid += kBatch;
        }
        decoded += kBatch;
    }
    return {worst <= 1.0 / 64 + 1e-12 && invalid == 0,
            concat("round trip max error ", num(worst, 5), " (bound ", num(1.0 / 64, 5), "), ", invalid, " invalid of ", decoded, " decodes")};
}

Verdict constraint_effect(Artifacts& a) {
    const auto ps = eval::prompt_set(test_split(a), 200, 11);
    int held = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double base = mean_salient_ratio(a, a.diffusion(0.0, seed), ps);
        const double constrained = mean_salient_ratio(a, a.diffusion(0.5, seed), ps);
        const double ratio = constrained / base;
        held += ratio <= 0.9 ? 1 : 0;
        detail += concat(detail.empty() ? "" : ", ", "seed ", seed, " ", num(constrained), "/", num(base), "=", num(ratio, 3));
    }
    return {held >= 2, concat(held, "/3 seeds at <= 0.9x: ", detail)};
}

Verdict mask_sweep(Artifacts& a, metrics::MetricReport& rep) {
    const auto ps = eval::prompt_set(test_split(a), 100, 12);
    const std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
    diffusion::SampleConfig sc;
    const auto r = eval::mask_sweep(a.diffusion(0.5, 1), a.detector(), ps, sc, ratios);
    rep.series.push_back(r.series());
    bool monotone = true;
    for (std::size_t i = 1; i < r.mean_salient_ratio.size(); ++i) monotone = monotone && r.mean_salient_ratio[i] <= r.mean_salient_ratio[i - 1];
    const double rho = metrics::spearman(r.ratios, r.mean_salient_ratio);
    std::string curve;
    for (double v : r.mean_salient_ratio) curve += (curve.empty() ? "" : " ") + num(v);
    return {monotone && rho <= -0.8, concat("means ", curve, ", rho ", num(rho, 3), monotone ? "" : ", not monotone")};
}

Verdict reduction_locality(Artifacts& a) {
    const auto ps = eval::prompt_set(test_split(a), 100, 13);
    auto& m = a.diffusion(0.5, 1);
    auto mask = torch::zeros({1, 1, kSize, kSize});
    mask.slice(3, 0, kSize / 2).fill_(1.0);
    diffusion::SampleConfig sc;
    const auto plain = eval::detect(a.detector(), eval::sample_images(m, ps.prompts, ps.seeds, sc));
    const auto reduced = eval::detect(a.detector(), eval::sample_images(m, ps.prompts, ps.seeds, sc, mask));
    auto inside = [&](const torch::Tensor& s) { return s.slice(3, 0, kSize / 2).sum().item<double>() / s.size(0); };
    auto outside = [&](const torch::Tensor& s) { return s.slice(3, kSize / 2, kSize).sum().item<double>() / s.size(0); };
    const double in_ratio = inside(reduced) / inside(plain);
    const double out_ratio = outside(reduced) / outside(plain);
    const bool pass = in_ratio <= 0.7 && std::abs(std::log(out_ratio)) < std::abs(std::log(in_ratio));
    return {pass, concat("masked-half mass x", num(in_ratio, 3), ", unmasked-half mass x", num(out_ratio, 3))};
}

Verdict attention_correlation(Artifacts& a, metrics::MetricReport& rep) {
    const auto test = test_split(a);
    std::vector<const corpus::BannerRecord*> recs(test.begin(), test.begin() + 100);
    std::vector<std::string> prompts;
    for (const auto* r : recs) prompts.push_back(r->prompt);
    const auto r = eval::attention_saliency_similarity(a.diffusion(0.0, 1), a.detector(), images_of(recs), prompts);
    rep.series.push_back(r.histogram());
    for (double c : r.cosines) rep.add("attention_saliency_cosine", c);
    const double med = metrics::median(r.cosines);
    std::size_t above = 0;
    for (double c : r.cosines) above += c > 0.7 ? 1 : 0;
    return {r.failures.empty() && r.cosines.size() == 100 && med >= 0.5,
            concat(r.cosines.size(), " images, median cosine ", num(med, 3), ", ", above, " above 0.7, histogram in attention_saliency_cosine.svg")};
}

Verdict inversion(Artifacts& a) {
    auto& m = a.diffusion(0.5, 1);
    const auto ps = eval::prompt_set(test_split(a), 50, 14);
    diffusion::SampleConfig sc;
    const auto imgs = eval::sample_images(m, ps.prompts, ps.seeds, sc);
    const auto latent = diffusion::ddim_invert(m, imgs, ps.prompts, 50);
    const auto back = diffusion::sample(m, ps.prompts, ps.seeds, sc, {}, latent).images;
    std::vector<double> psnr;
    for (int64_t i = 0; i < imgs.size(0); ++i) psnr.push_back(eval::psnr(imgs[i], back[i]));
    const double med = metrics::median(psnr);
    return {med >= 20.0, concat("50 images, median PSNR ", num(med, 2), " dB")};
}

Verdict layout_quality(Artifacts& a, metrics::MetricReport& rep) {
    const auto test = test_split(a);
    std::vector<const corpus::BannerRecord*> recs(test.begin(), test.begin() + std::min<std::size_t>(200, test.size()));
    const auto r = eval::evaluate_layouts(a.layout(), recs, 15);
    for (const auto& [k, v] : r.samples) rep.samples["layout_" + k] = v;
    const double occ = r.mean_of("occlusion"), rnd = r.mean_of("random_occlusion");
    const double al = r.mean_of("alignment"), ral = r.mean_of("random_alignment"), real = r.mean_of("real_alignment");
    const double gain = 1.0 - occ / rnd;
    const bool pass = recs.size() == 200 && gain >= 0.2 && std::abs(al - real) < std::abs(ral - real);
    return {pass, concat(recs.size(), " backgrounds, occlusion ", num(occ, 2), " vs random ", num(rnd, 2), " (", num(100 * gain, 1),
                         "% better), alignment ", num(al, 3), " vs random ", num(ral, 3), " (test split ", num(real, 3), ")")};
}

Verdict refinement(Artifacts& a, metrics::MetricReport& rep) {
    const auto test = test_split(a);
    pipeline::Models models{&a.diffusion(0.5, 1), &a.layout(), &a.detector()};
    std::vector<pipeline::Template> initial;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto* r = test[i % test.size()];
        initial.push_back(pipeline::generate_template(models, r->prompt, categories_of(layout::reading_order(r->elements)), std::nullopt,
                                                      derive_seed(16, i)));
    }
    pipeline::RefineConfig rc;
    rc.iterations = 2;
    const auto rounds = pipeline::refine_batch(models, initial, rc);
    const auto t = eval::refinement_table(initial, rounds);
    for (auto s : t.series()) {
        for (auto& x : s.x) x += 1;
        rep.series.push_back(std::move(s));
    }
    bool sr_monotone = true;
    for (std::size_t i = 1; i < t.salient_ratio.size(); ++i) sr_monotone = sr_monotone && t.salient_ratio[i] <= t.salient_ratio[i - 1];
    std::string occ, sr;
    for (double v : t.occlusion) occ += (occ.empty() ? "" : " -> ") + num(v, 2);
    for (double v : t.salient_ratio) sr += (sr.empty() ? "" : " -> ") + num(v);
    return {t.occlusion.size() == 3 && t.occlusion[2] <= t.occlusion[0] && sr_monotone,
            concat("occlusion ", occ, "; salient ratio ", sr)};
}

Verdict deck_consistency(Artifacts& a, metrics::MetricReport& rep) {
    const auto test = test_split(a);
    pipeline::Models models{&a.diffusion(0.5, 1), &a.layout(), nullptr};
    const auto presets = pipeline::default_presets(kSize);
    std::vector<std::vector<pipeline::Template>> decks;
    // 10 prompts, two seeds each
    for (std::size_t i = 0; i < 10; ++i)
        for (std::uint64_t s : {0, 1}) decks.push_back(pipeline::generate_deck(models, test[i * 7 % test.size()]->prompt, presets, derive_seed(17 + s, i)));
    const auto d = eval::deck_consistency(a.features(), decks);
    for (double v : d.same_seed) rep.add("deck_same_seed_distance", v);
    for (double v : d.different_seed) rep.add("deck_different_seed_distance", v);
    return {d.ratio() < 1.0, concat(decks.size(), " decks x ", presets.size(), " presets, distance ratio ", num(d.ratio(), 3), ", AUC ",
                                    num(d.auc(), 3))};
}

Verdict fd_sanity(Artifacts& a) {
    const auto& fx = a.features();
    const auto emb = fx.embed(images_of(test_split(a)));
    const auto n = emb.size(0);
    auto perm = torch::randperm(n, make_generator(18), torch::kInt64);
    const auto h1 = emb.index_select(0, perm.slice(0, 0, n / 2)), h2 = emb.index_select(0, perm.slice(0, n / 2, n));
    const auto noise = fx.embed(torch::rand({n, 3, kSize, kSize}, make_generator(19), torch::kFloat32));
    const double halves = features::fd_lite(h1, h2), vs_noise = features::fd_lite(emb, noise), self = features::fd_lite(emb, emb);
    return {halves < vs_noise && std::abs(self) <= 1e-6,
            concat("halves ", num(halves, 3), ", test vs noise ", num(vs_noise, 3), ", self ", self)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bannergen acceptance run"};
    std::string dir = "acceptance_artifacts";
    std::vector<int> only;
    bool strict = false;
    app.add_option("--artifacts", dir, "directory caching trained models and the report");
    app.add_option("--only", only, "run just these criteria");
    app.add_flag("--strict", strict, "exit non-zero when any criterion fails");
    CLI11_PARSE(app, argc, argv);

    configure_torch(1);
    Artifacts a(dir);
    metrics::MetricReport rep;
    rep.meta["corpus_records"] = std::to_string(kRecords);
    rep.meta["resolution"] = std::to_string(kSize);

    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {1, [&] { return metric_oracle(); }},
        {2, [&] { return reduction_exact(); }},
        {3, [&] { return loss_bookkeeping(a); }},
        {4, [&] { return tokenizer(a); }},
        {5, [&] { return constraint_effect(a); }},
        {6, [&] { return mask_sweep(a, rep); }},
        {7, [&] { return reduction_locality(a); }},
        {8, [&] { return attention_correlation(a, rep); }},
        {9, [&] { return inversion(a); }},
        {10, [&] { return layout_quality(a, rep); }},
        {11, [&] { return refinement(a, rep); }},
        {12, [&] { return deck_consistency(a, rep); }},
        {13, [&] { return fd_sanity(a); }},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failed = 0, errors = 0;
    for (const auto& [n, run] : criteria) {
        if (!wanted.empty() && !wanted.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, concat("error: ", e.what())};
            ++errors;
        }
        failed += v.pass ? 0 : 1;
        rep.meta[concat("criterion_", n < 10 ? "0" : "", n)] = concat(v.pass ? "PASS" : "FAIL", " ", v.detail);
        std::cout << "criterion " << std::setw(2) << n << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  ["
                  << num(seconds_since(t0), 0) << " s]" << std::endl;
    }
    report::emit_report(rep, fs::path(dir) / "report");
    std::cout << failed << " failed" << (errors ? concat(" (", errors, " with errors)") : "") << std::endl;
    return errors > 0 || (strict && failed > 0) ? 1 : 0;
}
