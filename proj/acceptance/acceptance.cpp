#include <torch/torch.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/image.hpp"
#include "common/tensor_util.hpp"
#include "cyclic/crg_training.hpp"
#include "editing/editing.hpp"
#include "gan/gan_training.hpp"
#include "hash_oracle.hpp"
#include "inversion/gbt.hpp"
#include "inversion/linear_generator.hpp"
#include "metrics/metrics.hpp"
#include "models/checkpoint.hpp"
#include "synthdata/dataset.hpp"
#include "synthdata/render.hpp"

namespace fs = std::filesystem;
using namespace crg;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

void log_line(const std::string& text) { std::cerr << "  .. " << text << std::endl; }

std::string digest12(const json& j) { return sha256_hex(j.dump()).substr(0, 12); }

ImageTensor random_image(std::mt19937_64& rng, int side) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    ImageTensor img(side, side);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

LatentVector random_latent(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n;
    LatentVector z(d);
    for (auto& v : z) v = n(rng);
    return z;
}

double norm(const LatentVector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

// ---------------------------------------------------------------- P1

Outcome p1_hashes() {
    std::mt19937_64 rng(101);
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        const auto img = random_image(rng, 32);
        mismatches += phash(img).bits != oracle::phash32(img);
        mismatches += whash(img).bits != oracle::whash32(img);
    }
    ImageTensor constant(32, 32, std::vector<float>(32 * 32, 0.0f));
    ImageTensor gradient(32, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) gradient.at(r, c) = -1.0f + 2.0f * static_cast<float>(c) / 31.0f;
    const bool dzero = dhash(constant).bits == 0;
    const bool dones = dhash(gradient).bits == ~std::uint64_t{0};
    return {mismatches == 0 && dzero && dones, "phash/whash mismatches " + std::to_string(mismatches) +
                                                   "/200, dhash constant=" + dhash(constant).hex() +
                                                   " gradient=" + dhash(gradient).hex()};
}

// ---------------------------------------------------------------- P2

Outcome p2_algebra() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> uk(-3.0, 3.0);
    double worst = 0.0;
    for (std::size_t d : {4u, 32u}) {
        for (int i = 0; i < 1000; ++i) {
            const auto z1 = random_latent(rng, d), z2 = random_latent(rng, d), zp = random_latent(rng, d);
            const auto fwd = attribute_direction(z1, z2), back = attribute_direction(z2, z1);
            const double k1 = uk(rng), k2 = uk(rng);
            for (std::size_t j = 0; j < d; ++j) {
                worst = std::max(worst, std::abs(fwd.raw[j] + back.raw[j]));
                worst = std::max(worst, std::abs(fwd.unit[j] + back.unit[j]));
            }
            for (bool unit : {false, true}) {
                const auto once = edit_latent(zp, fwd, k1 + k2, unit);
                const auto twice = edit_latent(edit_latent(zp, fwd, k1, unit), fwd, k2, unit);
                const auto zero = edit_latent(zp, fwd, 0.0, unit);
                for (std::size_t j = 0; j < d; ++j) {
                    worst = std::max(worst, std::abs(once[j] - twice[j]));
                    worst = std::max(worst, std::abs(zero[j] - zp[j]));
                }
            }
            const double shift = project_onto_direction(edit_latent(zp, fwd, k1), fwd) - project_onto_direction(zp, fwd);
            worst = std::max(worst, std::abs(shift - k1 * norm(fwd.raw)));
        }
    }
    return {worst <= 1e-9, "max deviation " + fmt(worst, 3) + " over 2x1000 vectors"};
}

// ---------------------------------------------------------------- P3

double finite_difference(torch::Tensor& p, int64_t idx, const std::function<double()>& f, double h = 1e-4) {
    torch::NoGradGuard ng;
    auto flat = p.view({-1});
    const double orig = flat[idx].item<double>();
    flat[idx] = orig + h;
    const double up = f();
    flat[idx] = orig - h;
    const double down = f();
    flat[idx] = orig;
    return (up - down) / (2 * h);
}

Outcome p3_gradients() {
    auto garch = default_generator_architecture(4, 8);
    garch.family = "dense";
    garch.hidden = 6;
    garch.dtype = "float64";
    GeneratorModel g(garch, 31);
    auto earch = default_encoder_architecture(4, 8, 0.0);
    earch.family = "dense";
    earch.hidden = 5;
    earch.dtype = "float64";
    EncoderModel e(earch, 32);
    torch::manual_seed(33);
    auto z = torch::randn({3, 4}, torch::kFloat64);
    auto x = torch::tanh(torch::randn({3, 1, 8, 8}, torch::kFloat64));
    std::mt19937_64 rng(34);
    int failures = 0, probes = 0;
    double worst = 0.0;
    auto record = [&](double analytic, double fd) {
        const double rel = std::abs(fd - analytic) / std::max(std::abs(analytic), 1e-6);
        worst = std::max(worst, rel);
        failures += rel > 1e-3;
        ++probes;
    };

    auto params = e.parameters();
    for (int which = 0; which < 2; ++which) {
        std::function<torch::Tensor()> loss = [&] {
            return which == 0 ? latent_cycle_loss(z, e.forward(g.forward(z))) : image_cycle_loss(x, g.forward(e.forward(x)));
        };
        for (auto& p : params) p.mutable_grad() = torch::Tensor();
        loss().backward();
        for (int probe = 0; probe < 20; ++probe) {
            auto& p = params[rng() % params.size()];
            const auto idx = static_cast<int64_t>(rng() % static_cast<std::uint64_t>(p.numel()));
            record(p.grad().flatten()[idx].item<double>(),
                   finite_difference(p, idx, [&] { return loss().item<double>(); }));
        }
    }

    auto oracle_gen = GeneratorModel::oracle(4, 32, "float64");
    const auto& masks = region_masks(32);
    for (int probe = 0; probe < 20; ++probe) {
        auto zo = (torch::rand({1, 4}, torch::kFloat64) * 2 - 1).set_requires_grad(true);
        const int comp = probe % 4;
        const auto& mask = attribute_mask(masks, static_cast<Attribute>(comp));
        std::vector<int64_t> inside;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) inside.push_back(static_cast<int64_t>(i));
        const auto pixel = inside[rng() % inside.size()];
        auto out = oracle_gen.forward(zo).flatten();
        const double analytic = torch::autograd::grad({out[pixel]}, {zo})[0][0][comp].item<double>();
        auto zd = zo.detach().clone();
        record(analytic, finite_difference(zd, comp, [&] { return oracle_gen.forward(zd).flatten()[pixel].item<double>(); }));
    }
    return {failures == 0, std::to_string(probes - failures) + "/" + std::to_string(probes) +
                               " probes within 1e-3 relative (worst " + fmt(worst, 3) + ")"};
}

// ---------------------------------------------------------------- P4

Outcome p4_gbt() {
    // A is 16x16: 4x4 images, D = 16.
    const auto gen = LinearGenerator::well_conditioned(4, 9.0, 404);
    std::mt19937_64 rng(405);
    const auto target = random_image(rng, 4);
    GbtConfig cfg;
    cfg.steps = 5000;
    cfg.step_size = 16.0 / (1.0 + 1.0 / 81.0);
    cfg.init_seed = 406;
    const auto result = invert_latent_gbt(gen, target, cfg);
    const auto solved = gen.solve(target);
    double err = 0.0;
    for (std::size_t i = 0; i < solved.size(); ++i) err = std::max(err, std::abs(result.z_best[i] - solved[i]));
    return {err < 1e-4, "||z - A^-1 x||_inf = " + fmt(err, 3) + " after " + std::to_string(cfg.steps) +
                            " steps (cond " + fmt(gen.condition_number(), 3) + ")"};
}

// ---------------------------------------------------------------- P5

Outcome p5_oracle_inversion() {
    constexpr int kDim = 8, kRes = 32;
    auto gen = GeneratorModel::oracle(kDim, kRes);
    Dataset ds;
    ds.manifest = plan_dataset(2000, 501, kRes, SamplerSpec::defaults(), &ds.images);
    for (auto& img : ds.images) img = quantized(img);
    CrgTrainConfig cfg;
    cfg.encoder = default_encoder_architecture(kDim, kRes, 0.0);
    cfg.encoder.channels = {16, 32, 64};
    cfg.batch_size = 64;
    cfg.lr = 1e-3;
    cfg.max_epochs = 60;
    cfg.validation_latents = 512;
    cfg.augmentation.enabled = false;
    cfg.seed = 502;
    CrgTrainOptions opts;
    opts.on_epoch = [](const CrgEpochLog& e) {
        if (e.epoch % 10 == 0) log_line("P5 epoch " + std::to_string(e.epoch) + " val_latent " + fmt(e.val_latent));
    };
    const auto result = train_encoder(gen, ds, cfg, opts);

    std::mt19937_64 rng(503);
    std::vector<LatentVector> zs;
    for (int i = 0; i < 1000; ++i) zs.push_back(random_latent(rng, kDim));
    const auto images = generator_forward(gen, zs);
    const auto est = encoder_forward(result.encoder, images);
    std::array<double, 4> med{};
    for (int d = 0; d < 4; ++d) {
        std::vector<double> se;
        for (std::size_t i = 0; i < zs.size(); ++i) se.push_back(std::pow(est[i][d] - zs[i][d], 2));
        med[d] = median(se);
    }
    const double worst = *std::max_element(med.begin(), med.end());
    return {worst < 0.05, "median squared error per attribute dim [" + fmt(med[0], 3) + ", " + fmt(med[1], 3) + ", " +
                              fmt(med[2], 3) + ", " + fmt(med[3], 3) + "] over 1000 held-out z (" +
                              std::to_string(result.epochs_run) + " epochs)"};
}

// ---------------------------------------------------------------- P6 / P7

struct DeskRun {
    json config;
    Dataset train;
    GeneratorModel generator;
    EncoderModel encoder;
    json crg_summary;
};

json desk_dataset_config() { return {{"n", 5000}, {"seed", 20240}, {"resolution", 32}}; }

GanTrainConfig desk_gan_config() {
    GanTrainConfig c;
    c.total_steps = 20000;
    c.batch_size = 64;
    c.seed = 611;
    c.log_every = 500;
    c.monitor_every = 2000;
    c.monitor_samples = 256;
    c.generator = default_generator_architecture(32, 32);
    c.discriminator = default_discriminator_architecture(32);
    return c;
}

CrgTrainConfig desk_crg_config() {
    CrgTrainConfig c;
    c.seed = 612;
    c.encoder = default_encoder_architecture(32, 32, 0.5);
    c.max_epochs = 60;
    return c;
}

template <typename Build>
void cached_file(const fs::path& path, Build&& build) {
    if (fs::exists(path)) return;
    const auto tmp = path.string() + ".partial";
    build(fs::path(tmp));
    fs::rename(tmp, path);
}

DeskRun desk_run(const fs::path& cache) {
    const auto ds_cfg = desk_dataset_config();
    const auto gan_cfg = desk_gan_config();
    const auto crg_cfg = desk_crg_config();
    const json gan_key = {{"dataset", ds_cfg}, {"gan", gan_cfg.to_json()}};
    const json crg_key = {{"gan", gan_key}, {"crg", crg_cfg.to_json()}};

    const auto ds_dir = cache / ("dataset-" + digest12(ds_cfg));
    if (!fs::exists(ds_dir / "manifest.json")) {
        log_line("rendering desk dataset into " + ds_dir.string());
        generate_dataset(ds_dir, ds_cfg["n"], ds_cfg["seed"], ds_cfg["resolution"], SamplerSpec::defaults());
    }
    Dataset train = load_dataset(ds_dir);

    const auto gan_dir = cache / ("gan-" + digest12(gan_key));
    fs::create_directories(gan_dir);
    if (!fs::exists(gan_dir / "generator.ckpt")) {
        log_line("training GAN (" + std::to_string(gan_cfg.total_steps) + " steps) into " + gan_dir.string());
        GanTrainOptions opts;
        opts.log_path = gan_dir / "gan.jsonl";
        opts.snapshot_dir = gan_dir;
        opts.on_log = [](const GanLogEntry& e) {
            if (e.step % 1000 == 0 || e.proxy) log_line("GAN " + e.to_json().dump());
        };
        fs::remove(gan_dir / "gan.jsonl");
        auto r = train_gan(train, gan_cfg, opts);
        cached_file(gan_dir / "discriminator.ckpt", [&](const fs::path& p) {
            save_checkpoint(make_checkpoint(r.discriminator, gan_key), p);
        });
        cached_file(gan_dir / "generator.ckpt",
                    [&](const fs::path& p) { save_checkpoint(make_checkpoint(r.generator, gan_key), p); });
    }
    auto generator = load_generator(gan_dir / "generator.ckpt");

    const auto crg_dir = cache / ("crg-" + digest12(crg_key));
    fs::create_directories(crg_dir);
    if (!fs::exists(crg_dir / "encoder.ckpt")) {
        log_line("training encoder (fixed mode) into " + crg_dir.string());
        const auto before = generator.digest();
        CrgTrainOptions opts;
        opts.log_path = crg_dir / "crg.jsonl";
        opts.on_epoch = [](const CrgEpochLog& e) { log_line("CRG " + e.to_json().dump()); };
        fs::remove(crg_dir / "crg.jsonl");
        auto r = train_encoder(generator, train, crg_cfg, opts);
        const json summary = {{"generator_digest_before", before},
                              {"generator_digest_after", r.generator.digest()},
                              {"generator_digest_input_after", generator.digest()},
                              {"best_epoch", r.best_epoch},
                              {"epochs_run", r.epochs_run},
                              {"early_stopped", r.early_stopped}};
        cached_file(crg_dir / "summary.json", [&](const fs::path& p) { std::ofstream(p) << summary.dump(2); });
        cached_file(crg_dir / "encoder.ckpt",
                    [&](const fs::path& p) { save_checkpoint(make_checkpoint(r.encoder, crg_key), p); });
    }
    json summary = json::parse(std::ifstream(crg_dir / "summary.json"));
    return {crg_key, std::move(train), std::move(generator), load_encoder(crg_dir / "encoder.ckpt"), summary};
}

struct DeskEval {
    ProjectionStats stats;
    double spearman_median = 0.0;
    std::array<double, 4> drift_median{};
    MetricsRow model, baseline;
};

std::string desk_detail(const DeskEval& ev);

DeskEval evaluate_desk(const DeskRun& run) {
    const int res = 32;
    DeskEval ev;
    Dataset held;
    held.manifest = plan_dataset(1000, 20241, res, SamplerSpec::defaults(), &held.images);
    for (auto& img : held.images) img = quantized(img);

    // Reference pairs differ only in eyewear; every other attribute and the
    // nuisance seed are shared.
    const auto range = attribute_range(Attribute::Eyewear);
    const auto refs = sample_attributes(50, 20242, SamplerSpec::defaults());
    std::vector<AttributeDirection> dirs;
    for (const auto& a : refs) {
        const auto neutral = quantized(render_sample(a.with(Attribute::Eyewear, range.lo), res));
        const auto attributed = quantized(render_sample(a.with(Attribute::Eyewear, range.hi), res));
        dirs.push_back(direction_from_images(run.encoder, neutral, attributed, "eyewear"));
    }
    const auto direction = average_direction(dirs);

    std::vector<ImageTensor> neutral, attributed;
    for (std::size_t i = 0; i < held.images.size(); ++i)
        (held.manifest.attributed(i, Attribute::Eyewear) ? attributed : neutral).push_back(held.images[i]);
    ev.stats = analyze_attribute(run.encoder, neutral, attributed, direction).stats;

    std::vector<double> rhos;
    std::array<std::vector<double>, 4> drifts;
    constexpr std::size_t kSources = 21;
    const auto zs = encoder_forward(run.encoder, std::span(neutral).first(kSources));
    for (const auto& z : zs) {
        const auto kr = k_range(z, direction, ev.stats);
        std::vector<LatentVector> edited = {z};
        std::vector<double> ks;
        for (int i = 0; i < 11; ++i) {
            ks.push_back(kr.lo + (kr.hi - kr.lo) * i / 10.0);
            edited.push_back(edit_latent(z, direction, ks.back()));
        }
        const auto images = generator_forward(run.generator, edited);
        const auto base = measure_attributes(images[0]);
        std::vector<double> eyewear;
        std::array<double, 4> worst{};
        for (std::size_t i = 1; i < images.size(); ++i) {
            const auto m = measure_attributes(images[i]);
            eyewear.push_back(m.get(Attribute::Eyewear));
            for (auto a : kAllAttributes) {
                const auto j = static_cast<std::size_t>(a);
                worst[j] = std::max(worst[j], std::abs(m.get(a) - base.get(a)));
            }
        }
        rhos.push_back(spearman(ks, eyewear));
        for (std::size_t j = 0; j < 4; ++j) drifts[j].push_back(worst[j]);
    }
    ev.spearman_median = median(rhos);
    for (std::size_t j = 0; j < 4; ++j) ev.drift_median[j] = median(drifts[j]);

    ev.model = evaluate_reconstructions("crg", run.encoder, run.generator, held.images);
    ev.baseline = evaluate_mean_baseline(held.images);
    return ev;
}

std::vector<Outcome> p6_end_to_end(const DeskRun& run, const DeskEval& ev) {
    std::vector<Outcome> out;
    const double s = ev.stats.separation();
    out.push_back({s >= 2.0, "(a) eyewear separation " + fmt(s) + " (mu_n " + fmt(ev.stats.mu_neutral) + ", mu_a " +
                                 fmt(ev.stats.mu_attributed) + ", sigma " + fmt(ev.stats.sigma_neutral) + "/" +
                                 fmt(ev.stats.sigma_attributed) + ")"});
    out.push_back({ev.spearman_median >= 0.9, "(b) median Spearman(k, eyewear) " + fmt(ev.spearman_median)});
    double off = 0.0;
    std::string parts;
    for (auto a : kAllAttributes) {
        if (a == Attribute::Eyewear) continue;
        const double v = ev.drift_median[static_cast<std::size_t>(a)];
        off = std::max(off, v);
        parts += std::string(parts.empty() ? "" : ", ") + std::string(attribute_name(a)) + " " + fmt(v, 3);
    }
    out.push_back({off <= 0.1, "(c) median max off-target drift: " + parts});
    const double gap = ev.model.dhash - ev.baseline.dhash;
    out.push_back({gap >= 0.05, "(d) dhash " + fmt(ev.model.dhash) + " vs mean-image " + fmt(ev.baseline.dhash) +
                                    " (gap " + fmt(gap, 3) + ")"});
    (void)run;
    return out;
}

Outcome p7_generator_contract(const DeskRun& run) {
    const bool fixed_ok = run.crg_summary["generator_digest_before"] == run.crg_summary["generator_digest_after"] &&
                          run.crg_summary["generator_digest_before"] == run.crg_summary["generator_digest_input_after"] &&
                          run.generator.digest() == run.crg_summary["generator_digest_before"];
    Dataset subset;
    subset.manifest = run.train.manifest;
    subset.manifest.records.erase(subset.manifest.records.begin() + 256, subset.manifest.records.end());
    subset.manifest.sample_count = 256;
    subset.images.assign(run.train.images.begin(), run.train.images.begin() + 256);
    auto cfg = desk_crg_config();
    cfg.mode = CrgMode::CoTrained;
    cfg.max_epochs = 1;
    cfg.validation_latents = 64;
    const auto before = run.generator.digest();
    const auto tg = train_encoder(run.generator, subset, cfg);
    const bool tg_changes = tg.generator.digest() != before && run.generator.digest() == before;
    return {fixed_ok && tg_changes, std::string("fixed run digest ") +
                                        (fixed_ok ? "unchanged" : "CHANGED") + " (" +
                                        run.crg_summary["generator_digest_before"].get<std::string>().substr(0, 12) +
                                        "), TG digest " + (tg_changes ? "changed" : "UNCHANGED")};
}

// ---------------------------------------------------------------- P8

Outcome p8_k_range() {
    std::mt19937_64 rng(808);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0, trials = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = t % 2 ? 32 : 4;
        const auto dir = attribute_direction(random_latent(rng, d), random_latent(rng, d), "a");
        std::vector<double> pn, pa;
        for (int i = 0; i < 50; ++i) {
            pn.push_back(-1.0 + 0.3 * n(rng));
            pa.push_back(1.5 + 0.4 * n(rng));
        }
        auto stats = fit_two_gaussians(pn, pa);
        stats.direction = dir.unit;
        auto zp = random_latent(rng, d);
        for (auto& v : zp) v *= 3.0;
        const bool unit = t % 4 >= 2;
        const auto kr = k_range(zp, dir, stats, unit);
        for (double k : {kr.lo, kr.hi, kr.lo + (kr.hi - kr.lo) * u(rng)}) {
            const double p = project_onto_direction(edit_latent(zp, dir, k, unit), dir);
            violations += p < stats.lower_bound() || p > stats.upper_bound();
            ++trials;
        }
    }
    return {violations == 0, std::to_string(trials - violations) + "/" + std::to_string(trials) +
                                 " edited projections inside [mu_n - 3 sigma_n, mu_a + 3 sigma_a]"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite: one pass/fail line per primary criterion", "crg_acceptance"};
    std::string only;
    std::string cache = "acceptance-cache";
    std::string report;
    bool train_only = false;
    bool report_only = false;
    app.add_option("--only", only, "Comma-separated criteria to run (default: all)");
    app.add_option("--cache-dir", cache, "Where the desk-run dataset and checkpoints are cached");
    app.add_option("--report", report, "Write a JSON report to this path");
    app.add_flag("--train-only", train_only, "Build the cached desk-run artifacts and exit");
    app.add_flag("--report-only", report_only,
                 "Exit 0 when every criterion ran, even if some failed; errors still exit 2");
    CLI11_PARSE(app, argc, argv);
    torch::set_num_threads(1);
    torch::NoGradGuard outer;

    std::set<std::string> selected;
    std::stringstream ss(only);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) selected.insert(item);
    auto wanted = [&](const std::string& id) { return selected.empty() || selected.count(id) > 0; };

    if (train_only) {
        torch::AutoGradMode grad(true);
        desk_run(cache);
        return 0;
    }

    struct Line {
        std::string id;
        bool pass;
        std::string detail;
        double seconds;
        double limit;
    };
    std::vector<Line> lines;
    bool errored = false;
    auto run = [&](const std::string& id, double limit, const std::function<Outcome()>& fn) {
        if (!wanted(id)) return;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            torch::AutoGradMode grad(true);
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
            errored = true;
        }
        const double s = seconds_since(t0);
        lines.push_back({id, o.pass && s <= limit, o.detail, s, limit});
        const auto& l = lines.back();
        std::cout << l.id << " " << (l.pass ? "PASS" : "FAIL") << "  " << l.detail << "  [" << fmt(s, 3) << " s, limit "
                  << fmt(limit, 6) << " s]" << std::endl;
    };

    run("P1", 10, p1_hashes);
    run("P2", 5, p2_algebra);
    run("P3", 60, p3_gradients);
    run("P4", 30, p4_gbt);
    run("P5", 15 * 60, p5_oracle_inversion);

    if (wanted("P6") || wanted("P7")) {
        const auto t0 = Clock::now();
        std::optional<DeskRun> desk;
        std::string failure;
        try {
            torch::AutoGradMode grad(true);
            desk.emplace(desk_run(cache));
        } catch (const std::exception& e) {
            failure = e.what();
        }
        const double train_seconds = seconds_since(t0);
        if (wanted("P6")) {
            run("P6", 4 * 3600, [&]() -> Outcome {
                if (!desk) throw std::runtime_error("desk run failed: " + failure);
                const auto ev = evaluate_desk(*desk);
                const auto parts = p6_end_to_end(*desk, ev);
                bool all = true;
                std::string detail;
                for (const auto& p : parts) {
                    all = all && p.pass;
                    detail += std::string(detail.empty() ? "" : "; ") + (p.pass ? "" : "FAILED ") + p.detail;
                }
                return {all, detail + "; artifacts built in " + fmt(train_seconds, 4) + " s this run"};
            });
        }
        if (wanted("P7")) {
            run("P7", 300, [&]() -> Outcome {
                if (!desk) throw std::runtime_error("desk run failed: " + failure);
                return p7_generator_contract(*desk);
            });
        }
    }
    run("P8", 5, p8_k_range);

    const bool all = std::all_of(lines.begin(), lines.end(), [](const Line& l) { return l.pass; });
    if (!report.empty()) {
        json j = json::array();
        for (const auto& l : lines)
            j.push_back({{"id", l.id}, {"pass", l.pass}, {"detail", l.detail}, {"seconds", l.seconds}, {"limit", l.limit}});
        std::ofstream(report) << j.dump(2) << "\n";
    }
    std::cout << (all ? "all selected criteria passed" : "some criteria failed") << std::endl;
    if (errored) return 2;
    return all || report_only ? 0 : 1;
}
