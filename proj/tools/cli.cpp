#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "api.hpp"
#include "service.hpp"
#include "workspace.hpp"

namespace crgtool {

namespace {

struct Globals {
    std::string workspace = "crg-workspace";
    std::uint64_t seed = 0;
    std::string config;
    bool verbose = false;
};

struct RunRecord {
    nlohmann::json options = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();
};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Flat key/value pairs from a JSON object or "key = value" lines.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto text = ss.str();
    std::vector<std::pair<std::string, std::string>> out;
    if (trim(text).rfind('{', 0) == 0) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ValidationError("--config", std::string("malformed JSON config: ") + e.what());
        }
        for (const auto& [k, v] : j.items()) {
            if (v.is_string())
                out.emplace_back(k, v.get<std::string>());
            else if (v.is_array())
                for (const auto& item : v) out.emplace_back(k, item.is_string() ? item.get<std::string>() : item.dump());
            else
                out.emplace_back(k, v.dump());
        }
        return out;
    }
    std::istringstream lines(text);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
        ++number;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--config", path + ":" + std::to_string(number) + ": expected key = value");
        auto value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
            value = value.substr(1, value.size() - 2);
        out.emplace_back(trim(line.substr(0, eq)), value);
    }
    return out;
}

// Appends config entries as flags unless the flag was given explicitly.
std::vector<std::string> with_config(std::vector<std::string> args) {
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    }
    if (config.empty()) return args;
    const auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> extra;
    for (const auto& [key, value] : read_config(config)) {
        const auto flag = "--" + key;
        if (given(flag)) continue;
        if (value == "true") {
            extra.push_back(flag);
        } else if (value != "false") {
            extra.push_back(flag);
            extra.push_back(value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string suggestion(const CLI::App& app, const std::string& unknown) {
    std::vector<std::string> names;
    const CLI::App* scope = &app;
    for (const auto* sub : app.get_subcommands())
        if (sub->parsed()) scope = sub;
    for (const auto* a : {scope, &app})
        for (const auto* opt : a->get_options())
            for (const auto& n : opt->get_lnames()) names.push_back("--" + n);
    auto flag = unknown.substr(0, unknown.find('='));
    std::string best;
    std::size_t best_d = 4;
    for (const auto& n : names) {
        const auto d = edit_distance(flag, n);
        if (d < best_d) {
            best_d = d;
            best = n;
        }
    }
    return best;
}

std::string path_digest(const fs::path& p) { return file_sha256(p.string()); }

nlohmann::json read_json_file(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

std::vector<double> parse_latent(const std::string& text) {
    if (fs::exists(text)) return read_json_file(text).get<std::vector<double>>();
    std::vector<double> z;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) z.push_back(std::stod(item));
    return z;
}

void progress_to_log(const char* line, void*) { spdlog::info("{}", line); }

struct ModelPaths {
    fs::path encoder;
    fs::path generator;
};

ModelPaths resolve_models(const Workspace& ws, const std::string& model, const std::string& encoder,
                          const std::string& generator, bool need_encoder, bool need_generator) {
    ModelPaths out;
    if (!encoder.empty()) out.encoder = ws.resolve_checkpoint(kEncoder, encoder);
    if (!generator.empty()) out.generator = ws.resolve_checkpoint(kGenerator, generator);
    const bool missing = (need_encoder && out.encoder.empty()) || (need_generator && out.generator.empty());
    if (missing) {
        std::vector<ModelPair> hits;
        for (const auto& p : ws.model_pairs())
            if (model.empty() || p.id.rfind(model, 0) == 0 || p.encoder.stem().string() == model) hits.push_back(p);
        if (hits.size() != 1)
            throw ApiError(CRG_ERR_NOT_FOUND, hits.empty() ? "no generator/encoder pair matching '" + model + "'"
                                                           : "several model pairs match; pass --model");
        if (out.encoder.empty()) out.encoder = hits[0].encoder;
        if (out.generator.empty()) out.generator = hits[0].generator;
    }
    return out;
}

fs::path training_dataset(const Workspace& ws, const crg_encoder* enc, const std::string& ref) {
    if (!ref.empty()) return ws.resolve_dataset(ref);
    char* cfg = nullptr;
    check(crg_encoder_training_config(enc, &cfg));
    const auto training = take_json(cfg);
    const auto digest = training.value("dataset_digest", "");
    if (auto dir = ws.find_dataset(digest)) return *dir;
    throw ApiError(CRG_ERR_NOT_FOUND, "training dataset " + (digest.empty() ? std::string("(unrecorded)") : digest) +
                                          " not found in workspace; pass --dataset");
}

// ---- subcommands --------------------------------------------------------

struct SynthOpts {
    std::size_t n = 5000;
    int resolution = 32;
    std::string name = "synth";
    double eyewear_fraction = 0.5;
    std::string sampler;
};

nlohmann::json cmd_synth_gen(const Workspace& ws, const Globals& g, const SynthOpts& o, RunRecord& rec) {
    nlohmann::json spec = {{"n", o.n}, {"seed", g.seed}, {"resolution", o.resolution}};
    if (!o.sampler.empty()) spec["sampler"] = read_json_file(o.sampler);
    if (o.eyewear_fraction != 0.5)
        spec["sampler"]["eyewear"] = {{"kind", "binary"}, {"fraction", o.eyewear_fraction}};
    rec.options = spec;
    char* planned = nullptr;
    check(crg_dataset_plan(spec.dump().c_str(), &planned), "planning dataset");
    const auto plan = take_json(planned);
    const auto digest = plan.at("digest").get<std::string>();
    rec.outputs["dataset"] = digest;
    if (auto existing = ws.find_dataset(digest)) {
        spdlog::info("dataset {} already present at {}; nothing to do", short_digest(digest), existing->string());
        return {{"dataset", existing->string()}, {"digest", digest}, {"created", false}};
    }
    const auto staging = ws.datasets() / (".staging-" + utc_timestamp());
    char* made = nullptr;
    check(crg_dataset_generate(staging.string().c_str(), spec.dump().c_str(), &made), "generating dataset");
    const auto manifest = take_json(made);
    if (manifest.at("digest") != digest) throw ApiError(CRG_ERR_DIGEST, "generated dataset digest differs from plan");
    const auto final_dir = ws.dataset_path(o.name, digest);
    fs::rename(staging, final_dir);
    spdlog::info("wrote {} samples to {}", o.n, final_dir.string());
    return {{"dataset", final_dir.string()}, {"digest", digest}, {"created", true}};
}

struct GanOpts {
    std::string dataset;
    std::int64_t steps = 20000;
    int batch = 64;
    double g_lr = 1e-4, d_lr = 2e-4;
    double beta1 = 0.0, beta2 = 0.99, epsilon = 1e-8;
    std::string optimizer = "adam";
    int d_steps = 2;
    int latent_dim = 32;
    std::int64_t log_every = 100, monitor_every = 1000;
    int monitor_samples = 512;
    std::string name = "gan";
};

nlohmann::json cmd_train_gan(const Workspace& ws, const Globals& g, const GanOpts& o, RunRecord& rec) {
    const auto ds_dir = ws.resolve_dataset(o.dataset);
    auto ds = load_dataset(ds_dir.string());
    const auto manifest = dataset_manifest(ds.get());
    const int res = manifest.at("resolution").get<int>();
    nlohmann::json cfg = {{"generator_lr", o.g_lr},         {"discriminator_lr", o.d_lr},
                          {"discriminator_steps", o.d_steps}, {"batch_size", o.batch},
                          {"total_steps", o.steps},         {"seed", g.seed},
                          {"log_every", o.log_every},       {"monitor_every", o.monitor_every},
                          {"monitor_samples", o.monitor_samples},
                          {"optimizer", o.optimizer},
                          {"beta1", o.beta1},
                          {"beta2", o.beta2},
                          {"epsilon", o.epsilon}};
    cfg["generator"] = {{"family", "conv"}, {"latent_dim", o.latent_dim}, {"resolution", res}};
    cfg["discriminator"] = {{"family", "conv"}, {"latent_dim", 0}, {"resolution", res}};
    rec.options = cfg;
    rec.inputs["dataset"] = manifest.at("digest");
    const auto log_path = ws.new_log_path("train-gan");
    const auto d_staging = ws.checkpoint_staging(kDiscriminator);
    const nlohmann::json opts = {{"log_path", log_path.string()},
                                 {"snapshot_dir", (ws.checkpoints() / "snapshots").string()},
                                 {"discriminator_path", d_staging.string()}};
    crg_generator* gen = nullptr;
    char* result = nullptr;
    check(crg_train_gan(ds.get(), cfg.dump().c_str(), opts.dump().c_str(), progress_to_log, nullptr, &gen, &result),
          "GAN training");
    GeneratorPtr generator(gen, GeneratorDeleter{});
    auto summary = take_json(result);
    const auto g_staging = ws.checkpoint_staging(kGenerator);
    check(crg_generator_save(generator.get(), g_staging.string().c_str(), nullptr));
    const auto g_path = ws.store_checkpoint(kGenerator, o.name, g_staging);
    const auto d_path = ws.store_checkpoint(kDiscriminator, o.name, d_staging);
    rec.outputs["generator"] = path_digest(g_path);
    rec.outputs["discriminator"] = path_digest(d_path);
    summary["generator"] = g_path.string();
    summary["discriminator"] = d_path.string();
    summary["log"] = log_path.string();
    return summary;
}

struct EncoderOpts {
    std::string generator;
    std::string dataset;
    std::string mode = "fixed";
    int epochs = 200;
    int batch = 128;
    double lr = 1e-4, rho = 0.9, epsilon = 1e-8, lr_factor = 0.5, val_fraction = 0.1, dropout = 0.5, max_rotation = 30.0;
    int lr_patience = 10, early_stop = 20, val_latents = 512;
    bool no_augment = false, no_hflip = false, no_vflip = false;
    std::string family = "conv";
    int oracle_dim = 4;
    std::string name = "crg";
};

nlohmann::json cmd_train_encoder(const Workspace& ws, const Globals& g, const EncoderOpts& o, RunRecord& rec) {
    const auto ds_dir = ws.resolve_dataset(o.dataset);
    auto ds = load_dataset(ds_dir.string());
    const auto manifest = dataset_manifest(ds.get());
    const int res = manifest.at("resolution").get<int>();

    fs::path g_path;
    GeneratorPtr generator;
    if (o.generator == "oracle") {
        crg_generator* raw = nullptr;
        check(crg_generator_oracle(o.oracle_dim, res, &raw), "building oracle generator");
        generator.reset(raw, GeneratorDeleter{});
        const auto staging = ws.checkpoint_staging(kGenerator);
        check(crg_generator_save(generator.get(), staging.string().c_str(), R"({"oracle": true})"));
        g_path = ws.store_checkpoint(kGenerator, "oracle", staging);
    } else {
        g_path = ws.resolve_checkpoint(kGenerator, o.generator);
        generator = load_generator(g_path.string());
    }
    const int d = crg_generator_latent_dim(generator.get());
    nlohmann::json cfg = {{"lr", o.lr},
                          {"rho", o.rho},
                          {"epsilon", o.epsilon},
                          {"batch_size", o.batch},
                          {"max_epochs", o.epochs},
                          {"lr_patience", o.lr_patience},
                          {"lr_factor", o.lr_factor},
                          {"early_stop_patience", o.early_stop},
                          {"validation_fraction", o.val_fraction},
                          {"validation_latents", o.val_latents},
                          {"mode", o.mode},
                          {"seed", g.seed}};
    cfg["augmentation"] = {{"enabled", !o.no_augment},
                           {"max_rotation_degrees", o.max_rotation},
                           {"horizontal_flip", !o.no_hflip},
                           {"vertical_flip", !o.no_vflip}};
    cfg["encoder"] = {{"family", o.family}, {"latent_dim", d}, {"resolution", res}, {"dropout", o.dropout}};
    rec.options = cfg;
    rec.inputs["dataset"] = manifest.at("digest");
    rec.inputs["generator"] = path_digest(g_path);

    const auto log_path = ws.new_log_path("train-encoder");
    const nlohmann::json opts = {{"log_path", log_path.string()}, {"generator_checkpoint", path_digest(g_path)}};
    crg_encoder* enc = nullptr;
    crg_generator* gen_out = nullptr;
    char* result = nullptr;
    check(crg_train_encoder(generator.get(), ds.get(), cfg.dump().c_str(), opts.dump().c_str(), progress_to_log,
                            nullptr, &enc, &gen_out, &result),
          "encoder training");
    EncoderPtr encoder(enc, EncoderDeleter{});
    GeneratorPtr trained_gen(gen_out, GeneratorDeleter{});
    auto summary = take_json(result);

    char* training_raw = nullptr;
    check(crg_encoder_training_config(encoder.get(), &training_raw));
    auto training = take_json(training_raw);
    if (o.mode == "tg") {
        const auto staging = ws.checkpoint_staging(kGenerator);
        check(crg_generator_save(trained_gen.get(), staging.string().c_str(), nullptr));
        g_path = ws.store_checkpoint(kGenerator, o.name + "-tg", staging);
        training["generator_checkpoint"] = path_digest(g_path);
        summary["generator"] = g_path.string();
        rec.outputs["generator"] = path_digest(g_path);
    }
    const auto e_staging = ws.checkpoint_staging(kEncoder);
    check(crg_encoder_save(encoder.get(), e_staging.string().c_str(), training.dump().c_str()));
    const auto e_path = ws.store_checkpoint(kEncoder, o.name, e_staging);
    rec.outputs["encoder"] = path_digest(e_path);
    summary["encoder"] = e_path.string();
    summary["model_id"] = short_digest(path_digest(e_path));
    summary["log"] = log_path.string();
    return summary;
}

struct InvertOpts {
    std::string model, generator, encoder, image, out, trajectory, loss = "mse";
    int steps = 1000;
    double step_size = 0.1;
    double early_exit = -1.0;
    bool hybrid = false;
};

nlohmann::json cmd_invert(const Workspace& ws, const Globals& g, const InvertOpts& o, RunRecord& rec) {
    const auto paths = resolve_models(ws, o.model, o.encoder, o.generator, o.hybrid, true);
    auto generator = load_generator(paths.generator.string());
    EncoderPtr encoder;
    if (o.hybrid) encoder = load_encoder(paths.encoder.string());
    auto target = read_png(o.image);
    nlohmann::json cfg = {{"steps", o.steps}, {"step_size", o.step_size}, {"init_seed", g.seed}, {"loss", o.loss}};
    if (o.early_exit >= 0) cfg["early_exit_loss"] = o.early_exit;
    rec.options = cfg;
    rec.inputs["generator"] = path_digest(paths.generator);
    rec.inputs["image"] = path_digest(o.image);
    if (encoder) rec.inputs["encoder"] = path_digest(paths.encoder);
    const auto traj = o.trajectory.empty() ? ws.new_log_path("invert") : fs::path(o.trajectory);
    char* result = nullptr;
    check(crg_invert(generator.get(), encoder.get(), target.get(), cfg.dump().c_str(), traj.string().c_str(), &result),
          "inversion");
    auto summary = take_json(result);
    summary["trajectory"] = traj.string();
    if (!o.out.empty()) {
        auto img = generate(generator.get(), summary.at("z").get<std::vector<double>>());
        write_png(img.get(), o.out);
        summary["out"] = o.out;
        rec.outputs["image"] = path_digest(o.out);
    }
    return summary;
}

struct DirectionOpts {
    std::string model, encoder, name, attribute;
    std::vector<std::string> neutral, attributed;
};

nlohmann::json cmd_direction(const Workspace& ws, const Globals&, const DirectionOpts& o, RunRecord& rec) {
    if (o.neutral.size() != o.attributed.size() || o.neutral.empty())
        throw CLI::ValidationError("--ref-neutral/--ref-attr", "give the same positive number of neutral and attributed references");
    const auto paths = resolve_models(ws, o.model, o.encoder, "", true, false);
    auto encoder = load_encoder(paths.encoder.string());
    const auto attribute = o.attribute.empty() ? o.name : o.attribute;
    rec.options = {{"name", o.name}, {"attribute", attribute}, {"pairs", o.neutral.size()}};
    rec.inputs["encoder"] = path_digest(paths.encoder);
    auto list = nlohmann::json::array();
    for (std::size_t i = 0; i < o.neutral.size(); ++i) {
        auto n = read_png(o.neutral[i]);
        auto a = read_png(o.attributed[i]);
        char* out = nullptr;
        check(crg_direction_from_images(encoder.get(), n.get(), a.get(), attribute.c_str(), &out),
              "reference pair " + o.neutral[i] + " / " + o.attributed[i]);
        list.push_back(take_json(out));
    }
    nlohmann::json doc = list.front();
    if (list.size() > 1) {
        char* out = nullptr;
        check(crg_direction_average(list.dump().c_str(), &out), "averaging directions");
        doc = take_json(out);
        doc["attribute"] = attribute;
    }
    doc["model"] = short_digest(path_digest(paths.encoder));
    const auto path = ws.store_direction(o.name, doc);
    rec.outputs["direction"] = Workspace::direction_id(doc);
    return {{"direction_id", Workspace::direction_id(doc)}, {"path", path.string()}, {"unit", doc["unit"]}};
}

struct EditOpts {
    std::string model, encoder, generator, z_from_image, z, out;
    std::vector<std::string> directions;
    std::vector<double> ks;
    bool unit = false;
};

nlohmann::json cmd_edit(const Workspace& ws, const Globals&, const EditOpts& o, RunRecord& rec) {
    if (o.directions.size() != o.ks.size())
        throw CLI::ValidationError("--direction/--k", "each --direction needs a matching --k");
    if (o.z_from_image.empty() == o.z.empty())
        throw CLI::ValidationError("--z-from-image/--z", "give exactly one latent source");
    const auto paths = resolve_models(ws, o.model, o.encoder, o.generator, !o.z_from_image.empty(), true);
    auto generator = load_generator(paths.generator.string());
    rec.inputs["generator"] = path_digest(paths.generator);
    std::vector<double> z;
    if (!o.z_from_image.empty()) {
        auto encoder = load_encoder(paths.encoder.string());
        rec.inputs["encoder"] = path_digest(paths.encoder);
        rec.inputs["image"] = path_digest(o.z_from_image);
        auto img = read_png(o.z_from_image);
        z = encode(encoder.get(), img.get());
    } else {
        z = parse_latent(o.z);
    }
    nlohmann::json edits = nlohmann::json::array();
    for (std::size_t i = 0; i < o.directions.size(); ++i) {
        const auto dpath = ws.resolve_direction(o.directions[i]);
        const auto text = read_text(dpath);
        z = edit_latent(text, z, o.ks[i], o.unit);
        edits.push_back({{"direction", dpath.filename().string()}, {"k", o.ks[i]}});
        rec.inputs["direction_" + std::to_string(i)] = path_digest(dpath);
    }
    rec.options = {{"edits", edits}, {"use_unit", o.unit}};
    auto img = generate(generator.get(), z);
    write_png(img.get(), o.out);
    rec.outputs["image"] = path_digest(o.out);
    return {{"out", o.out}, {"z", z}, {"edits", edits}};
}

struct AnalyzeOpts {
    std::string model, encoder, direction, dataset, attribute;
    int bins = 20;
    std::size_t per_class = 500;
};

nlohmann::json cmd_analyze(const Workspace& ws, const Globals&, const AnalyzeOpts& o, RunRecord& rec) {
    const auto paths = resolve_models(ws, o.model, o.encoder, "", true, false);
    auto encoder = load_encoder(paths.encoder.string());
    const auto dpath = ws.resolve_direction(o.direction);
    const auto direction_text = read_text(dpath);
    const auto direction = nlohmann::json::parse(direction_text);
    const auto attribute = o.attribute.empty() ? direction.value("attribute", "") : o.attribute;
    if (attribute.empty()) throw CLI::ValidationError("--attribute", "the direction has no attribute; pass --attribute");
    const auto ds_dir = training_dataset(ws, encoder.get(), o.dataset);
    auto ds = load_dataset(ds_dir.string());
    const auto n = crg_dataset_size(ds.get());
    std::vector<int> labels(n);
    check(crg_dataset_labels(ds.get(), attribute.c_str(), labels.data()), "labelling dataset");
    std::vector<Image> keep;
    std::vector<const crg_image*> neutral, attributed;
    for (std::size_t i = 0; i < n; ++i) {
        auto& bucket = labels[i] ? attributed : neutral;
        if (bucket.size() >= o.per_class) continue;
        keep.push_back(dataset_image(ds.get(), i));
        bucket.push_back(keep.back().get());
    }
    const auto id = Workspace::direction_id(direction);
    const auto hist = ws.reports() / ("histogram-" + id + ".csv");
    char* out = nullptr;
    check(crg_analyze(encoder.get(), neutral.data(), neutral.size(), attributed.data(), attributed.size(),
                      direction_text.c_str(), hist.string().c_str(), o.bins, &out),
          "analysis");
    auto result = take_json(out);
    write_text_atomic(Workspace::stats_path(dpath), result.dump(2) + "\n");
    write_text_atomic(ws.reports() / ("analysis-" + id + ".json"), result.dump(2) + "\n");
    rec.options = {{"attribute", attribute}, {"bins", o.bins}, {"per_class", o.per_class}};
    rec.inputs["encoder"] = path_digest(paths.encoder);
    rec.inputs["direction"] = id;
    rec.inputs["dataset"] = dataset_manifest(ds.get()).at("digest");
    rec.outputs["histogram"] = path_digest(hist);
    return {{"stats", result["stats"]}, {"histogram", hist.string()}};
}

struct EvalOpts {
    std::string model, encoder, generator, dataset, name = "crg";
    std::size_t limit = 0;
};

nlohmann::json cmd_eval(const Workspace& ws, const Globals&, const EvalOpts& o, RunRecord& rec, std::string& text) {
    const auto paths = resolve_models(ws, o.model, o.encoder, o.generator, true, true);
    auto encoder = load_encoder(paths.encoder.string());
    auto generator = load_generator(paths.generator.string());
    const auto ds_dir = training_dataset(ws, encoder.get(), o.dataset);
    auto ds = load_dataset(ds_dir.string());
    const auto digest = dataset_manifest(ds.get()).at("digest").get<std::string>();
    std::size_t n = crg_dataset_size(ds.get());
    if (o.limit) n = std::min(n, o.limit);
    std::vector<Image> keep;
    std::vector<const crg_image*> images;
    for (std::size_t i = 0; i < n; ++i) {
        keep.push_back(dataset_image(ds.get(), i));
        images.push_back(keep.back().get());
    }
    char* row = nullptr;
    check(crg_evaluate(encoder.get(), generator.get(), images.data(), images.size(), o.name.c_str(), &row),
          "evaluation");
    char* baseline = nullptr;
    check(crg_evaluate_mean_baseline(images.data(), images.size(), &baseline), "baseline evaluation");
    nlohmann::json report = {{"dataset_digest", digest}, {"domain", "[-1,1]"}};
    report["rows"] = {take_json(row), take_json(baseline)};
    char* table = nullptr;
    check(crg_metrics_report_text(report.dump().c_str(), &table));
    text = take_string(table);
    const auto stem = "eval-" + short_digest(path_digest(paths.encoder)) + "-" + short_digest(digest);
    write_text_atomic(ws.reports() / (stem + ".json"), report.dump(2) + "\n");
    write_text_atomic(ws.reports() / (stem + ".txt"), text);
    rec.options = {{"limit", o.limit}, {"name", o.name}};
    rec.inputs["encoder"] = path_digest(paths.encoder);
    rec.inputs["generator"] = path_digest(paths.generator);
    rec.inputs["dataset"] = digest;
    rec.outputs["report"] = path_digest(ws.reports() / (stem + ".json"));
    return report;
}

}  // namespace

int run_cli(int argc, char** argv) {
    std::vector<std::string> raw(argv + 1, argv + argc);
    CLI::App app{"CRG: cyclic reverse generator lab for GAN inversion and latent attribute editing", "crg"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--workspace", g.workspace, "Workspace root (CRG_WORKSPACE overrides)");
    app.add_option("--seed", g.seed, "Seed for sampling and initialization");
    app.add_option("--config", g.config, "Flat key = value or JSON file supplying flag values");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");

    SynthOpts so;
    auto* synth = app.add_subcommand("synth-gen", "Render a labelled synthetic face dataset");
    synth->add_option("--n", so.n, "Number of samples")->check(CLI::PositiveNumber);
    synth->add_option("--resolution", so.resolution, "Image side in pixels");
    synth->add_option("--name", so.name, "Artifact name");
    synth->add_option("--eyewear-fraction", so.eyewear_fraction, "Fraction of samples wearing eyewear")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--sampler", so.sampler, "JSON file with per-attribute sampler overrides")
        ->check(CLI::ExistingFile);

    GanOpts go;
    auto* gan = app.add_subcommand("train-gan", "Train a spectrally normalized GAN on a dataset");
    gan->add_option("--dataset", go.dataset, "Dataset name, digest prefix or path");
    gan->add_option("--steps", go.steps, "Generator updates");
    gan->add_option("--batch", go.batch, "Batch size");
    gan->add_option("--g-lr", go.g_lr, "Generator learning rate");
    gan->add_option("--d-lr", go.d_lr, "Discriminator learning rate");
    gan->add_option("--d-steps", go.d_steps, "Discriminator updates per generator update");
    gan->add_option("--optimizer", go.optimizer, "Optimizer (adam)");
    gan->add_option("--beta1", go.beta1, "Adam beta1");
    gan->add_option("--beta2", go.beta2, "Adam beta2");
    gan->add_option("--epsilon", go.epsilon, "Adam epsilon");
    gan->add_option("--latent-dim", go.latent_dim, "Latent dimension");
    gan->add_option("--log-every", go.log_every, "Log cadence in generator steps");
    gan->add_option("--monitor-every", go.monitor_every, "Frechet proxy cadence");
    gan->add_option("--monitor-samples", go.monitor_samples, "Samples for the Frechet proxy");
    gan->add_option("--name", go.name, "Artifact name");

    EncoderOpts eo;
    auto* enc = app.add_subcommand("train-encoder", "Train the cyclic reverse generator (encoder)");
    enc->add_option("--generator", eo.generator, "Generator checkpoint reference, or 'oracle'")->required();
    enc->add_option("--dataset", eo.dataset, "Dataset name, digest prefix or path");
    enc->add_option("--mode", eo.mode, "fixed (frozen generator) or tg (co-trained)")
        ->check(CLI::IsMember({"fixed", "tg"}));
    enc->add_option("--epochs", eo.epochs, "Maximum epochs");
    enc->add_option("--batch", eo.batch, "Batch size");
    enc->add_option("--lr", eo.lr, "RMSProp learning rate");
    enc->add_option("--rho", eo.rho, "RMSProp decay");
    enc->add_option("--epsilon", eo.epsilon, "RMSProp epsilon");
    enc->add_option("--lr-patience", eo.lr_patience, "Epochs without improvement before halving the rate");
    enc->add_option("--lr-factor", eo.lr_factor, "Learning-rate reduction factor");
    enc->add_option("--early-stop", eo.early_stop, "Epochs without improvement before stopping");
    enc->add_option("--val-fraction", eo.val_fraction, "Held-out fraction of real images");
    enc->add_option("--val-latents", eo.val_latents, "Fixed validation latents");
    enc->add_option("--dropout", eo.dropout, "Encoder spatial dropout rate");
    enc->add_option("--max-rotation", eo.max_rotation, "Augmentation rotation bound in degrees");
    enc->add_flag("--no-augment", eo.no_augment, "Disable real-image augmentation");
    enc->add_flag("--no-hflip", eo.no_hflip, "Disable random horizontal flips");
    enc->add_flag("--no-vflip", eo.no_vflip, "Disable random vertical flips");
    enc->add_option("--encoder-family", eo.family, "conv, dense or affine")
        ->check(CLI::IsMember({"conv", "dense", "affine"}));
    enc->add_option("--oracle-dim", eo.oracle_dim, "Latent dimension of the oracle generator");
    enc->add_option("--name", eo.name, "Artifact name");

    InvertOpts io;
    auto* inv = app.add_subcommand("invert", "Gradient-based latent inversion of an image");
    inv->add_option("--model", io.model, "Model pair id");
    inv->add_option("--generator", io.generator, "Generator checkpoint reference");
    inv->add_option("--encoder", io.encoder, "Encoder checkpoint reference (with --hybrid)");
    inv->add_option("--image", io.image, "Target PNG")->required()->check(CLI::ExistingFile);
    inv->add_option("--steps", io.steps, "Gradient steps");
    inv->add_option("--step-size", io.step_size, "Step size");
    inv->add_option("--loss", io.loss, "mse or mae")->check(CLI::IsMember({"mse", "mae"}));
    inv->add_option("--early-exit", io.early_exit, "Stop once the loss is at or below this value");
    inv->add_flag("--hybrid", io.hybrid, "Start from the encoder estimate");
    inv->add_option("--out", io.out, "Write g(z_best) to this PNG");
    inv->add_option("--trajectory", io.trajectory, "Trajectory JSON-lines path");

    DirectionOpts dop;
    auto* dir = app.add_subcommand("direction", "Attribute direction from reference image pairs");
    dir->add_option("--model", dop.model, "Model pair id");
    dir->add_option("--encoder", dop.encoder, "Encoder checkpoint reference");
    dir->add_option("--ref-neutral", dop.neutral, "Neutral reference PNG (repeatable)")->required();
    dir->add_option("--ref-attr", dop.attributed, "Attributed reference PNG (repeatable)")->required();
    dir->add_option("--name", dop.name, "Direction name")->required();
    dir->add_option("--attribute", dop.attribute, "Attribute label (defaults to the name)");

    EditOpts edo;
    auto* edit = app.add_subcommand("edit", "Apply attribute edits and render the result");
    edit->add_option("--model", edo.model, "Model pair id");
    edit->add_option("--encoder", edo.encoder, "Encoder checkpoint reference");
    edit->add_option("--generator", edo.generator, "Generator checkpoint reference");
    edit->add_option("--z-from-image", edo.z_from_image, "Encode this PNG as the source latent")
        ->check(CLI::ExistingFile);
    edit->add_option("--z", edo.z, "Source latent: comma-separated values or a JSON file");
    edit->add_option("--direction", edo.directions, "Direction name, id or path (repeatable)")->required();
    edit->add_option("--k", edo.ks, "Edit strength per direction (repeatable)")->required();
    edit->add_flag("--unit-direction", edo.unit, "Step along the unit direction instead of the raw one");
    edit->add_option("--out", edo.out, "Output PNG")->required();

    AnalyzeOpts ao;
    auto* ana = app.add_subcommand("analyze", "Projection statistics of a direction over labelled data");
    ana->add_option("--model", ao.model, "Model pair id");
    ana->add_option("--encoder", ao.encoder, "Encoder checkpoint reference");
    ana->add_option("--direction", ao.direction, "Direction name, id or path")->required();
    ana->add_option("--dataset", ao.dataset, "Dataset (defaults to the encoder's training set)");
    ana->add_option("--attribute", ao.attribute, "Label attribute (defaults to the direction's)");
    ana->add_option("--bins", ao.bins, "Histogram bins");
    ana->add_option("--per-class", ao.per_class, "Samples per class");

    EvalOpts evo;
    auto* ev = app.add_subcommand("eval", "Reconstruction metrics against the mean-image baseline");
    ev->add_option("--model", evo.model, "Model pair id");
    ev->add_option("--encoder", evo.encoder, "Encoder checkpoint reference");
    ev->add_option("--generator", evo.generator, "Generator checkpoint reference");
    ev->add_option("--dataset", evo.dataset, "Dataset (defaults to the encoder's training set)");
    ev->add_option("--limit", evo.limit, "Evaluate only the first N images");
    ev->add_option("--name", evo.name, "Row label");

    std::string bind = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP API for the editor");
    serve->add_option("--bind", bind, "Bind address");
    serve->add_option("--port", port, "Port");

    std::vector<std::string> args;
    try {
        args = with_config(raw);
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ExtrasError& e) {
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& a : args.empty() ? raw : args)
            if (a.rfind("--", 0) == 0 && a != "--config") {
                const auto s = suggestion(app, a);
                const auto flag = a.substr(0, a.find('='));
                if (!s.empty() && s != flag) std::cerr << "  unknown flag " << flag << "; did you mean " << s << "?\n";
            }
        std::cerr << "run with --help for usage\n";
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    auto logger = spdlog::stderr_color_mt("crg");
    spdlog::set_default_logger(logger);
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
    if (const char* env = std::getenv("CRG_WORKSPACE"); env && *env) g.workspace = env;
    crg_set_num_threads(1);

    const CLI::App* chosen = app.get_subcommands().front();
    const std::string command = chosen->get_name();
    RunRecord rec;
    nlohmann::json summary;
    std::string text;
    int exit_code = 0;
    std::string error;
    std::unique_ptr<Workspace> ws;
    try {
        ws = std::make_unique<Workspace>(g.workspace);
        if (command == "synth-gen")
            summary = cmd_synth_gen(*ws, g, so, rec);
        else if (command == "train-gan")
            summary = cmd_train_gan(*ws, g, go, rec);
        else if (command == "train-encoder")
            summary = cmd_train_encoder(*ws, g, eo, rec);
        else if (command == "invert")
            summary = cmd_invert(*ws, g, io, rec);
        else if (command == "direction")
            summary = cmd_direction(*ws, g, dop, rec);
        else if (command == "edit")
            summary = cmd_edit(*ws, g, edo, rec);
        else if (command == "analyze")
            summary = cmd_analyze(*ws, g, ao, rec);
        else if (command == "eval")
            summary = cmd_eval(*ws, g, evo, rec, text);
        else if (command == "serve") {
            Service service(*ws);
            spdlog::info("serving {} on http://{}:{}", ws->root().string(), bind, port);
            if (!service.listen(bind, port)) throw ApiError(CRG_ERR_IO, "cannot listen on " + bind + ":" + std::to_string(port));
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ApiError& e) {
        error = std::string(crg_status_name(e.status())) + ": " + e.what();
        exit_code = 2;
    } catch (const std::exception& e) {
        error = e.what();
        exit_code = 2;
    }

    if (ws) {
        nlohmann::json record = {{"time", utc_timestamp()},
                                 {"command", command},
                                 {"argv", raw},
                                 {"config_digest", sha256(rec.options.dump())},
                                 {"options", rec.options},
                                 {"inputs", rec.inputs},
                                 {"outputs", rec.outputs},
                                 {"exit_code", exit_code}};
        if (!error.empty()) record["error"] = error;
        try {
            ws->append_provenance(record);
        } catch (const std::exception& e) {
            spdlog::warn("could not append provenance record: {}", e.what());
        }
    }
    if (exit_code != 0) {
        spdlog::error("{} failed: {}", command, error);
        return exit_code;
    }
    if (!text.empty()) std::cout << text;
    if (!summary.is_null()) std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace crgtool
