#include "crg/crg.h"

#include <torch/torch.h>

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/image.hpp"
#include "common/io.hpp"
#include "cyclic/crg_training.hpp"
#include "editing/editing.hpp"
#include "gan/gan_training.hpp"
#include "inversion/gbt.hpp"
#include "metrics/metrics.hpp"
#include "models/checkpoint.hpp"
#include "synthdata/dataset.hpp"

struct crg_image {
    crg::ImageTensor image;
};

struct crg_dataset {
    crg::Dataset dataset;
};

struct crg_generator {
    std::shared_ptr<const crg::GeneratorModel> model;
    nlohmann::json training_config = nlohmann::json::object();
};

struct crg_encoder {
    std::shared_ptr<const crg::EncoderModel> model;
    nlohmann::json training_config = nlohmann::json::object();
};

namespace {

thread_local std::string last_error;

crg_status to_status(crg::ErrorCode code) { return static_cast<crg_status>(static_cast<int>(code)); }

template <typename F>
crg_status guarded(F&& body) {
    try {
        torch::NoGradGuard no_grad;
        body();
        last_error.clear();
        return CRG_OK;
    } catch (const crg::Error& e) {
        last_error = e.what();
        return to_status(e.code());
    } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed JSON: ") + e.what();
        return CRG_ERR_INVALID_ARGUMENT;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return CRG_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return CRG_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown failure";
        return CRG_ERR_INTERNAL;
    }
}

void need(const void* ptr, const char* name) {
    if (!ptr) crg::fail(crg::ErrorCode::InvalidArgument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void put_json(char** out, const nlohmann::json& j) {
    need(out, "out");
    *out = dup_string(j.dump());
}

nlohmann::json parse_json(const char* text, const char* what) {
    if (!text || !*text) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        crg::fail(crg::ErrorCode::InvalidArgument, std::string("malformed ") + what + ": " + e.what());
    }
}

crg::LatentVector latent(const double* z, std::size_t dim) {
    need(z, "z");
    return crg::LatentVector(z, z + dim);
}

std::vector<crg::ImageTensor> image_list(const crg_image* const* images, std::size_t count) {
    if (count) need(images, "images");
    std::vector<crg::ImageTensor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        need(images[i], "image");
        out.push_back(images[i]->image);
    }
    return out;
}

crg::AttributeDirection direction(const char* json) {
    need(json, "direction_json");
    return crg::AttributeDirection::from_json(parse_json(json, "direction"));
}

template <typename Model>
nlohmann::json model_info(const Model& m, const char* kind) {
    return {{"kind", kind},
            {"architecture", m.architecture().to_json()},
            {"latent_dim", m.architecture().latent_dim},
            {"resolution", m.architecture().resolution},
            {"parameters", m.parameter_count()},
            {"digest", m.digest()}};
}

crg::DatasetManifest plan_from_spec(const nlohmann::json& spec, std::vector<crg::ImageTensor>* images) {
    const auto n = spec.at("n").get<std::size_t>();
    const auto seed = spec.value("seed", std::uint64_t{0});
    const int res = spec.value("resolution", 32);
    const auto sampler =
        spec.contains("sampler") ? crg::SamplerSpec::from_json(spec.at("sampler")) : crg::SamplerSpec::defaults();
    return crg::plan_dataset(n, seed, res, sampler, images);
}

}  // namespace

extern "C" {

const char* crg_version(void) { return "0.1.0"; }

const char* crg_status_name(crg_status status) {
    if (status == CRG_OK) return "ok";
    if (status < CRG_ERR_INVALID_ARGUMENT || status > CRG_ERR_INTERNAL) return "unknown";
    return crg::to_string(static_cast<crg::ErrorCode>(status));
}

const char* crg_last_error(void) { return last_error.c_str(); }

void crg_set_num_threads(int threads) {
    if (threads > 0) torch::set_num_threads(threads);
}

void crg_free(void* ptr) { std::free(ptr); }

crg_status crg_sha256_hex(const void* data, size_t size, char out[65]) {
    return guarded([&] {
        if (size) need(data, "data");
        need(out, "out");
        const auto hex = crg::Sha256().update(data, size).hex();
        std::memcpy(out, hex.c_str(), 65);
    });
}

crg_status crg_file_sha256_hex(const char* path, char out[65]) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        const auto hex = crg::sha256_hex(crg::read_file(path));
        std::memcpy(out, hex.c_str(), 65);
    });
}

crg_status crg_base64_encode(const void* data, size_t size, char** out) {
    return guarded([&] {
        if (size) need(data, "data");
        need(out, "out");
        *out = dup_string(crg::base64_encode({static_cast<const std::uint8_t*>(data), size}));
    });
}

crg_status crg_base64_decode(const char* text, uint8_t** out, size_t* size) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        need(size, "size");
        const auto bytes = crg::base64_decode(text);
        auto* buf = static_cast<uint8_t*>(std::malloc(bytes.size() ? bytes.size() : 1));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, bytes.data(), bytes.size());
        *out = buf;
        *size = bytes.size();
    });
}

crg_status crg_image_create(int height, int width, const float* pixels, crg_image** out) {
    return guarded([&] {
        need(pixels, "pixels");
        need(out, "out");
        crg::require(height > 0 && width > 0, crg::ErrorCode::Shape, "image dimensions must be positive");
        const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
        crg::ImageTensor img(height, width, std::vector<float>(pixels, pixels + n));
        img.validate();
        *out = new crg_image{std::move(img)};
    });
}

crg_status crg_image_decode_png(const uint8_t* bytes, size_t size, crg_image** out) {
    return guarded([&] {
        need(bytes, "bytes");
        need(out, "out");
        *out = new crg_image{crg::decode_png({bytes, size})};
    });
}

crg_status crg_image_read_png(const char* path, crg_image** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new crg_image{crg::read_png(path)};
    });
}

crg_status crg_image_write_png(const crg_image* image, const char* path) {
    return guarded([&] {
        need(image, "image");
        need(path, "path");
        crg::write_png(path, image->image);
    });
}

crg_status crg_image_encode_png(const crg_image* image, uint8_t** bytes, size_t* size) {
    return guarded([&] {
        need(image, "image");
        need(bytes, "bytes");
        need(size, "size");
        const auto png = crg::encode_png(image->image);
        auto* buf = static_cast<uint8_t*>(std::malloc(png.size()));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, png.data(), png.size());
        *bytes = buf;
        *size = png.size();
    });
}

int crg_image_height(const crg_image* image) { return image ? image->image.height() : 0; }
int crg_image_width(const crg_image* image) { return image ? image->image.width() : 0; }
const float* crg_image_pixels(const crg_image* image) { return image ? image->image.data().data() : nullptr; }
void crg_image_free(crg_image* image) { delete image; }

crg_status crg_image_hash(const crg_image* image, const char* kind, char out[17]) {
    return guarded([&] {
        need(image, "image");
        need(kind, "kind");
        need(out, "out");
        const std::string k = kind;
        crg::HashCode code;
        if (k == "dhash")
            code = crg::dhash(image->image);
        else if (k == "phash")
            code = crg::phash(image->image);
        else if (k == "whash")
            code = crg::whash(image->image);
        else
            crg::fail(crg::ErrorCode::InvalidArgument, "unknown hash kind '" + k + "'");
        std::memcpy(out, code.hex().c_str(), 17);
    });
}

crg_status crg_hash_similarity(const char* hex_a, const char* hex_b, double* out) {
    return guarded([&] {
        need(hex_a, "hex_a");
        need(hex_b, "hex_b");
        need(out, "out");
        *out = crg::hash_similarity(crg::HashCode::from_hex(hex_a), crg::HashCode::from_hex(hex_b));
    });
}

crg_status crg_pixel_errors(const crg_image* a, const crg_image* b, double* mae, double* mse) {
    return guarded([&] {
        need(a, "a");
        need(b, "b");
        if (mae) *mae = crg::pixel_mae(a->image, b->image);
        if (mse) *mse = crg::pixel_mse(a->image, b->image);
    });
}

crg_status crg_dataset_plan(const char* spec_json, char** manifest_json) {
    return guarded([&] {
        need(spec_json, "spec_json");
        put_json(manifest_json, plan_from_spec(parse_json(spec_json, "dataset spec"), nullptr).to_json());
    });
}

crg_status crg_dataset_generate(const char* dir, const char* spec_json, char** manifest_json) {
    return guarded([&] {
        need(dir, "dir");
        need(spec_json, "spec_json");
        const auto spec = parse_json(spec_json, "dataset spec");
        const auto sampler =
            spec.contains("sampler") ? crg::SamplerSpec::from_json(spec.at("sampler")) : crg::SamplerSpec::defaults();
        const auto manifest = crg::generate_dataset(dir, spec.at("n").get<std::size_t>(),
                                                    spec.value("seed", std::uint64_t{0}),
                                                    spec.value("resolution", 32), sampler);
        if (manifest_json) put_json(manifest_json, manifest.to_json());
    });
}

crg_status crg_dataset_load(const char* dir, int verify, crg_dataset** out) {
    return guarded([&] {
        need(dir, "dir");
        need(out, "out");
        *out = new crg_dataset{crg::load_dataset(dir, verify != 0)};
    });
}

size_t crg_dataset_size(const crg_dataset* dataset) { return dataset ? dataset->dataset.images.size() : 0; }

crg_status crg_dataset_manifest(const crg_dataset* dataset, char** manifest_json) {
    return guarded([&] {
        need(dataset, "dataset");
        put_json(manifest_json, dataset->dataset.manifest.to_json());
    });
}

crg_status crg_dataset_image(const crg_dataset* dataset, size_t index, crg_image** out) {
    return guarded([&] {
        need(dataset, "dataset");
        need(out, "out");
        crg::require(index < dataset->dataset.images.size(), crg::ErrorCode::InvalidArgument,
                     "dataset index out of range");
        *out = new crg_image{dataset->dataset.images[index]};
    });
}

crg_status crg_dataset_labels(const crg_dataset* dataset, const char* attribute, int* labels) {
    return guarded([&] {
        need(dataset, "dataset");
        need(attribute, "attribute");
        need(labels, "labels");
        const auto a = crg::parse_attribute(attribute);
        crg::require(a.has_value(), crg::ErrorCode::InvalidArgument, std::string("unknown attribute '") + attribute + "'");
        const auto& m = dataset->dataset.manifest;
        for (std::size_t i = 0; i < dataset->dataset.images.size(); ++i) labels[i] = m.attributed(i, *a) ? 1 : 0;
    });
}

void crg_dataset_free(crg_dataset* dataset) { delete dataset; }

crg_status crg_generator_load(const char* path, crg_generator** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        const auto ckpt = crg::load_checkpoint(path, crg::ModelKind::Generator);
        *out = new crg_generator{std::make_shared<const crg::GeneratorModel>(crg::generator_from_checkpoint(ckpt)),
                                 ckpt.training_config};
    });
}

crg_status crg_generator_oracle(int latent_dim, int resolution, crg_generator** out) {
    return guarded([&] {
        need(out, "out");
        *out = new crg_generator{
            std::make_shared<const crg::GeneratorModel>(crg::GeneratorModel::oracle(latent_dim, resolution))};
    });
}

crg_status crg_generator_save(const crg_generator* generator, const char* path, const char* training_config_json) {
    return guarded([&] {
        need(generator, "generator");
        need(path, "path");
        auto cfg = training_config_json ? parse_json(training_config_json, "training config")
                                        : generator->training_config;
        crg::save_checkpoint(crg::make_checkpoint(*generator->model, cfg, crg::torch_rng_digest()), path);
    });
}

crg_status crg_generator_info(const crg_generator* generator, char** info_json) {
    return guarded([&] {
        need(generator, "generator");
        auto info = model_info(*generator->model, "generator");
        info["training_config"] = generator->training_config;
        put_json(info_json, info);
    });
}

int crg_generator_latent_dim(const crg_generator* generator) {
    return generator ? generator->model->latent_dim() : 0;
}

int crg_generator_resolution(const crg_generator* generator) {
    return generator ? generator->model->resolution() : 0;
}

crg_status crg_generator_generate(const crg_generator* generator, const double* z, size_t dim, crg_image** out) {
    return guarded([&] {
        need(generator, "generator");
        need(out, "out");
        std::vector<crg::LatentVector> zs = {latent(z, dim)};
        *out = new crg_image{crg::generator_forward(*generator->model, zs)[0]};
    });
}

void crg_generator_free(crg_generator* generator) { delete generator; }

crg_status crg_encoder_load(const char* path, crg_encoder** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        const auto ckpt = crg::load_checkpoint(path, crg::ModelKind::Encoder);
        *out = new crg_encoder{std::make_shared<const crg::EncoderModel>(crg::encoder_from_checkpoint(ckpt)),
                               ckpt.training_config};
    });
}

crg_status crg_encoder_training_config(const crg_encoder* encoder, char** config_json) {
    return guarded([&] {
        need(encoder, "encoder");
        put_json(config_json, encoder->training_config);
    });
}

crg_status crg_encoder_save(const crg_encoder* encoder, const char* path, const char* training_config_json) {
    return guarded([&] {
        need(encoder, "encoder");
        need(path, "path");
        auto cfg =
            training_config_json ? parse_json(training_config_json, "training config") : encoder->training_config;
        crg::save_checkpoint(crg::make_checkpoint(*encoder->model, cfg, crg::torch_rng_digest()), path);
    });
}

crg_status crg_encoder_info(const crg_encoder* encoder, char** info_json) {
    return guarded([&] {
        need(encoder, "encoder");
        auto info = model_info(*encoder->model, "encoder");
        info["training_config"] = encoder->training_config;
        put_json(info_json, info);
    });
}

int crg_encoder_latent_dim(const crg_encoder* encoder) { return encoder ? encoder->model->latent_dim() : 0; }

int crg_encoder_resolution(const crg_encoder* encoder) { return encoder ? encoder->model->resolution() : 0; }

crg_status crg_encoder_encode(const crg_encoder* encoder, const crg_image* image, double* z, size_t dim) {
    return guarded([&] {
        need(encoder, "encoder");
        need(image, "image");
        need(z, "z");
        crg::require(dim == static_cast<std::size_t>(encoder->model->latent_dim()), crg::ErrorCode::Shape,
                     "output buffer length does not match the latent dimension");
        std::vector<crg::ImageTensor> xs = {image->image};
        const auto zs = crg::encoder_forward(*encoder->model, xs);
        std::copy(zs[0].begin(), zs[0].end(), z);
    });
}

void crg_encoder_free(crg_encoder* encoder) { delete encoder; }

crg_status crg_train_gan(const crg_dataset* dataset, const char* config_json, const char* options_json,
                         crg_progress_fn progress, void* user, crg_generator** generator_out, char** result_json) {
    return guarded([&] {
        need(dataset, "dataset");
        need(generator_out, "generator_out");
        torch::GradMode::set_enabled(true);
        const auto config = crg::GanTrainConfig::from_json(parse_json(config_json, "GAN config"));
        const auto opts = parse_json(options_json, "options");
        crg::GanTrainOptions options;
        if (opts.contains("log_path")) options.log_path = opts.at("log_path").get<std::string>();
        if (opts.contains("snapshot_dir")) options.snapshot_dir = opts.at("snapshot_dir").get<std::string>();
        if (progress)
            options.on_log = [&](const crg::GanLogEntry& e) { progress(e.to_json().dump().c_str(), user); };
        auto result = crg::train_gan(dataset->dataset, config, options);
        const auto cfg_json = config.to_json();
        nlohmann::json training = {{"gan", cfg_json}, {"dataset_digest", dataset->dataset.manifest.digest}};
        if (opts.contains("discriminator_path"))
            crg::save_checkpoint(crg::make_checkpoint(result.discriminator, training, crg::torch_rng_digest()),
                                 opts.at("discriminator_path").get<std::string>());
        nlohmann::json out = {{"generator_steps", result.generator_steps},
                              {"discriminator_steps", result.discriminator_steps},
                              {"generator_digest", result.generator.digest()},
                              {"discriminator_digest", result.discriminator.digest()}};
        if (!result.log.empty()) out["last_log"] = result.log.back().to_json();
        *generator_out =
            new crg_generator{std::make_shared<const crg::GeneratorModel>(std::move(result.generator)), training};
        if (result_json) put_json(result_json, out);
    });
}

crg_status crg_train_encoder(const crg_generator* generator, const crg_dataset* dataset, const char* config_json,
                             const char* options_json, crg_progress_fn progress, void* user,
                             crg_encoder** encoder_out, crg_generator** generator_out, char** result_json) {
    return guarded([&] {
        need(generator, "generator");
        need(dataset, "dataset");
        need(encoder_out, "encoder_out");
        torch::GradMode::set_enabled(true);
        const auto config = crg::CrgTrainConfig::from_json(parse_json(config_json, "encoder config"));
        const auto opts = parse_json(options_json, "options");
        crg::CrgTrainOptions options;
        if (opts.contains("log_path")) options.log_path = opts.at("log_path").get<std::string>();
        if (progress)
            options.on_epoch = [&](const crg::CrgEpochLog& e) { progress(e.to_json().dump().c_str(), user); };
        const auto before = generator->model->digest();
        auto result = crg::train_encoder(*generator->model, dataset->dataset, config, options);
        nlohmann::json training = {{"crg", config.to_json()},
                                   {"dataset_digest", dataset->dataset.manifest.digest},
                                   {"generator_digest", before}};
        if (opts.contains("generator_checkpoint"))
            training["generator_checkpoint"] = opts.at("generator_checkpoint");
        nlohmann::json out = {{"best_epoch", result.best_epoch},
                              {"epochs_run", result.epochs_run},
                              {"early_stopped", result.early_stopped},
                              {"final_lr", result.final_lr},
                              {"generator_digest_before", before},
                              {"generator_digest_after", result.generator.digest()},
                              {"encoder_digest", result.encoder.digest()}};
        for (const auto& e : result.log)
            if (e.epoch == result.best_epoch) out["best"] = e.to_json();
        *encoder_out =
            new crg_encoder{std::make_shared<const crg::EncoderModel>(std::move(result.encoder)), training};
        if (generator_out) {
            auto gen_training = generator->training_config;
            if (config.mode == crg::CrgMode::CoTrained) gen_training["co_trained"] = training;
            *generator_out = new crg_generator{
                std::make_shared<const crg::GeneratorModel>(std::move(result.generator)), gen_training};
        }
        if (result_json) put_json(result_json, out);
    });
}

crg_status crg_invert(const crg_generator* generator, const crg_encoder* encoder, const crg_image* target,
                      const char* config_json, const char* trajectory_path, char** result_json) {
    return guarded([&] {
        need(generator, "generator");
        need(target, "target");
        torch::GradMode::set_enabled(true);
        const auto config = crg::GbtConfig::from_json(parse_json(config_json, "inversion config"));
        std::optional<std::filesystem::path> traj;
        if (trajectory_path) traj = trajectory_path;
        nlohmann::json out;
        crg::GbtResult r;
        if (encoder) {
            auto h = crg::invert_hybrid(*generator->model, *encoder->model, target->image, config, traj);
            out["loss_encoder"] = h.loss_encoder;
            out["z_encoder"] = h.z_encoder;
            r = std::move(h.refined);
        } else {
            r = crg::invert_latent_gbt(*generator->model, target->image, config, traj);
        }
        out["z"] = r.z_best;
        out["loss"] = r.loss_best;
        out["best_step"] = r.best_step;
        out["steps"] = r.trajectory.empty() ? 0 : r.trajectory.back().step;
        put_json(result_json, out);
    });
}

crg_status crg_direction_from_latents(const double* z_neutral, const double* z_attributed, size_t dim,
                                      const char* attribute, char** direction_json) {
    return guarded([&] {
        put_json(direction_json, crg::attribute_direction(latent(z_neutral, dim), latent(z_attributed, dim),
                                                          attribute ? attribute : "", "pair")
                                     .to_json());
    });
}

crg_status crg_direction_from_images(const crg_encoder* encoder, const crg_image* neutral,
                                     const crg_image* attributed, const char* attribute, char** direction_json) {
    return guarded([&] {
        need(encoder, "encoder");
        need(neutral, "neutral");
        need(attributed, "attributed");
        put_json(direction_json, crg::direction_from_images(*encoder->model, neutral->image, attributed->image,
                                                            attribute ? attribute : "")
                                     .to_json());
    });
}

crg_status crg_direction_average(const char* directions_json, char** direction_json) {
    return guarded([&] {
        need(directions_json, "directions_json");
        const auto arr = parse_json(directions_json, "direction list");
        crg::require(arr.is_array(), crg::ErrorCode::InvalidArgument, "expected a JSON array of directions");
        std::vector<crg::AttributeDirection> ds;
        for (const auto& d : arr) ds.push_back(crg::AttributeDirection::from_json(d));
        put_json(direction_json, crg::average_direction(ds).to_json());
    });
}

crg_status crg_edit_latent(const char* direction_json, const double* z, size_t dim, double k, int use_unit,
                           double* out) {
    return guarded([&] {
        need(out, "out");
        const auto za = crg::edit_latent(latent(z, dim), direction(direction_json), k, use_unit != 0);
        std::copy(za.begin(), za.end(), out);
    });
}

crg_status crg_project(const char* direction_json, const double* z, size_t dim, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = crg::project_onto_direction(latent(z, dim), direction(direction_json));
    });
}

crg_status crg_analyze(const crg_encoder* encoder, const crg_image* const* neutral, size_t neutral_count,
                       const crg_image* const* attributed, size_t attributed_count, const char* direction_json,
                       const char* histogram_path, int bins, char** result_json) {
    return guarded([&] {
        need(encoder, "encoder");
        const auto n = image_list(neutral, neutral_count);
        const auto a = image_list(attributed, attributed_count);
        std::optional<std::filesystem::path> hist;
        if (histogram_path) hist = histogram_path;
        const auto r = crg::analyze_attribute(*encoder->model, n, a, direction(direction_json), hist,
                                              bins > 0 ? bins : 20);
        put_json(result_json, {{"stats", r.stats.to_json()}, {"histogram_csv", crg::histogram_csv(r.histogram)}});
    });
}

crg_status crg_k_range(const char* direction_json, const char* stats_json, const double* z, size_t dim, int use_unit,
                       double* k_lo, double* k_hi) {
    return guarded([&] {
        need(stats_json, "stats_json");
        need(k_lo, "k_lo");
        need(k_hi, "k_hi");
        const auto stats = crg::ProjectionStats::from_json(parse_json(stats_json, "projection stats"));
        const auto r = crg::k_range(latent(z, dim), direction(direction_json), stats, use_unit != 0);
        *k_lo = r.lo;
        *k_hi = r.hi;
    });
}

crg_status crg_evaluate(const crg_encoder* encoder, const crg_generator* generator, const crg_image* const* images,
                        size_t count, const char* name, char** row_json) {
    return guarded([&] {
        need(encoder, "encoder");
        need(generator, "generator");
        const auto xs = image_list(images, count);
        put_json(row_json,
                 crg::evaluate_reconstructions(name ? name : "crg", *encoder->model, *generator->model, xs).to_json());
    });
}

crg_status crg_evaluate_mean_baseline(const crg_image* const* images, size_t count, char** row_json) {
    return guarded([&] {
        const auto xs = image_list(images, count);
        put_json(row_json, crg::evaluate_mean_baseline(xs).to_json());
    });
}

crg_status crg_metrics_report_text(const char* report_json, char** text) {
    return guarded([&] {
        need(report_json, "report_json");
        need(text, "text");
        const auto j = parse_json(report_json, "report");
        crg::MetricsReport report;
        report.dataset_digest = j.value("dataset_digest", "");
        report.domain = j.value("domain", report.domain);
        for (const auto& r : j.at("rows")) {
            crg::MetricsRow row;
            row.name = r.at("name").get<std::string>();
            row.dhash = r.at("dhash").get<double>();
            row.phash = r.at("phash").get<double>();
            row.whash = r.at("whash").get<double>();
            row.mae = r.at("mae").get<double>();
            row.mse = r.at("mse").get<double>();
            row.count = r.at("count").get<std::size_t>();
            report.rows.push_back(row);
        }
        *text = dup_string(report.to_text());
    });
}

}  // extern "C"
