#pragma once

// Thin RAII layer over the C API for the command-line tools and the service.

#include <crg/crg.h>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace crgtool {

class ApiError : public std::runtime_error {
public:
    ApiError(crg_status status, const std::string& message) : std::runtime_error(message), status_(status) {}
    crg_status status() const noexcept { return status_; }

private:
    crg_status status_;
};

inline void check(crg_status status, const std::string& context = {}) {
    if (status == CRG_OK) return;
    std::string msg = crg_last_error();
    if (!context.empty()) msg = context + ": " + msg;
    throw ApiError(status, msg);
}

struct ImageDeleter {
    void operator()(crg_image* p) const { crg_image_free(p); }
};
struct DatasetDeleter {
    void operator()(crg_dataset* p) const { crg_dataset_free(p); }
};
struct GeneratorDeleter {
    void operator()(crg_generator* p) const { crg_generator_free(p); }
};
struct EncoderDeleter {
    void operator()(crg_encoder* p) const { crg_encoder_free(p); }
};

using Image = std::unique_ptr<crg_image, ImageDeleter>;
using Dataset = std::unique_ptr<crg_dataset, DatasetDeleter>;
using GeneratorPtr = std::shared_ptr<crg_generator>;
using EncoderPtr = std::shared_ptr<crg_encoder>;

inline std::string take_string(char* s) {
    std::string out = s ? s : "";
    crg_free(s);
    return out;
}

inline nlohmann::json take_json(char* s) { return nlohmann::json::parse(take_string(s)); }

inline std::vector<std::uint8_t> take_bytes(std::uint8_t* data, std::size_t size) {
    std::vector<std::uint8_t> out(data, data + size);
    crg_free(data);
    return out;
}

inline Image read_png(const std::string& path) {
    crg_image* img = nullptr;
    check(crg_image_read_png(path.c_str(), &img), "reading " + path);
    return Image(img);
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
    crg_image* img = nullptr;
    check(crg_image_decode_png(bytes.data(), bytes.size(), &img), "decoding PNG");
    return Image(img);
}

inline std::vector<std::uint8_t> encode_png(const crg_image* img) {
    std::uint8_t* data = nullptr;
    std::size_t size = 0;
    check(crg_image_encode_png(img, &data, &size), "encoding PNG");
    return take_bytes(data, size);
}

inline void write_png(const crg_image* img, const std::string& path) {
    check(crg_image_write_png(img, path.c_str()), "writing " + path);
}

inline std::string sha256(const std::string& bytes) {
    char hex[65];
    check(crg_sha256_hex(bytes.data(), bytes.size(), hex));
    return hex;
}

inline std::string file_sha256(const std::string& path) {
    char hex[65];
    check(crg_file_sha256_hex(path.c_str(), hex), "hashing " + path);
    return hex;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    char* out = nullptr;
    check(crg_base64_encode(bytes.data(), bytes.size(), &out));
    return take_string(out);
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::uint8_t* data = nullptr;
    std::size_t size = 0;
    check(crg_base64_decode(text.c_str(), &data, &size), "decoding base64");
    return take_bytes(data, size);
}

inline Dataset load_dataset(const std::string& dir, bool verify = true) {
    crg_dataset* ds = nullptr;
    check(crg_dataset_load(dir.c_str(), verify ? 1 : 0, &ds), "loading dataset " + dir);
    return Dataset(ds);
}

inline nlohmann::json dataset_manifest(const crg_dataset* ds) {
    char* out = nullptr;
    check(crg_dataset_manifest(ds, &out));
    return take_json(out);
}

inline Image dataset_image(const crg_dataset* ds, std::size_t i) {
    crg_image* img = nullptr;
    check(crg_dataset_image(ds, i, &img));
    return Image(img);
}

inline GeneratorPtr load_generator(const std::string& path) {
    crg_generator* g = nullptr;
    check(crg_generator_load(path.c_str(), &g), "loading generator " + path);
    return GeneratorPtr(g, GeneratorDeleter{});
}

inline EncoderPtr load_encoder(const std::string& path) {
    crg_encoder* e = nullptr;
    check(crg_encoder_load(path.c_str(), &e), "loading encoder " + path);
    return EncoderPtr(e, EncoderDeleter{});
}

inline nlohmann::json generator_info(const crg_generator* g) {
    char* out = nullptr;
    check(crg_generator_info(g, &out));
    return take_json(out);
}

inline nlohmann::json encoder_info(const crg_encoder* e) {
    char* out = nullptr;
    check(crg_encoder_info(e, &out));
    return take_json(out);
}

inline std::vector<double> encode(const crg_encoder* e, const crg_image* img) {
    std::vector<double> z(static_cast<std::size_t>(crg_encoder_latent_dim(e)));
    check(crg_encoder_encode(e, img, z.data(), z.size()), "encoding image");
    return z;
}

inline Image generate(const crg_generator* g, const std::vector<double>& z) {
    crg_image* img = nullptr;
    check(crg_generator_generate(g, z.data(), z.size(), &img), "generating image");
    return Image(img);
}

inline std::vector<double> edit_latent(const std::string& direction, const std::vector<double>& z, double k,
                                       bool use_unit) {
    std::vector<double> out(z.size());
    check(crg_edit_latent(direction.c_str(), z.data(), z.size(), k, use_unit ? 1 : 0, out.data()), "editing latent");
    return out;
}

struct KRange {
    double lo = 0.0, hi = 0.0;
};

inline KRange k_range(const std::string& direction, const std::string& stats, const std::vector<double>& z,
                      bool use_unit) {
    KRange r;
    check(crg_k_range(direction.c_str(), stats.c_str(), z.data(), z.size(), use_unit ? 1 : 0, &r.lo, &r.hi),
          "computing k range");
    return r;
}

}  // namespace crgtool
