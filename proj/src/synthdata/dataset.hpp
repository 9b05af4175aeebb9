#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "common/image.hpp"
#include "json.hpp"
#include "synthdata/attributes.hpp"

namespace crg {

struct AttributeSampler {
    enum class Kind { Uniform, Fixed, Binary };
    Kind kind = Kind::Uniform;
    double lo = 0.0, hi = 1.0;     // Uniform
    double value = 0.0;            // Fixed
    double on = 1.0, off = 0.0;    // Binary
    double fraction = 0.5;         // Binary: exactly ceil(n * fraction) samples are "on"

    static AttributeSampler uniform(double lo, double hi);
    static AttributeSampler fixed(double value);
    static AttributeSampler binary(double on, double off, double fraction);
};

struct SamplerSpec {
    std::array<AttributeSampler, 4> attributes;

    // face/hair/mouth uniform over their ranges; eyewear binary {1, 0} at 50%.
    static SamplerSpec defaults();

    AttributeSampler& operator[](Attribute a) { return attributes[static_cast<std::size_t>(a)]; }
    const AttributeSampler& operator[](Attribute a) const { return attributes[static_cast<std::size_t>(a)]; }

    nlohmann::json to_json() const;
    static SamplerSpec from_json(const nlohmann::json& j);
};

struct DatasetManifest {
    static constexpr int kSchemaVersion = 1;

    int schema_version = kSchemaVersion;
    std::size_t sample_count = 0;
    int resolution = 32;
    std::uint64_t seed = 0;
    SamplerSpec sampler;
    std::vector<AttributeConfig> records;
    // SHA-256 over the 8-bit quantized pixels of every sample, in order.
    std::string digest;

    std::string image_file(std::size_t index) const;
    // Neutral/attributed label; binary-sampled attributes use their on/off
    // assignment, others the range midpoint.
    bool attributed(std::size_t index, Attribute a) const;
    std::size_t attributed_count(Attribute a) const;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Attribute records for (n, seed, sampler); n == 0 is rejected.
std::vector<AttributeConfig> sample_attributes(std::size_t n, std::uint64_t seed, const SamplerSpec& sampler);

std::string content_digest(const std::vector<ImageTensor>& images);

// Records and digest without touching the filesystem.
DatasetManifest plan_dataset(std::size_t n, std::uint64_t seed, int resolution, const SamplerSpec& sampler,
                             std::vector<ImageTensor>* rendered = nullptr);

// Renders n samples into dir/images/*.png and writes dir/manifest.json.
DatasetManifest generate_dataset(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                                 int resolution, const SamplerSpec& sampler);

struct Dataset {
    DatasetManifest manifest;
    std::vector<ImageTensor> images;
};

// Loads manifest and images; with verify set, recomputes the digest and
// throws Error(Digest) on mismatch.
Dataset load_dataset(const std::filesystem::path& dir, bool verify = true);
DatasetManifest load_manifest(const std::filesystem::path& dir);

}  // namespace crg
