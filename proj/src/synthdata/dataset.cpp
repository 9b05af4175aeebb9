#include "synthdata/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/io.hpp"
#include "synthdata/render.hpp"

namespace crg {

AttributeSampler AttributeSampler::uniform(double lo, double hi) {
    AttributeSampler s;
    s.kind = Kind::Uniform;
    s.lo = lo;
    s.hi = hi;
    return s;
}

AttributeSampler AttributeSampler::fixed(double value) {
    AttributeSampler s;
    s.kind = Kind::Fixed;
    s.value = value;
    return s;
}

AttributeSampler AttributeSampler::binary(double on, double off, double fraction) {
    AttributeSampler s;
    s.kind = Kind::Binary;
    s.on = on;
    s.off = off;
    s.fraction = fraction;
    return s;
}

SamplerSpec SamplerSpec::defaults() {
    SamplerSpec spec;
    spec[Attribute::FaceSize] = AttributeSampler::uniform(0.0, 1.0);
    spec[Attribute::HairShade] = AttributeSampler::uniform(0.0, 1.0);
    spec[Attribute::MouthCurve] = AttributeSampler::uniform(-1.0, 1.0);
    spec[Attribute::Eyewear] = AttributeSampler::binary(1.0, 0.0, 0.5);
    return spec;
}

nlohmann::json SamplerSpec::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (auto a : kAllAttributes) {
        const auto& s = (*this)[a];
        nlohmann::json e;
        switch (s.kind) {
            case AttributeSampler::Kind::Uniform:
                e = {{"kind", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
                break;
            case AttributeSampler::Kind::Fixed:
                e = {{"kind", "fixed"}, {"value", s.value}};
                break;
            case AttributeSampler::Kind::Binary:
                e = {{"kind", "binary"}, {"on", s.on}, {"off", s.off}, {"fraction", s.fraction}};
                break;
        }
        j[std::string(attribute_name(a))] = e;
    }
    return j;
}

SamplerSpec SamplerSpec::from_json(const nlohmann::json& j) {
    SamplerSpec spec = defaults();
    require(j.is_object(), ErrorCode::Config, "sampler spec must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto a = parse_attribute(it.key());
        require(a.has_value(), ErrorCode::Config, "unknown attribute in sampler spec: " + it.key());
        const auto& e = it.value();
        const std::string kind = e.value("kind", "");
        const auto range = attribute_range(*a);
        AttributeSampler s;
        if (kind == "uniform") {
            s = AttributeSampler::uniform(e.value("lo", range.lo), e.value("hi", range.hi));
        } else if (kind == "fixed") {
            require(e.contains("value"), ErrorCode::Config, "fixed sampler needs a value");
            s = AttributeSampler::fixed(e.at("value").get<double>());
        } else if (kind == "binary") {
            s = AttributeSampler::binary(e.value("on", range.hi), e.value("off", range.lo), e.value("fraction", 0.5));
        } else {
            fail(ErrorCode::Config, "unknown sampler kind '" + kind + "' for " + it.key());
        }
        auto inside = [&](double v) { return v >= range.lo && v <= range.hi; };
        require(inside(s.lo) && inside(s.hi) && s.lo <= s.hi && inside(s.value) && inside(s.on) &&
                    inside(s.off) && s.fraction >= 0.0 && s.fraction <= 1.0,
                ErrorCode::Config, "sampler parameters out of range for " + it.key());
        spec[*a] = s;
    }
    return spec;
}

std::string DatasetManifest::image_file(std::size_t index) const {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.png", index);
    return name;
}

namespace {

// Exactly ceil(n * fraction) of the indices [0, n) are "on".
bool binary_on(std::size_t index, double fraction) {
    const auto hi = static_cast<long long>(std::ceil(static_cast<double>(index + 1) * fraction - 1e-12));
    const auto lo = static_cast<long long>(std::ceil(static_cast<double>(index) * fraction - 1e-12));
    return hi - lo == 1;
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

bool DatasetManifest::attributed(std::size_t index, Attribute a) const {
    const auto& s = sampler[a];
    if (s.kind == AttributeSampler::Kind::Binary) return binary_on(index, s.fraction);
    return is_attributed(a, records.at(index).get(a));
}

std::size_t DatasetManifest::attributed_count(Attribute a) const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < records.size(); ++i) count += attributed(i, a) ? 1 : 0;
    return count;
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        nlohmann::json labels = nlohmann::json::object();
        for (auto a : kAllAttributes) labels[std::string(attribute_name(a))] = attributed(i, a);
        samples.push_back({{"id", i},
                           {"file", image_file(i)},
                           {"face_size", r.face_size()},
                           {"hair_shade", r.hair_shade()},
                           {"mouth_curve", r.mouth_curve()},
                           {"eyewear", r.eyewear()},
                           {"nuisance_seed", r.nuisance_seed()},
                           {"attributed", labels}});
    }
    return {{"schema_version", schema_version},
            {"sample_count", sample_count},
            {"resolution", resolution},
            {"seed", seed},
            {"sampler", sampler.to_json()},
            {"pixel_encoding", "8-bit grayscale PNG, level = round((x + 1) / 2 * 255)"},
            {"region_masks",
             {{"hair_shade", "rows v < 3/16"},
              {"eyewear", "rows 5/16 <= v < 7/16, cols 3/16 <= u < 13/16"},
              {"mouth_curve", "rows 10/16 <= v < 13/16, cols 4/16 <= u < 12/16"},
              {"face_size", "all remaining pixels"}}},
            {"samples", samples},
            {"digest", digest}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.schema_version = j.at("schema_version").get<int>();
        require(m.schema_version == kSchemaVersion, ErrorCode::Version,
                "unsupported dataset schema version " + std::to_string(m.schema_version));
        m.sample_count = j.at("sample_count").get<std::size_t>();
        m.resolution = j.at("resolution").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.sampler = SamplerSpec::from_json(j.at("sampler"));
        m.digest = j.at("digest").get<std::string>();
        for (const auto& s : j.at("samples"))
            m.records.emplace_back(s.at("face_size").get<double>(), s.at("hair_shade").get<double>(),
                                   s.at("mouth_curve").get<double>(), s.at("eyewear").get<double>(),
                                   s.at("nuisance_seed").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed dataset manifest: ") + e.what());
    }
    require(m.records.size() == m.sample_count, ErrorCode::InvalidArgument,
            "manifest record count does not match sample_count");
    return m;
}

std::vector<AttributeConfig> sample_attributes(std::size_t n, std::uint64_t seed, const SamplerSpec& sampler) {
    require(n >= 1, ErrorCode::InvalidArgument, "dataset needs at least one sample");
    std::mt19937_64 rng(seed);
    std::vector<AttributeConfig> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 4> v{};
        for (auto a : kAllAttributes) {
            const auto& s = sampler[a];
            // One draw per attribute regardless of kind keeps the stream aligned.
            const double u = unit_uniform(rng);
            double value = 0.0;
            switch (s.kind) {
                case AttributeSampler::Kind::Uniform: value = s.lo + (s.hi - s.lo) * u; break;
                case AttributeSampler::Kind::Fixed: value = s.value; break;
                case AttributeSampler::Kind::Binary: value = binary_on(i, s.fraction) ? s.on : s.off; break;
            }
            v[static_cast<std::size_t>(a)] = value;
        }
        out.emplace_back(v[0], v[1], v[2], v[3], rng());
    }
    return out;
}

std::string content_digest(const std::vector<ImageTensor>& images) {
    Sha256 hasher;
    std::vector<std::uint8_t> levels;
    for (const auto& img : images) {
        const std::int32_t dims[2] = {img.height(), img.width()};
        hasher.update(dims, sizeof(dims));
        levels.resize(img.size());
        auto px = img.data();
        for (std::size_t i = 0; i < px.size(); ++i) levels[i] = quantize_pixel(px[i]);
        hasher.update(levels);
    }
    return hasher.hex();
}

DatasetManifest plan_dataset(std::size_t n, std::uint64_t seed, int resolution, const SamplerSpec& sampler,
                             std::vector<ImageTensor>* rendered) {
    check_resolution(resolution);
    DatasetManifest m;
    m.sample_count = n;
    m.resolution = resolution;
    m.seed = seed;
    m.sampler = sampler;
    m.records = sample_attributes(n, seed, sampler);
    std::vector<ImageTensor> images;
    images.reserve(n);
    for (const auto& r : m.records) images.push_back(render_sample(r, resolution));
    m.digest = content_digest(images);
    if (rendered) *rendered = std::move(images);
    return m;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                                 int resolution, const SamplerSpec& sampler) {
    std::vector<ImageTensor> images;
    auto manifest = plan_dataset(n, seed, resolution, sampler, &images);
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    require(!ec, ErrorCode::Io, "cannot create dataset directory " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < images.size(); ++i) write_png(dir / manifest.image_file(i), images[i]);
    write_file_atomic(dir / "manifest.json", manifest.to_json().dump(1));
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    const auto text = read_file(dir / "manifest.json");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, "manifest is not valid JSON: " + std::string(e.what()));
    }
    return DatasetManifest::from_json(j);
}

Dataset load_dataset(const std::filesystem::path& dir, bool verify) {
    Dataset ds;
    ds.manifest = load_manifest(dir);
    ds.images.reserve(ds.manifest.sample_count);
    for (std::size_t i = 0; i < ds.manifest.sample_count; ++i) {
        auto img = read_png(dir / ds.manifest.image_file(i));
        require(img.height() == ds.manifest.resolution && img.width() == ds.manifest.resolution,
                ErrorCode::Shape, "dataset image " + std::to_string(i) + " has the wrong resolution");
        ds.images.push_back(std::move(img));
    }
    if (verify)
        require(content_digest(ds.images) == ds.manifest.digest, ErrorCode::Digest,
                "dataset content does not match its manifest digest");
    return ds;
}

}  // namespace crg
