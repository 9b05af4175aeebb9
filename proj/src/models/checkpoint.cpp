#include "models/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/io.hpp"

namespace crg {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'R', 'G', 'C'};
constexpr std::size_t kHeaderSize = 4 + 4 + 8;

std::string dtype_name(torch::Dtype t) {
    if (t == torch::kFloat32) return "float32";
    if (t == torch::kFloat64) return "float64";
    fail(ErrorCode::Config, "unsupported tensor dtype in checkpoint");
}

torch::Dtype parse_dtype(const std::string& name) {
    if (name == "float32") return torch::kFloat32;
    if (name == "float64") return torch::kFloat64;
    fail(ErrorCode::Digest, "unknown tensor dtype '" + name + "' in checkpoint metadata");
}

template <typename Model>
ModelCheckpoint make(ModelKind kind, const Model& model, nlohmann::json config, std::string rng) {
    ModelCheckpoint c;
    c.kind = kind;
    c.architecture = model.architecture();
    torch::NoGradGuard no_grad;
    for (auto& [name, t] : model.named_tensors()) c.tensors.emplace_back(name, t.detach().contiguous().clone());
    c.training_config = std::move(config);
    c.rng_state_digest = std::move(rng);
    return c;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

template <typename Model>
Model build(const ModelCheckpoint& ckpt, ModelKind kind) {
    require(ckpt.kind == kind, ErrorCode::Kind,
            std::string("checkpoint holds a ") + to_string(ckpt.kind) + ", expected a " + to_string(kind));
    Model model(ckpt.architecture, 0);
    for (const auto& [name, t] : ckpt.tensors)
        require(t.scalar_type() == ckpt.architecture.torch_dtype(), ErrorCode::Shape,
                "tensor '" + name + "' dtype differs from the architecture dtype");
    model.load_tensors(ckpt.tensors);
    return model;
}

}  // namespace

ModelCheckpoint make_checkpoint(const GeneratorModel& m, nlohmann::json cfg, std::string rng) {
    return make(ModelKind::Generator, m, std::move(cfg), std::move(rng));
}
ModelCheckpoint make_checkpoint(const EncoderModel& m, nlohmann::json cfg, std::string rng) {
    return make(ModelKind::Encoder, m, std::move(cfg), std::move(rng));
}
ModelCheckpoint make_checkpoint(const DiscriminatorModel& m, nlohmann::json cfg, std::string rng) {
    return make(ModelKind::Discriminator, m, std::move(cfg), std::move(rng));
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt) {
    std::vector<std::uint8_t> payload;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto t = tensor.detach().contiguous().cpu();
        const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        entries.push_back({{"name", name},
                           {"shape", t.sizes().vec()},
                           {"dtype", dtype_name(t.scalar_type())},
                           {"offset", payload.size()},
                           {"nbytes", nbytes}});
        const auto* p = static_cast<const std::uint8_t*>(t.data_ptr());
        payload.insert(payload.end(), p, p + nbytes);
    }
    nlohmann::json meta = {{"kind", to_string(ckpt.kind)},
                           {"architecture", ckpt.architecture.to_json()},
                           {"tensors", entries},
                           {"training_config", ckpt.training_config},
                           {"rng_state_digest", ckpt.rng_state_digest},
                           {"payload_digest", sha256_hex(payload)}};
    const auto text = meta.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ModelCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= 4, ErrorCode::Truncated, "checkpoint shorter than its magic bytes");
    require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::Io, "not a checkpoint file (bad magic)");
    require(bytes.size() >= kHeaderSize, ErrorCode::Truncated, "checkpoint header is truncated");
    const auto version = get<std::uint32_t>(bytes, 4);
    require(version == kCheckpointVersion, ErrorCode::Version,
            "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
    const auto meta_len = get<std::uint64_t>(bytes, 8);
    require(meta_len <= bytes.size() - kHeaderSize, ErrorCode::Truncated, "checkpoint metadata is truncated");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + meta_len);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Digest, std::string("checkpoint metadata is corrupt: ") + e.what());
    }

    ModelCheckpoint ckpt;
    const auto payload = bytes.subspan(kHeaderSize + meta_len);
    try {
        ckpt.kind = parse_model_kind(meta.at("kind").get<std::string>());
        ckpt.architecture = Architecture::from_json(meta.at("architecture"));
        ckpt.training_config = meta.at("training_config");
        ckpt.rng_state_digest = meta.at("rng_state_digest").get<std::string>();
        std::size_t expected = 0;
        for (const auto& e : meta.at("tensors"))
            expected = std::max(expected, e.at("offset").get<std::size_t>() + e.at("nbytes").get<std::size_t>());
        require(payload.size() >= expected, ErrorCode::Truncated,
                "checkpoint payload is truncated (" + std::to_string(payload.size()) + " of " +
                    std::to_string(expected) + " bytes)");
        require(payload.size() == expected, ErrorCode::Digest, "checkpoint has trailing bytes after its payload");
        require(sha256_hex(payload) == meta.at("payload_digest").get<std::string>(), ErrorCode::Digest,
                "checkpoint payload digest mismatch");
        for (const auto& e : meta.at("tensors")) {
            const auto dtype = parse_dtype(e.at("dtype").get<std::string>());
            const auto shape = e.at("shape").get<std::vector<int64_t>>();
            const auto offset = e.at("offset").get<std::size_t>();
            const auto nbytes = e.at("nbytes").get<std::size_t>();
            auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
            require(static_cast<std::size_t>(t.numel()) * t.element_size() == nbytes, ErrorCode::Digest,
                    "tensor byte count disagrees with its shape");
            std::memcpy(t.data_ptr(), payload.data() + offset, nbytes);
            ckpt.tensors.emplace_back(e.at("name").get<std::string>(), t);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Digest, std::string("checkpoint metadata is malformed: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_checkpoint(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected) {
    auto ckpt = load_checkpoint(path);
    require(ckpt.kind == expected, ErrorCode::Kind,
            path.string() + " holds a " + to_string(ckpt.kind) + " checkpoint, expected a " + to_string(expected));
    return ckpt;
}

GeneratorModel generator_from_checkpoint(const ModelCheckpoint& c) { return build<GeneratorModel>(c, ModelKind::Generator); }
EncoderModel encoder_from_checkpoint(const ModelCheckpoint& c) { return build<EncoderModel>(c, ModelKind::Encoder); }
DiscriminatorModel discriminator_from_checkpoint(const ModelCheckpoint& c) {
    return build<DiscriminatorModel>(c, ModelKind::Discriminator);
}

GeneratorModel load_generator(const std::filesystem::path& p) {
    return generator_from_checkpoint(load_checkpoint(p, ModelKind::Generator));
}
EncoderModel load_encoder(const std::filesystem::path& p) {
    return encoder_from_checkpoint(load_checkpoint(p, ModelKind::Encoder));
}
DiscriminatorModel load_discriminator(const std::filesystem::path& p) {
    return discriminator_from_checkpoint(load_checkpoint(p, ModelKind::Discriminator));
}

std::string torch_rng_digest() {
    auto state = at::detail::getDefaultCPUGenerator().get_state().contiguous();
    return sha256_hex(std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(state.data_ptr()),
                                                    static_cast<std::size_t>(state.numel())));
}

}  // namespace crg
