#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "models/networks.hpp"

namespace crg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Container layout: "CRGC" | u32 version | u64 metadata length | metadata JSON |
// raw little-endian tensor payloads in metadata order.
struct ModelCheckpoint {
    ModelKind kind = ModelKind::Generator;
    Architecture architecture;
    NamedTensors tensors;
    nlohmann::json training_config = nlohmann::json::object();
    std::string rng_state_digest;
};

ModelCheckpoint make_checkpoint(const GeneratorModel& model, nlohmann::json training_config = nlohmann::json::object(),
                                std::string rng_digest = {});
ModelCheckpoint make_checkpoint(const EncoderModel& model, nlohmann::json training_config = nlohmann::json::object(),
                                std::string rng_digest = {});
ModelCheckpoint make_checkpoint(const DiscriminatorModel& model,
                                nlohmann::json training_config = nlohmann::json::object(), std::string rng_digest = {});

std::vector<std::uint8_t> serialize_checkpoint(const ModelCheckpoint& ckpt);
// Errors: Truncated (short file), Version, Digest (payload or metadata
// integrity), Io (not a checkpoint).
ModelCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
// Same as load_checkpoint but fails with a Kind error on a kind mismatch.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected);

GeneratorModel generator_from_checkpoint(const ModelCheckpoint& ckpt);
EncoderModel encoder_from_checkpoint(const ModelCheckpoint& ckpt);
DiscriminatorModel discriminator_from_checkpoint(const ModelCheckpoint& ckpt);

GeneratorModel load_generator(const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);
DiscriminatorModel load_discriminator(const std::filesystem::path& path);

// SHA-256 of the default CPU generator state.
std::string torch_rng_digest();

}  // namespace crg
