#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "models/networks.hpp"
#include "synthdata/dataset.hpp"

namespace crg {

struct GanTrainConfig {
    double generator_lr = 1e-4;
    double discriminator_lr = 2e-4;
    int discriminator_steps = 2;  // discriminator updates per generator update
    int batch_size = 64;
    std::int64_t total_steps = 20000;  // generator updates
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    double beta1 = 0.0;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    std::int64_t log_every = 100;
    std::int64_t monitor_every = 1000;  // desk-FID proxy cadence
    int monitor_samples = 512;
    Architecture generator = default_generator_architecture();
    Architecture discriminator = default_discriminator_architecture();

    // Throws Error(Config) on a violated invariant.
    void validate() const;
    nlohmann::json to_json() const;
    static GanTrainConfig from_json(const nlohmann::json& j);
};

struct AdversarialLosses {
    torch::Tensor generator;      // mean softplus(-fake)
    torch::Tensor discriminator;  // mean softplus(-real) + mean softplus(fake)
};

// Non-saturating logistic losses; rejects empty or non-finite logits.
AdversarialLosses adversarial_losses(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

// Frechet distance between Gaussians fitted to two feature sets [N, F]
// (unbiased covariances, 1e-6 diagonal loading).
double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b);

// Frechet distance on the discriminator's feature tap.
double desk_fid_proxy(std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                      const DiscriminatorModel& discriminator);

// Fraction of real samples scored positive and fake samples scored negative.
double discriminator_accuracy(const DiscriminatorModel& discriminator, std::span<const ImageTensor> real,
                              std::span<const ImageTensor> fake);

struct GanLogEntry {
    std::int64_t step = 0;
    double generator_loss = 0.0;
    double discriminator_loss = 0.0;
    std::optional<double> proxy;
    double wall_time = 0.0;
    nlohmann::json to_json() const;
};

struct GanTrainOptions {
    std::optional<std::filesystem::path> log_path;       // JSON-lines, appended
    std::optional<std::filesystem::path> snapshot_dir;   // diagnostic checkpoints on a non-finite loss
    std::function<void(const GanLogEntry&)> on_log;
};

struct GanTrainResult {
    GeneratorModel generator;
    DiscriminatorModel discriminator;
    std::int64_t generator_steps = 0;
    std::int64_t discriminator_steps = 0;
    std::vector<GanLogEntry> log;
};

// Errors: Config (invalid config, resolution mismatch), Numeric (non-finite
// loss; a snapshot is written first when snapshot_dir is set).
GanTrainResult train_gan(const Dataset& dataset, const GanTrainConfig& config, const GanTrainOptions& options = {});

}  // namespace crg
