#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "models/networks.hpp"
#include "synthdata/dataset.hpp"

namespace crg {

// mean((z - z_hat)^2) over batch and dimensions.
torch::Tensor latent_cycle_loss(const torch::Tensor& z, const torch::Tensor& z_hat);
// mean(|x - x_hat|) over batch and pixels.
torch::Tensor image_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat);
double latent_cycle_loss(std::span<const LatentVector> z, std::span<const LatentVector> z_hat);
double image_cycle_loss(std::span<const ImageTensor> x, std::span<const ImageTensor> x_hat);

struct AugmentationSpec {
    bool enabled = true;
    double max_rotation_degrees = 30.0;
    bool horizontal_flip = true;
    bool vertical_flip = true;
    nlohmann::json to_json() const;
    static AugmentationSpec from_json(const nlohmann::json& j);
};

// Random rotation in [-max, max] degrees (bilinear, border fill) and random
// horizontal/vertical flips, drawn per sample from rng.
torch::Tensor augment_batch(const torch::Tensor& x, const AugmentationSpec& spec, std::mt19937_64& rng);

enum class CrgMode { Fixed, CoTrained };
const char* to_string(CrgMode mode);
CrgMode parse_crg_mode(const std::string& name);

struct CrgTrainConfig {
    double lr = 1e-4;
    double rho = 0.9;
    double epsilon = 1e-8;
    int batch_size = 128;
    int max_epochs = 200;
    int lr_patience = 10;
    double lr_factor = 0.5;
    int early_stop_patience = 20;
    double validation_fraction = 0.1;
    int validation_latents = 512;
    AugmentationSpec augmentation;
    CrgMode mode = CrgMode::Fixed;
    std::uint64_t seed = 0;
    Architecture encoder = default_encoder_architecture();

    void validate() const;
    nlohmann::json to_json() const;
    static CrgTrainConfig from_json(const nlohmann::json& j);
};

// Plateau learning-rate halving plus early stopping on a monitored loss.
// An epoch improves when its loss is strictly below the best so far.
class PlateauSchedule {
public:
    PlateauSchedule(double lr, int lr_patience, double factor, int stop_patience);
    struct Decision {
        bool improved = false;
        bool lr_reduced = false;
        bool stop = false;
    };
    Decision observe(double loss);
    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    int lr_events() const noexcept { return lr_events_; }

private:
    double lr_, factor_;
    int lr_patience_, stop_patience_;
    double best_;
    int lr_wait_ = 0, stop_wait_ = 0, lr_events_ = 0;
};

struct StepLosses {
    double latent = 0.0;
    double image = 0.0;
};

// Holds the encoder/generator pair and the RMSProp state for CRG updates.
// In fixed mode the generator is frozen (inference mode, no gradients).
class CrgTrainer {
public:
    CrgTrainer(GeneratorModel generator, EncoderModel encoder, const CrgTrainConfig& config);
    ~CrgTrainer();
    CrgTrainer(const CrgTrainer&) = delete;
    CrgTrainer& operator=(const CrgTrainer&) = delete;

    // Update 1 on loss_z(z, e(g(z))), then update 2 on loss_x(x, g(e(x))).
    // Throws Error(Numeric) before applying an update with a non-finite loss.
    StepLosses step(const torch::Tensor& z, const torch::Tensor& x);
    // Single update on the latent cycle only.
    double latent_step(const torch::Tensor& z);
    double image_step(const torch::Tensor& x);

    StepLosses evaluate(const torch::Tensor& z, const torch::Tensor& x) const;
    void set_lr(double lr);
    double lr() const noexcept { return lr_; }
    const GeneratorModel& generator() const noexcept { return generator_; }
    const EncoderModel& encoder() const noexcept { return encoder_; }
    CrgMode mode() const noexcept { return mode_; }

private:
    Mode generator_mode() const { return mode_ == CrgMode::CoTrained ? Mode::Train : Mode::Inference; }
    torch::Tensor generate(const torch::Tensor& z, bool grad) const;

    GeneratorModel generator_;
    EncoderModel encoder_;
    CrgMode mode_;
    double lr_;
    std::unique_ptr<torch::optim::RMSprop> optimizer_;
};

StepLosses crg_train_step(CrgTrainer& trainer, const torch::Tensor& z, const torch::Tensor& x);

struct CrgEpochLog {
    int epoch = 0;
    double train_latent = 0.0, train_image = 0.0;
    double val_latent = 0.0, val_image = 0.0;
    double lr = 0.0;
    bool improved = false;
    double wall_time = 0.0;
    double val_total() const { return val_latent + val_image; }
    nlohmann::json to_json() const;
};

struct CrgTrainOptions {
    std::optional<std::filesystem::path> log_path;
    std::function<void(const CrgEpochLog&)> on_epoch;
};

struct CrgTrainResult {
    EncoderModel encoder;      // best validation epoch
    GeneratorModel generator;  // input generator, or the best co-trained copy
    std::vector<CrgEpochLog> log;
    int best_epoch = 0;
    int epochs_run = 0;
    bool early_stopped = false;
    double final_lr = 0.0;
};

// Errors: Config (invalid config, dimension/resolution mismatch, encoder not
// larger than the generator), Numeric (non-finite loss).
CrgTrainResult train_encoder(const GeneratorModel& generator, const Dataset& dataset, const CrgTrainConfig& config,
                             const CrgTrainOptions& options = {});

}  // namespace crg
