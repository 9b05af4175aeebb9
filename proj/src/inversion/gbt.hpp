#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "models/networks.hpp"

namespace crg {

enum class ImageLoss { Mse, Mae };
const char* to_string(ImageLoss loss);
ImageLoss parse_image_loss(const std::string& name);

struct GbtConfig {
    int steps = 1000;
    double step_size = 0.1;
    std::uint64_t init_seed = 0;          // standard-normal initialization
    std::optional<LatentVector> init_z;   // overrides the seeded initialization
    ImageLoss loss = ImageLoss::Mse;
    std::optional<double> early_exit_loss;

    // Throws Error(Config); steps == 0 is allowed only for hybrid inversion.
    void validate(bool allow_zero_steps = false) const;
    nlohmann::json to_json() const;
    static GbtConfig from_json(const nlohmann::json& j);
};

struct GbtTrajectoryPoint {
    int step = 0;
    double loss = 0.0;
    double best_loss = 0.0;
    double z_norm = 0.0;
    nlohmann::json to_json() const;
};

struct GbtResult {
    LatentVector z_best;
    double loss_best = 0.0;
    int best_step = 0;
    std::vector<GbtTrajectoryPoint> trajectory;
};

// Plain gradient descent on z against an image loss; returns the best
// iterate seen. The trajectory holds the loss at the initial point (step 0)
// and after every update. Errors: Shape (target resolution), Numeric
// (non-finite loss; the trajectory file keeps the points reached).
GbtResult invert_latent_gbt(const Generator& generator, const ImageTensor& target, const GbtConfig& config,
                            const std::optional<std::filesystem::path>& trajectory_path = std::nullopt);

struct HybridResult {
    LatentVector z_encoder;
    double loss_encoder = 0.0;
    GbtResult refined;
};

// GBT initialized from the encoder's estimate of the target.
HybridResult invert_hybrid(const Generator& generator, const EncoderModel& encoder, const ImageTensor& target,
                           GbtConfig config,
                           const std::optional<std::filesystem::path>& trajectory_path = std::nullopt);

}  // namespace crg
