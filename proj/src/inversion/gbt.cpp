#include "inversion/gbt.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "common/error.hpp"
#include "common/io.hpp"
#include "common/tensor_util.hpp"

namespace crg {

const char* to_string(ImageLoss loss) { return loss == ImageLoss::Mse ? "mse" : "mae"; }

ImageLoss parse_image_loss(const std::string& name) {
    if (name == "mse") return ImageLoss::Mse;
    if (name == "mae") return ImageLoss::Mae;
    fail(ErrorCode::Config, "unknown loss kind '" + name + "' (expected mse or mae)");
}

void GbtConfig::validate(bool allow_zero_steps) const {
    require(steps >= (allow_zero_steps ? 0 : 1), ErrorCode::Config,
            allow_zero_steps ? "steps must be >= 0" : "steps must be >= 1");
    require(step_size > 0 && std::isfinite(step_size), ErrorCode::Config, "step_size must be positive");
    if (early_exit_loss)
        require(*early_exit_loss >= 0, ErrorCode::Config, "early_exit_loss must be non-negative");
}

nlohmann::json GbtConfig::to_json() const {
    nlohmann::json j = {{"steps", steps},
                        {"step_size", step_size},
                        {"init_seed", init_seed},
                        {"loss", to_string(loss)},
                        {"early_exit_loss", early_exit_loss ? nlohmann::json(*early_exit_loss) : nlohmann::json()}};
    if (init_z) j["init_z"] = *init_z;
    return j;
}

GbtConfig GbtConfig::from_json(const nlohmann::json& j) {
    GbtConfig c;
    try {
        c.steps = j.value("steps", c.steps);
        c.step_size = j.value("step_size", c.step_size);
        c.init_seed = j.value("init_seed", c.init_seed);
        if (j.contains("loss")) c.loss = parse_image_loss(j.at("loss").get<std::string>());
        if (j.contains("early_exit_loss") && !j.at("early_exit_loss").is_null())
            c.early_exit_loss = j.at("early_exit_loss").get<double>();
        if (j.contains("init_z")) c.init_z = j.at("init_z").get<LatentVector>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("malformed GBT config: ") + e.what());
    }
    return c;
}

nlohmann::json GbtTrajectoryPoint::to_json() const {
    return {{"step", step}, {"loss", loss}, {"best_loss", best_loss}, {"z_norm", z_norm}};
}

namespace {

GbtResult run_gbt(const Generator& generator, const ImageTensor& target, const GbtConfig& config,
                  const std::optional<std::filesystem::path>& trajectory_path) {
    require(target.height() == generator.resolution() && target.width() == generator.resolution(), ErrorCode::Shape,
            "target resolution does not match the generator's " + std::to_string(generator.resolution()));
    const auto dtype = generator.dtype();
    const int dim = generator.latent_dim();

    torch::Tensor z;
    if (config.init_z) {
        require(static_cast<int>(config.init_z->size()) == dim, ErrorCode::Shape,
                "initial latent dimension does not match the generator");
        std::vector<LatentVector> init = {*config.init_z};
        z = latents_to_tensor(init, dtype);
    } else {
        auto gen = at::make_generator<at::CPUGeneratorImpl>(config.init_seed);
        z = torch::randn({1, dim}, gen, torch::TensorOptions().dtype(dtype));
    }
    std::vector<ImageTensor> targets = {target};
    const auto x = images_to_tensor(targets, dtype);

    if (trajectory_path) write_file_atomic(*trajectory_path, "");
    GbtResult result;
    result.loss_best = INFINITY;
    for (int step = 0;; ++step) {
        auto zv = z.detach().requires_grad_(true);
        auto diff = generator.forward(zv) - x;
        auto loss = config.loss == ImageLoss::Mse ? diff.square().mean() : diff.abs().mean();
        const double value = loss.item<double>();

        GbtTrajectoryPoint point;
        point.step = step;
        point.loss = value;
        point.z_norm = z.norm().item<double>();
        if (std::isfinite(value) && value < result.loss_best) {
            result.loss_best = value;
            result.best_step = step;
            result.z_best = tensor_to_latents(z.detach())[0];
        }
        point.best_loss = result.loss_best;
        result.trajectory.push_back(point);
        if (trajectory_path) append_line(*trajectory_path, point.to_json().dump());
        require(std::isfinite(value), ErrorCode::Numeric,
                "non-finite inversion loss at step " + std::to_string(step) + "; trajectory kept");

        if (step >= config.steps) break;
        if (config.early_exit_loss && value <= *config.early_exit_loss) break;
        auto grad = torch::autograd::grad({loss}, {zv})[0];
        z = (z - config.step_size * grad).detach();
    }
    return result;
}

}  // namespace

GbtResult invert_latent_gbt(const Generator& generator, const ImageTensor& target, const GbtConfig& config,
                            const std::optional<std::filesystem::path>& trajectory_path) {
    config.validate();
    return run_gbt(generator, target, config, trajectory_path);
}

HybridResult invert_hybrid(const Generator& generator, const EncoderModel& encoder, const ImageTensor& target,
                           GbtConfig config, const std::optional<std::filesystem::path>& trajectory_path) {
    config.validate(true);
    require(encoder.latent_dim() == generator.latent_dim(), ErrorCode::Config,
            "encoder and generator latent dimensions differ");
    std::vector<ImageTensor> targets = {target};
    HybridResult out;
    out.z_encoder = encoder_forward(encoder, targets)[0];
    config.init_z = out.z_encoder;
    out.refined = run_gbt(generator, target, config, trajectory_path);
    out.loss_encoder = out.refined.trajectory.front().loss;
    return out;
}

}  // namespace crg
