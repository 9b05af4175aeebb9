#include "cyclic/crg_training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "common/error.hpp"
#include "common/io.hpp"
#include "common/tensor_util.hpp"

namespace crg {

torch::Tensor latent_cycle_loss(const torch::Tensor& z, const torch::Tensor& z_hat) {
    require(z.sizes() == z_hat.sizes(), ErrorCode::Shape, "latent cycle loss needs matching shapes");
    require(z.numel() > 0, ErrorCode::InvalidArgument, "latent cycle loss needs a non-empty batch");
    return (z - z_hat).square().mean();
}

torch::Tensor image_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
    require(x.sizes() == x_hat.sizes(), ErrorCode::Shape, "image cycle loss needs matching shapes");
    require(x.numel() > 0, ErrorCode::InvalidArgument, "image cycle loss needs a non-empty batch");
    return (x - x_hat).abs().mean();
}

double latent_cycle_loss(std::span<const LatentVector> z, std::span<const LatentVector> z_hat) {
    require(z.size() == z_hat.size() && !z.empty(), ErrorCode::Shape, "latent batches must match and be non-empty");
    for (std::size_t i = 0; i < z.size(); ++i)
        require(z[i].size() == z_hat[i].size(), ErrorCode::Shape, "latent dimensions differ");
    return latent_cycle_loss(latents_to_tensor(z, torch::kFloat64), latents_to_tensor(z_hat, torch::kFloat64))
        .item<double>();
}

double image_cycle_loss(std::span<const ImageTensor> x, std::span<const ImageTensor> x_hat) {
    require(x.size() == x_hat.size() && !x.empty(), ErrorCode::Shape, "image batches must match and be non-empty");
    for (std::size_t i = 0; i < x.size(); ++i)
        require(x[i].height() == x_hat[i].height() && x[i].width() == x_hat[i].width(), ErrorCode::Shape,
                "image sizes differ");
    return image_cycle_loss(images_to_tensor(x, torch::kFloat64), images_to_tensor(x_hat, torch::kFloat64))
        .item<double>();
}

nlohmann::json AugmentationSpec::to_json() const {
    return {{"enabled", enabled},
            {"max_rotation_degrees", max_rotation_degrees},
            {"horizontal_flip", horizontal_flip},
            {"vertical_flip", vertical_flip}};
}

AugmentationSpec AugmentationSpec::from_json(const nlohmann::json& j) {
    AugmentationSpec a;
    a.enabled = j.value("enabled", a.enabled);
    a.max_rotation_degrees = j.value("max_rotation_degrees", a.max_rotation_degrees);
    a.horizontal_flip = j.value("horizontal_flip", a.horizontal_flip);
    a.vertical_flip = j.value("vertical_flip", a.vertical_flip);
    return a;
}

torch::Tensor augment_batch(const torch::Tensor& x, const AugmentationSpec& spec, std::mt19937_64& rng) {
    require(x.dim() == 4, ErrorCode::Shape, "augmentation expects [B, C, H, W]");
    if (!spec.enabled) return x;
    const auto batch = x.size(0);
    std::uniform_real_distribution<double> angle(-spec.max_rotation_degrees, spec.max_rotation_degrees);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> theta;
    theta.reserve(static_cast<std::size_t>(batch) * 6);
    for (int64_t i = 0; i < batch; ++i) {
        const double a = angle(rng) * std::numbers::pi / 180.0;
        const double sx = spec.horizontal_flip && coin(rng) ? -1.0 : 1.0;
        const double sy = spec.vertical_flip && coin(rng) ? -1.0 : 1.0;
        const double c = std::cos(a), s = std::sin(a);
        theta.insert(theta.end(), {c * sx, -s * sy, 0.0, s * sx, c * sy, 0.0});
    }
    auto t = torch::tensor(theta, torch::kFloat64).view({batch, 2, 3}).to(x.scalar_type());
    namespace F = torch::nn::functional;
    auto grid = F::affine_grid(t, x.sizes().vec(), false);
    return F::grid_sample(x, grid,
                          F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false));
}

const char* to_string(CrgMode mode) { return mode == CrgMode::Fixed ? "fixed" : "tg"; }

CrgMode parse_crg_mode(const std::string& name) {
    if (name == "fixed") return CrgMode::Fixed;
    if (name == "tg" || name == "co-trained") return CrgMode::CoTrained;
    fail(ErrorCode::Config, "unknown CRG mode '" + name + "' (expected fixed or tg)");
}

void CrgTrainConfig::validate() const {
    require(lr >= 0, ErrorCode::Config, "lr must be non-negative");
    require(rho > 0 && rho < 1, ErrorCode::Config, "rho must lie in (0, 1)");
    require(epsilon > 0, ErrorCode::Config, "epsilon must be positive");
    require(batch_size >= 1, ErrorCode::Config, "batch_size must be >= 1");
    require(max_epochs >= 1, ErrorCode::Config, "max_epochs must be >= 1");
    require(lr_patience >= 1, ErrorCode::Config, "lr_patience must be >= 1");
    require(lr_factor > 0 && lr_factor < 1, ErrorCode::Config, "lr_factor must lie in (0, 1)");
    require(early_stop_patience > lr_patience, ErrorCode::Config,
            "early_stop_patience must exceed lr_patience");
    require(encoder.dropout >= 0 && encoder.dropout < 1, ErrorCode::Config, "dropout must lie in [0, 1)");
    require(augmentation.max_rotation_degrees >= 0 && augmentation.max_rotation_degrees <= 30, ErrorCode::Config,
            "rotation bound must lie in [0, 30] degrees");
    require(validation_fraction > 0 && validation_fraction < 1, ErrorCode::Config,
            "validation_fraction must lie in (0, 1)");
    require(validation_latents >= 1, ErrorCode::Config, "validation_latents must be >= 1");
}

nlohmann::json CrgTrainConfig::to_json() const {
    return {{"optimizer", "rmsprop"},
            {"lr", lr},
            {"rho", rho},
            {"epsilon", epsilon},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"lr_patience", lr_patience},
            {"lr_factor", lr_factor},
            {"early_stop_patience", early_stop_patience},
            {"validation_fraction", validation_fraction},
            {"validation_latents", validation_latents},
            {"augmentation", augmentation.to_json()},
            {"mode", to_string(mode)},
            {"seed", seed},
            {"encoder", encoder.to_json()}};
}

CrgTrainConfig CrgTrainConfig::from_json(const nlohmann::json& j) {
    CrgTrainConfig c;
    try {
        c.lr = j.value("lr", c.lr);
        c.rho = j.value("rho", c.rho);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.lr_patience = j.value("lr_patience", c.lr_patience);
        c.lr_factor = j.value("lr_factor", c.lr_factor);
        c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.validation_latents = j.value("validation_latents", c.validation_latents);
        if (j.contains("augmentation")) c.augmentation = AugmentationSpec::from_json(j.at("augmentation"));
        if (j.contains("mode")) c.mode = parse_crg_mode(j.at("mode").get<std::string>());
        c.seed = j.value("seed", c.seed);
        if (j.contains("encoder")) c.encoder = Architecture::from_json(j.at("encoder"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("malformed CRG config: ") + e.what());
    }
    return c;
}

PlateauSchedule::PlateauSchedule(double lr, int lr_patience, double factor, int stop_patience)
    : lr_(lr), factor_(factor), lr_patience_(lr_patience), stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauSchedule::Decision PlateauSchedule::observe(double loss) {
    Decision d;
    if (loss < best_) {
        best_ = loss;
        lr_wait_ = stop_wait_ = 0;
        d.improved = true;
        return d;
    }
    if (++lr_wait_ >= lr_patience_) {
        lr_ *= factor_;
        lr_wait_ = 0;
        ++lr_events_;
        d.lr_reduced = true;
    }
    if (++stop_wait_ >= stop_patience_) d.stop = true;
    return d;
}

CrgTrainer::CrgTrainer(GeneratorModel generator, EncoderModel encoder, const CrgTrainConfig& config)
    : generator_(std::move(generator)), encoder_(std::move(encoder)), mode_(config.mode), lr_(config.lr) {
    require(generator_.latent_dim() == encoder_.latent_dim(), ErrorCode::Config,
            "encoder output dimension " + std::to_string(encoder_.latent_dim()) +
                " does not match the generator latent dimension " + std::to_string(generator_.latent_dim()));
    require(generator_.resolution() == encoder_.resolution(), ErrorCode::Config,
            "encoder and generator resolutions differ");
    auto params = encoder_.parameters();
    if (mode_ == CrgMode::CoTrained) {
        generator_.set_requires_grad(true);
        for (auto& p : generator_.parameters()) params.push_back(p);
    } else {
        generator_.set_requires_grad(false);
    }
    optimizer_ = std::make_unique<torch::optim::RMSprop>(
        params, torch::optim::RMSpropOptions(config.lr).alpha(config.rho).eps(config.epsilon));
}

CrgTrainer::~CrgTrainer() { generator_.set_requires_grad(true); }

void CrgTrainer::set_lr(double lr) {
    lr_ = lr;
    for (auto& group : optimizer_->param_groups())
        static_cast<torch::optim::RMSpropOptions&>(group.options()).lr(lr);
}

torch::Tensor CrgTrainer::generate(const torch::Tensor& z, bool grad) const {
    if (grad) return generator_.forward(z, generator_mode());
    torch::NoGradGuard ng;
    return generator_.forward(z, generator_mode());
}

double CrgTrainer::latent_step(const torch::Tensor& z) {
    auto x = generate(z, mode_ == CrgMode::CoTrained);
    auto loss = latent_cycle_loss(z.to(encoder_.dtype()), encoder_.forward(x, Mode::Train));
    const double value = loss.item<double>();
    require(std::isfinite(value), ErrorCode::Numeric, "non-finite latent cycle loss; step aborted");
    optimizer_->zero_grad();
    loss.backward();
    optimizer_->step();
    return value;
}

double CrgTrainer::image_step(const torch::Tensor& x) {
    auto z_hat = encoder_.forward(x, Mode::Train);
    auto loss = image_cycle_loss(x.to(generator_.dtype()), generator_.forward(z_hat, generator_mode()));
    const double value = loss.item<double>();
    require(std::isfinite(value), ErrorCode::Numeric, "non-finite image cycle loss; step aborted");
    optimizer_->zero_grad();
    loss.backward();
    optimizer_->step();
    return value;
}

StepLosses CrgTrainer::step(const torch::Tensor& z, const torch::Tensor& x) {
    StepLosses out;
    out.latent = latent_step(z);
    out.image = image_step(x);
    return out;
}

StepLosses CrgTrainer::evaluate(const torch::Tensor& z, const torch::Tensor& x) const {
    torch::NoGradGuard ng;
    constexpr int64_t chunk = 256;
    double lz = 0, lx = 0;
    for (int64_t i = 0; i < z.size(0); i += chunk) {
        auto zb = z.slice(0, i, std::min(i + chunk, z.size(0)));
        auto zh = encoder_.forward(generator_.forward(zb, Mode::Inference), Mode::Inference);
        lz += latent_cycle_loss(zb.to(encoder_.dtype()), zh).item<double>() * static_cast<double>(zb.size(0));
    }
    for (int64_t i = 0; i < x.size(0); i += chunk) {
        auto xb = x.slice(0, i, std::min(i + chunk, x.size(0)));
        auto xh = generator_.forward(encoder_.forward(xb, Mode::Inference), Mode::Inference);
        lx += image_cycle_loss(xb.to(generator_.dtype()), xh).item<double>() * static_cast<double>(xb.size(0));
    }
    return {lz / static_cast<double>(z.size(0)), lx / static_cast<double>(x.size(0))};
}

StepLosses crg_train_step(CrgTrainer& trainer, const torch::Tensor& z, const torch::Tensor& x) {
    return trainer.step(z, x);
}

nlohmann::json CrgEpochLog::to_json() const {
    return {{"epoch", epoch},         {"train_loss_z", train_latent}, {"train_loss_x", train_image},
            {"val_loss_z", val_latent}, {"val_loss_x", val_image},    {"val_loss", val_total()},
            {"lr", lr},               {"improved", improved},        {"wall_time", wall_time}};
}

CrgTrainResult train_encoder(const GeneratorModel& generator, const Dataset& dataset, const CrgTrainConfig& config,
                             const CrgTrainOptions& options) {
    config.validate();
    require(dataset.manifest.resolution == generator.resolution(), ErrorCode::Config,
            "dataset resolution does not match the generator resolution");
    require(config.encoder.latent_dim == generator.latent_dim(), ErrorCode::Config,
            "encoder latent_dim " + std::to_string(config.encoder.latent_dim) +
                " does not match the generator latent dimension " + std::to_string(generator.latent_dim()));
    require(config.encoder.resolution == generator.resolution(), ErrorCode::Config,
            "encoder resolution does not match the generator resolution");
    const auto n = static_cast<int64_t>(dataset.images.size());
    require(n >= 2, ErrorCode::InvalidArgument, "encoder training needs at least two images");

    EncoderModel encoder(config.encoder, config.seed);
    require(encoder.parameter_count() > generator.parameter_count(), ErrorCode::Config,
            "encoder capacity (" + std::to_string(encoder.parameter_count()) +
                " parameters) must exceed the generator's (" + std::to_string(generator.parameter_count()) + ")");

    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(config.seed);
    std::vector<int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(config.validation_fraction * n)), 1, n - 1);
    std::vector<int64_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int64_t> train_idx(order.begin() + n_val, order.end());

    auto all = images_to_tensor(dataset.images, config.encoder.torch_dtype());
    auto val_x = all.index_select(0, torch::tensor(val_idx, torch::kLong));
    auto gen_dtype = torch::TensorOptions().dtype(generator.dtype());
    auto noise = at::make_generator<at::CPUGeneratorImpl>(config.seed ^ 0x5851f42d4c957f2dULL);
    auto val_z = torch::randn({config.validation_latents, generator.latent_dim()},
                              at::make_generator<at::CPUGeneratorImpl>(config.seed + 101), gen_dtype);

    GeneratorModel gen = config.mode == CrgMode::CoTrained ? generator.clone() : generator;
    CrgTrainer trainer(gen, encoder, config);
    PlateauSchedule schedule(config.lr, config.lr_patience, config.lr_factor, config.early_stop_patience);

    CrgTrainResult result{encoder.clone(), gen.clone(), {}, 0, 0, false, config.lr};
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double sum_z = 0, sum_x = 0;
        int batches = 0;
        for (std::size_t b = 0; b < train_idx.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const auto end = std::min(train_idx.size(), b + static_cast<std::size_t>(config.batch_size));
            std::vector<int64_t> idx(train_idx.begin() + static_cast<std::ptrdiff_t>(b),
                                     train_idx.begin() + static_cast<std::ptrdiff_t>(end));
            auto x = augment_batch(all.index_select(0, torch::tensor(idx, torch::kLong)), config.augmentation, rng);
            auto z = torch::randn({static_cast<int64_t>(idx.size()), generator.latent_dim()}, noise, gen_dtype);
            auto losses = trainer.step(z, x);
            sum_z += losses.latent;
            sum_x += losses.image;
            ++batches;
        }
        auto val = trainer.evaluate(val_z, val_x);
        CrgEpochLog entry;
        entry.epoch = epoch;
        entry.train_latent = sum_z / batches;
        entry.train_image = sum_x / batches;
        entry.val_latent = val.latent;
        entry.val_image = val.image;
        entry.lr = trainer.lr();

        const auto decision = schedule.observe(entry.val_total());
        entry.improved = decision.improved;
        if (decision.improved) {
            result.encoder = trainer.encoder().clone();
            if (config.mode == CrgMode::CoTrained) result.generator = trainer.generator().clone();
            result.best_epoch = epoch;
        }
        entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(entry);
        result.epochs_run = epoch;
        if (options.log_path) append_line(*options.log_path, entry.to_json().dump());
        if (options.on_epoch) options.on_epoch(entry);
        if (decision.lr_reduced) trainer.set_lr(schedule.lr());
        if (decision.stop) {
            result.early_stopped = true;
            break;
        }
    }
    result.final_lr = trainer.lr();
    if (config.mode == CrgMode::Fixed) result.generator = generator;
    return result;
}

}  // namespace crg
