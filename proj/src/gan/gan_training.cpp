#include "gan/gan_training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "common/error.hpp"
#include "common/io.hpp"
#include "common/tensor_util.hpp"
#include "models/checkpoint.hpp"

namespace crg {

void GanTrainConfig::validate() const {
    require(generator_lr > 0 && discriminator_lr > 0, ErrorCode::Config, "learning rates must be positive");
    require(discriminator_lr >= generator_lr, ErrorCode::Config,
            "discriminator lr must be at least the generator lr (two-timescale rule)");
    require(discriminator_steps >= 1, ErrorCode::Config, "discriminator_steps must be >= 1");
    require(batch_size >= 2, ErrorCode::Config, "batch_size must be >= 2");
    require(total_steps >= 1, ErrorCode::Config, "total_steps must be >= 1");
    require(optimizer == "adam", ErrorCode::Config, "unsupported optimizer '" + optimizer + "' (expected adam)");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorCode::Config, "Adam betas must lie in [0, 1)");
    require(epsilon > 0, ErrorCode::Config, "epsilon must be positive");
    require(log_every >= 1 && monitor_every >= 1, ErrorCode::Config, "log and monitor cadences must be >= 1");
    require(monitor_samples >= 2, ErrorCode::Config, "monitor_samples must be >= 2");
    require(generator.resolution == discriminator.resolution, ErrorCode::Config,
            "generator and discriminator resolutions differ");
}

nlohmann::json GanTrainConfig::to_json() const {
    return {{"generator_lr", generator_lr},
            {"discriminator_lr", discriminator_lr},
            {"discriminator_steps", discriminator_steps},
            {"batch_size", batch_size},
            {"total_steps", total_steps},
            {"seed", seed},
            {"optimizer", optimizer},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"log_every", log_every},
            {"monitor_every", monitor_every},
            {"monitor_samples", monitor_samples},
            {"generator", generator.to_json()},
            {"discriminator", discriminator.to_json()}};
}

GanTrainConfig GanTrainConfig::from_json(const nlohmann::json& j) {
    GanTrainConfig c;
    try {
        c.generator_lr = j.value("generator_lr", c.generator_lr);
        c.discriminator_lr = j.value("discriminator_lr", c.discriminator_lr);
        c.discriminator_steps = j.value("discriminator_steps", c.discriminator_steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.total_steps = j.value("total_steps", c.total_steps);
        c.seed = j.value("seed", c.seed);
        c.optimizer = j.value("optimizer", c.optimizer);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.log_every = j.value("log_every", c.log_every);
        c.monitor_every = j.value("monitor_every", c.monitor_every);
        c.monitor_samples = j.value("monitor_samples", c.monitor_samples);
        if (j.contains("generator")) c.generator = Architecture::from_json(j.at("generator"));
        if (j.contains("discriminator")) c.discriminator = Architecture::from_json(j.at("discriminator"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("malformed GAN config: ") + e.what());
    }
    return c;
}

nlohmann::json GanLogEntry::to_json() const {
    return {{"step", step},
            {"g_loss", generator_loss},
            {"d_loss", discriminator_loss},
            {"proxy", proxy ? nlohmann::json(*proxy) : nlohmann::json(nullptr)},
            {"wall_time", wall_time}};
}

AdversarialLosses adversarial_losses(const torch::Tensor& real, const torch::Tensor& fake) {
    require(real.numel() > 0 && fake.numel() > 0, ErrorCode::InvalidArgument, "adversarial losses need logits");
    require(torch::isfinite(real).all().item<bool>() && torch::isfinite(fake).all().item<bool>(),
            ErrorCode::InvalidArgument, "adversarial losses need finite logits");
    AdversarialLosses out;
    out.discriminator = torch::softplus(-real).mean() + torch::softplus(fake).mean();
    out.generator = torch::softplus(-fake).mean();
    return out;
}

double frechet_distance(const torch::Tensor& features_a, const torch::Tensor& features_b) {
    require(features_a.dim() == 2 && features_b.dim() == 2 && features_a.size(1) == features_b.size(1),
            ErrorCode::Shape, "feature sets must be [N, F] with equal F");
    require(features_a.size(0) >= 2 && features_b.size(0) >= 2, ErrorCode::InvalidArgument,
            "the Frechet proxy needs at least two samples per side");
    torch::NoGradGuard no_grad;
    auto a = features_a.to(torch::kFloat64), b = features_b.to(torch::kFloat64);
    const auto f = a.size(1);
    auto loading = 1e-6 * torch::eye(f, torch::kFloat64);
    auto mu_a = a.mean(0), mu_b = b.mean(0);
    auto cov = [&](const torch::Tensor& x, const torch::Tensor& mu) {
        auto c = x - mu;
        return torch::mm(c.t(), c) / static_cast<double>(x.size(0) - 1) + loading;
    };
    auto sa = cov(a, mu_a), sb = cov(b, mu_b);
    auto [ev_a, vec_a] = torch::linalg_eigh(sa);
    auto root_a = torch::mm(vec_a * ev_a.clamp_min(0).sqrt(), vec_a.t());
    auto middle = torch::mm(torch::mm(root_a, sb), root_a);
    middle = 0.5 * (middle + middle.t());
    auto tr_sqrt = torch::linalg_eigvalsh(middle).clamp_min(0).sqrt().sum();
    auto d = (mu_a - mu_b).square().sum() + torch::trace(sa) + torch::trace(sb) - 2.0 * tr_sqrt;
    return std::max(0.0, d.item<double>());
}

namespace {

torch::Tensor features_of(const DiscriminatorModel& d, std::span<const ImageTensor> images) {
    torch::NoGradGuard no_grad;
    auto x = images_to_tensor(images, d.architecture().torch_dtype());
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < x.size(0); i += 256)
        parts.push_back(d.forward(x.slice(0, i, std::min<int64_t>(i + 256, x.size(0))), Mode::Inference).features);
    return torch::cat(parts);
}

torch::Tensor logits_of(const DiscriminatorModel& d, const torch::Tensor& x) {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < x.size(0); i += 256)
        parts.push_back(d.forward(x.slice(0, i, std::min<int64_t>(i + 256, x.size(0))), Mode::Inference).logits);
    return torch::cat(parts);
}

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

}  // namespace

double desk_fid_proxy(std::span<const ImageTensor> real, std::span<const ImageTensor> fake,
                      const DiscriminatorModel& discriminator) {
    require(real.size() >= 2 && fake.size() >= 2, ErrorCode::InvalidArgument,
            "the Frechet proxy needs at least two samples per side");
    return frechet_distance(features_of(discriminator, real), features_of(discriminator, fake));
}

double discriminator_accuracy(const DiscriminatorModel& d, std::span<const ImageTensor> real,
                              std::span<const ImageTensor> fake) {
    require(!real.empty() && !fake.empty(), ErrorCode::InvalidArgument, "accuracy needs real and fake samples");
    const auto dtype = d.architecture().torch_dtype();
    auto lr = logits_of(d, images_to_tensor(real, dtype));
    auto lf = logits_of(d, images_to_tensor(fake, dtype));
    const double correct = (lr > 0).sum().item<double>() + (lf < 0).sum().item<double>();
    return correct / static_cast<double>(real.size() + fake.size());
}

GanTrainResult train_gan(const Dataset& dataset, const GanTrainConfig& config, const GanTrainOptions& options) {
    config.validate();
    require(dataset.manifest.resolution == config.generator.resolution, ErrorCode::Config,
            "dataset resolution " + std::to_string(dataset.manifest.resolution) +
                " does not match the model resolution " + std::to_string(config.generator.resolution));
    require(!dataset.images.empty(), ErrorCode::InvalidArgument, "empty dataset");

    const auto start = std::chrono::steady_clock::now();
    const auto dtype = config.generator.torch_dtype();
    GanTrainResult result{GeneratorModel(config.generator, config.seed),
                          DiscriminatorModel(config.discriminator, config.seed + 1), 0, 0, {}};
    auto& g = result.generator;
    auto& d = result.discriminator;

    auto real_all = images_to_tensor(dataset.images, dtype);
    const auto n = real_all.size(0);
    const int latent = config.generator.latent_dim;

    auto noise = at::make_generator<at::CPUGeneratorImpl>(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 order_rng(config.seed);
    std::vector<int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    std::size_t cursor = 0;
    auto next_real = [&]() {
        std::vector<int64_t> idx;
        for (int i = 0; i < config.batch_size; ++i) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        return real_all.index_select(0, torch::tensor(idx, torch::kLong));
    };
    auto sample_z = [&](int64_t count) {
        return torch::randn({count, latent}, noise, torch::TensorOptions().dtype(dtype));
    };

    // Fixed monitoring sets.
    const int monitor = std::min<int>(config.monitor_samples, static_cast<int>(n));
    auto monitor_real = real_all.slice(0, 0, monitor);
    auto monitor_z = torch::randn({monitor, latent}, at::make_generator<at::CPUGeneratorImpl>(config.seed + 17),
                                  torch::TensorOptions().dtype(dtype));

    auto adam = [&](const std::vector<torch::Tensor>& params, double lr) {
        return torch::optim::Adam(
            params, torch::optim::AdamOptions(lr).betas({config.beta1, config.beta2}).eps(config.epsilon));
    };
    auto g_opt = adam(g.parameters(), config.generator_lr);
    auto d_opt = adam(d.parameters(), config.discriminator_lr);

    auto snapshot_and_fail = [&](const std::string& what) {
        std::string where;
        if (options.snapshot_dir) {
            const auto tag = "step" + std::to_string(result.generator_steps);
            auto cfg = config.to_json();
            save_checkpoint(make_checkpoint(g, cfg, torch_rng_digest()),
                            *options.snapshot_dir / ("nan_generator_" + tag + ".ckpt"));
            save_checkpoint(make_checkpoint(d, cfg, torch_rng_digest()),
                            *options.snapshot_dir / ("nan_discriminator_" + tag + ".ckpt"));
            where = "; diagnostic snapshot written to " + options.snapshot_dir->string();
        }
        fail(ErrorCode::Numeric, "non-finite " + what + " at generator step " +
                                     std::to_string(result.generator_steps) + where);
    };

    double g_acc = 0, d_acc = 0;
    std::int64_t g_count = 0, d_count = 0;
    for (std::int64_t step = 1; step <= config.total_steps; ++step) {
        d.set_requires_grad(true);
        for (int k = 0; k < config.discriminator_steps; ++k) {
            auto real = next_real();
            torch::Tensor fake;
            {
                torch::NoGradGuard ng;
                fake = g.forward(sample_z(config.batch_size), Mode::Train);
            }
            auto out = d.forward(torch::cat({real, fake}), Mode::Train);
            auto logits = out.logits;
            auto real_logits = logits.slice(0, 0, config.batch_size);
            auto fake_logits = logits.slice(0, config.batch_size);
            auto d_loss = torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
            if (!finite(d_loss)) snapshot_and_fail("discriminator loss");
            d_opt.zero_grad();
            d_loss.backward();
            d_opt.step();
            ++result.discriminator_steps;
            d_acc += d_loss.item<double>();
            ++d_count;
        }

        d.set_requires_grad(false);
        auto fake = g.forward(sample_z(config.batch_size), Mode::Train);
        auto g_loss = torch::softplus(-d.forward(fake, Mode::Train).logits).mean();
        if (!finite(g_loss)) snapshot_and_fail("generator loss");
        g_opt.zero_grad();
        g_loss.backward();
        g_opt.step();
        ++result.generator_steps;
        g_acc += g_loss.item<double>();
        ++g_count;

        const bool monitor_now = step % config.monitor_every == 0 || step == config.total_steps;
        if (step % config.log_every == 0 || monitor_now) {
            GanLogEntry entry;
            entry.step = step;
            entry.generator_loss = g_acc / static_cast<double>(g_count);
            entry.discriminator_loss = d_acc / static_cast<double>(d_count);
            if (monitor_now) {
                torch::NoGradGuard ng;
                auto fakes = g.forward(monitor_z, Mode::Inference);
                entry.proxy = frechet_distance(d.forward(monitor_real, Mode::Inference).features,
                                               d.forward(fakes, Mode::Inference).features);
            }
            entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            g_acc = d_acc = 0;
            g_count = d_count = 0;
            if (options.log_path) append_line(*options.log_path, entry.to_json().dump());
            if (options.on_log) options.on_log(entry);
            result.log.push_back(entry);
        }
    }
    d.set_requires_grad(true);
    return result;
}

}  // namespace crg
