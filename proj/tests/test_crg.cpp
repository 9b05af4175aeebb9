#include "test_support.hpp"

#include <cmath>

#include "common/tensor_util.hpp"
#include "cyclic/crg_training.hpp"
#include "fixtures.hpp"

using namespace crg;

namespace {

NamedTensors parameters_of(const EncoderModel& e) {
    NamedTensors out;
    for (const auto& item : e.net().named_parameters()) out.emplace_back(item.key(), item.value().detach().clone());
    return out;
}

bool same_tensors(const NamedTensors& a, const NamedTensors& b, double tol = 0.0) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((a[i].second - b[i].second).abs().max().item<double>() > tol) return false;
    return true;
}

Architecture dense_encoder(int d, int res) {
    auto a = default_encoder_architecture(d, res, 0.0);
    a.family = "dense";
    a.hidden = 16;
    a.dtype = "float64";
    return a;
}

Architecture small_conv_encoder(int d, int res) {
    auto a = default_encoder_architecture(d, res, 0.5);
    a.channels = {8, 16, 16};
    return a;
}

CrgTrainConfig quick_config(const Architecture& encoder) {
    CrgTrainConfig c;
    c.encoder = encoder;
    c.batch_size = 32;
    c.max_epochs = 5;
    c.validation_latents = 64;
    c.seed = 9;
    return c;
}

}  // namespace

TEST_SUITE("crg") {

TEST_CASE("latent cycle loss examples") {
    std::vector<LatentVector> z = {{1.0, 0.0}}, zh = {{0.0, 0.0}};
    CHECK(latent_cycle_loss(z, zh) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(latent_cycle_loss(z, z) == 0.0);
    auto a = test::random_latents(5, 7, 1), b = test::random_latents(5, 7, 2);
    CHECK(latent_cycle_loss(a, b) == latent_cycle_loss(b, a));
    CHECK(latent_cycle_loss(a, b) > 0.0);
    std::vector<LatentVector> wrong = {{1.0, 0.0, 0.0}};
    CHECK_ERROR_CODE(latent_cycle_loss(z, wrong), Shape);
}

TEST_CASE("image cycle loss examples") {
    std::vector<ImageTensor> lo = {ImageTensor(16, 16, std::vector<float>(256, -1.0f))};
    std::vector<ImageTensor> hi = {ImageTensor(16, 16, std::vector<float>(256, 1.0f))};
    CHECK(image_cycle_loss(lo, hi) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(image_cycle_loss(hi, hi) == 0.0);
    torch::manual_seed(5);
    auto x = torch::rand({3, 1, 8, 8}, torch::kFloat64) * 2 - 1, y = torch::rand({3, 1, 8, 8}, torch::kFloat64) * 2 - 1;
    CHECK(image_cycle_loss(0.5 * x, 0.5 * y).item<double>() ==
          doctest::Approx(0.5 * image_cycle_loss(x, y).item<double>()).epsilon(1e-14));
    std::vector<ImageTensor> other = {ImageTensor(32, 32)};
    CHECK_ERROR_CODE(image_cycle_loss(lo, other), Shape);
}

TEST_CASE("cycle loss gradients match central finite differences on a tiny encoder") {
    // Two dense layers, D = 4, 8x8 images; 20 random parameter probes per loss.
    auto garch = default_generator_architecture(4, 8);
    garch.family = "dense";
    garch.hidden = 6;
    garch.dtype = "float64";
    GeneratorModel g(garch, 1);
    auto earch = dense_encoder(4, 8);
    earch.hidden = 5;
    EncoderModel e(earch, 2);

    torch::manual_seed(6);
    auto z = torch::randn({3, 4}, torch::kFloat64);
    auto x = torch::tanh(torch::randn({3, 1, 8, 8}, torch::kFloat64));
    auto loss_z = [&] { return latent_cycle_loss(z, e.forward(g.forward(z))); };
    auto loss_x = [&] { return image_cycle_loss(x, g.forward(e.forward(x))); };

    std::mt19937_64 rng(7);
    auto params = e.parameters();
    for (int which = 0; which < 2; ++which) {
        auto eval = [&] { return which == 0 ? loss_z() : loss_x(); };
        for (auto& p : params) p.mutable_grad() = torch::Tensor();
        eval().backward();
        for (int probe = 0; probe < 20; ++probe) {
            auto& p = params[rng() % params.size()];
            const auto idx = static_cast<int64_t>(rng() % static_cast<std::uint64_t>(p.numel()));
            const double analytic = p.grad().flatten()[idx].item<double>();
            double fd;
            {
                torch::NoGradGuard ng;
                auto flat = p.view({-1});
                const double orig = flat[idx].item<double>();
                flat[idx] = orig + 1e-4;
                const double up = eval().item<double>();
                flat[idx] = orig - 1e-4;
                const double down = eval().item<double>();
                flat[idx] = orig;
                fd = (up - down) / 2e-4;
            }
            CHECK(std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(analytic), 1e-6));
        }
    }
}

TEST_CASE("exact inverse encoder: zero latent loss and a no-op latent update") {
    auto g = GeneratorModel::oracle(4, 16, "float64");
    auto e = test::exact_inverse_encoder(16);
    auto before = parameters_of(e);
    CrgTrainConfig c = quick_config(e.architecture());
    CrgTrainer trainer(g, e, c);
    torch::manual_seed(8);
    auto z = torch::randn({16, 4}, torch::kFloat64);
    const double loss = trainer.latent_step(z);
    CHECK(loss <= 1e-12);
    CHECK(same_tensors(before, parameters_of(e), 1e-6));
}

TEST_CASE("a step with lr = 0 leaves the parameters unchanged") {
    auto g = GeneratorModel::oracle(4, 16, "float64");
    EncoderModel e(dense_encoder(4, 16), 3);
    auto before = parameters_of(e);
    auto c = quick_config(e.architecture());
    c.lr = 0.0;
    CrgTrainer trainer(g, e, c);
    torch::manual_seed(8);
    auto x = test::rendered_dataset(8, 1, 16).images;
    trainer.step(torch::randn({8, 4}, torch::kFloat64), images_to_tensor(x, torch::kFloat64));
    CHECK(same_tensors(before, parameters_of(e)));
}

TEST_CASE("fixed mode never touches the generator; TG mode updates it") {
    auto garch = default_generator_architecture(8, 16);
    garch.channels = {16, 8, 4};
    GeneratorModel g(garch, 4);
    const auto digest = g.digest();
    auto ds = test::rendered_dataset(32, 2, 16);
    auto x = images_to_tensor(ds.images);
    auto c = quick_config(small_conv_encoder(8, 16));
    {
        CrgTrainer trainer(g, EncoderModel(c.encoder, 1), c);
        torch::manual_seed(1);
        for (int i = 0; i < 100; ++i) trainer.step(torch::randn({8, 8}), x.slice(0, (i % 4) * 8, (i % 4) * 8 + 8));
    }
    CHECK(g.digest() == digest);

    c.mode = CrgMode::CoTrained;
    auto tg = g.clone();
    CrgTrainer trainer(tg, EncoderModel(c.encoder, 1), c);
    trainer.step(torch::randn({8, 8}), x.slice(0, 0, 8));
    CHECK(tg.digest() != digest);
    CHECK(g.digest() == digest);
}

TEST_CASE("plateau schedule halves the lr twice to 2.5e-5") {
    PlateauSchedule s(1e-4, 10, 0.5, 20);
    CHECK(s.observe(1.0).improved);
    int events = 0;
    for (int i = 0; i < 20; ++i) {
        auto d = s.observe(1.0);
        events += d.lr_reduced;
        CHECK(d.stop == (i == 19));
    }
    CHECK(events == 2);
    CHECK(s.lr() == doctest::Approx(2.5e-5).epsilon(1e-15));
}

TEST_CASE("plateau counters reset on improvement") {
    PlateauSchedule s(1.0, 3, 0.5, 5);
    s.observe(5.0);
    s.observe(6.0);
    s.observe(6.0);
    CHECK(s.observe(4.0).improved);
    s.observe(4.0);
    s.observe(4.0);
    auto d = s.observe(4.0);
    CHECK(d.lr_reduced);
    CHECK_FALSE(d.stop);
    s.observe(4.0);
    CHECK(s.observe(4.0).stop);
}

TEST_CASE("config invariants") {
    CrgTrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.early_stop_patience = 10;
    CHECK_ERROR_CODE(c.validate(), Config);
    c = CrgTrainConfig{};
    c.encoder.dropout = 1.0;
    CHECK_ERROR_CODE(c.validate(), Config);
    c = CrgTrainConfig{};
    c.augmentation.max_rotation_degrees = 45;
    CHECK_ERROR_CODE(c.validate(), Config);
    auto back = CrgTrainConfig::from_json(quick_config(dense_encoder(4, 16)).to_json());
    CHECK(back.to_json() == quick_config(dense_encoder(4, 16)).to_json());
}

TEST_CASE("augmentation without rotation yields one of the four flips") {
    auto ds = test::rendered_dataset(6, 5, 16);
    auto x = images_to_tensor(ds.images);
    AugmentationSpec spec;
    spec.max_rotation_degrees = 0.0;
    std::mt19937_64 rng(1);
    auto y = augment_batch(x, spec, rng);
    for (int64_t i = 0; i < x.size(0); ++i) {
        auto xi = x[i];
        double best = 1e9;
        for (auto flipped : {xi, xi.flip({2}), xi.flip({1}), xi.flip({1, 2})})
            best = std::min(best, (flipped - y[i]).abs().max().item<double>());
        CHECK(best <= 1e-5);
    }
    spec.enabled = false;
    CHECK(torch::equal(augment_batch(x, spec, rng), x));
}

TEST_CASE("augmentation rotates within the configured bound") {
    auto ds = test::rendered_dataset(4, 6, 32);
    auto x = images_to_tensor(ds.images);
    AugmentationSpec spec;
    spec.horizontal_flip = spec.vertical_flip = false;
    std::mt19937_64 rng(2);
    auto y = augment_batch(x, spec, rng);
    CHECK(y.sizes() == x.sizes());
    CHECK(y.min().item<double>() >= -1.0);
    CHECK(y.max().item<double>() <= 1.0);
    CHECK_FALSE(torch::allclose(x, y));
}

TEST_CASE("early stopping after 20 flat epochs returns the best epoch") {
    auto g = GeneratorModel::oracle(4, 16, "float64");
    auto ds = test::rendered_dataset(40, 3, 16);
    auto c = quick_config(dense_encoder(4, 16));
    c.lr = 0.0;
    c.max_epochs = 100;
    auto r = train_encoder(g, ds, c);
    CHECK(r.early_stopped);
    CHECK(r.epochs_run == 21);
    CHECK(r.best_epoch == 1);
    CHECK(r.log.size() == 21);
    CHECK(r.final_lr == 0.0);
}

TEST_CASE("best checkpoint matches the minimum validation loss") {
    auto g = GeneratorModel::oracle(8, 16);
    auto ds = test::rendered_dataset(128, 4, 16);
    auto c = quick_config(small_conv_encoder(8, 16));
    c.max_epochs = 6;
    c.lr = 1e-3;
    auto r = train_encoder(g, ds, c);
    int argmin = 0;
    for (std::size_t i = 0; i < r.log.size(); ++i)
        if (r.log[i].val_total() < r.log[static_cast<std::size_t>(argmin)].val_total()) argmin = static_cast<int>(i);
    CHECK(r.best_epoch == r.log[static_cast<std::size_t>(argmin)].epoch);
}

TEST_CASE("oracle generator: epoch-5 latent loss improves on epoch 1") {
    auto g = GeneratorModel::oracle(8, 16);
    auto ds = test::rendered_dataset(256, 5, 16);
    auto c = quick_config(small_conv_encoder(8, 16));
    c.max_epochs = 5;
    auto r = train_encoder(g, ds, c);
    REQUIRE(r.log.size() == 5);
    CHECK(r.log[4].train_latent < r.log[0].train_latent);
}

TEST_CASE("dimension and capacity mismatches are configuration errors") {
    auto ds = test::rendered_dataset(8, 1, 16);
    auto g = GeneratorModel::oracle(8, 16);
    CHECK_ERROR_CODE(train_encoder(g, ds, quick_config(small_conv_encoder(6, 16))), Config);
    auto garch = default_generator_architecture(8, 16);
    GeneratorModel big(garch, 0);
    auto tiny = dense_encoder(8, 16);
    tiny.hidden = 2;
    tiny.dtype = "float32";
    CHECK_ERROR_CODE(train_encoder(big, ds, quick_config(tiny)), Config);
    CHECK_ERROR_CODE(CrgTrainer(g, EncoderModel(small_conv_encoder(6, 16), 0), quick_config(small_conv_encoder(6, 16))),
                     Config);
}

}
