#include "test_support.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "common/io.hpp"
#include "common/tensor_util.hpp"
#include "models/checkpoint.hpp"
#include "models/networks.hpp"
#include "models/spectral_norm.hpp"
#include "synthdata/render.hpp"

using namespace crg;
using crg::test::random_latents;

namespace {

double max_singular_value(const torch::Tensor& w) {
    return torch::linalg_svdvals(w.reshape({w.size(0), -1}).to(torch::kFloat64)).max().item<double>();
}

Architecture small_generator() {
    auto a = default_generator_architecture(8, 16);
    a.channels = {32, 16, 8};
    return a;
}

Architecture small_encoder() {
    auto a = default_encoder_architecture(8, 16, 0.5);
    a.channels = {8, 16, 16};
    return a;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("spectral normalization of diag(3, 1)") {
    auto w = torch::tensor({3.0, 0.0, 0.0, 1.0}, torch::kFloat64).view({2, 2});
    auto u = torch::tensor({0.6, 0.8}, torch::kFloat64);
    auto r = spectral_normalize(w, u, 20);
    CHECK(r.sigma == doctest::Approx(3.0).epsilon(1e-9));
    auto expected = torch::tensor({1.0, 0.0, 0.0, 1.0 / 3.0}, torch::kFloat64).view({2, 2});
    CHECK(torch::allclose(r.weight, expected, 0.0, 1e-9));
}

TEST_CASE("spectral normalization leaves the identity unchanged") {
    auto w = torch::eye(3, torch::kFloat64);
    auto r = spectral_normalize(w, spectral_norm_init_state(w, 0), 5);
    CHECK(r.sigma == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(torch::allclose(r.weight, w, 0.0, 1e-12));
}

TEST_CASE("spectral normalization of a rank-1 outer product scales by 1/5") {
    auto a = torch::tensor({1.0, 2.0, 2.0}, torch::kFloat64);        // |a| = 3
    auto b = torch::tensor({0.0, 4.0 / 3.0, 0.0, 0.0}, torch::kFloat64) * 1.0;
    b = b / b.norm() * (5.0 / 3.0);                                    // |a||b| = 5
    auto w = torch::outer(a, b);
    auto r = spectral_normalize(w, spectral_norm_init_state(w, 0), 5);
    CHECK(r.sigma == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(torch::allclose(r.weight, w / 5.0, 0.0, 1e-12));
}

TEST_CASE("spectral normalization rejects a zero weight") {
    auto w = torch::zeros({3, 3});
    CHECK_ERROR_CODE(spectral_normalize(w, torch::ones({3}), 1), Degenerate);
}

TEST_CASE("spectral state carried across steps tracks a changing weight") {
    torch::manual_seed(3);
    auto w = torch::randn({16, 40}, torch::kFloat64);
    auto u = spectral_norm_init_state(w, 5);
    for (int step = 0; step < 200; ++step) {
        w = w + 0.001 * torch::randn_like(w);
        u = spectral_normalize(w, u, 1).u;
    }
    auto r = spectral_normalize(w, u, 0);
    CHECK(std::abs(max_singular_value(r.weight) - 1.0) <= 1e-3);
}

TEST_CASE("every normalized layer has unit spectral norm") {
    DiscriminatorModel d(default_discriminator_architecture(32), 1);
    GeneratorModel g(default_generator_architecture(32, 32), 1);
    auto dw = d.normalized_weights();
    auto gw = normalized_weights(g);
    CHECK(dw.size() == 4);
    CHECK(gw.size() == 5);
    for (const auto& [name, w] : dw) CHECK_MESSAGE(std::abs(max_singular_value(w) - 1.0) <= 1e-3, name);
    for (const auto& [name, w] : gw) CHECK_MESSAGE(std::abs(max_singular_value(w) - 1.0) <= 1e-3, name);
}

TEST_CASE("spectral state advances only in training-mode forwards") {
    DiscriminatorModel d(default_discriminator_architecture(16), 2);
    auto before = d.digest();
    auto x = torch::zeros({2, 1, 16, 16});
    d.forward(x, Mode::Inference);
    CHECK(d.digest() == before);
    d.forward(x, Mode::Train);
    CHECK(d.digest() != before);
}

TEST_CASE("generator output stays in [-1, 1] for any finite z") {
    GeneratorModel g(small_generator(), 4);
    for (double scale : {1.0, 100.0, 1e6}) {
        auto imgs = generator_forward(g, random_latents(4, 8, 9, scale));
        for (const auto& img : imgs) {
            CHECK(img.height() == 16);
            CHECK_NOTHROW(img.validate());
        }
    }
}

TEST_CASE("generator forward is deterministic and validates input") {
    GeneratorModel g(small_generator(), 4);
    auto z = random_latents(1, 8, 1);
    std::vector<LatentVector> twice = {z[0], z[0]};
    auto out = generator_forward(g, twice);
    CHECK(out[0] == out[1]);
    CHECK(generator_forward(g, twice)[0] == out[0]);

    std::vector<LatentVector> wrong = {LatentVector(7, 0.0)};
    CHECK_ERROR_CODE(generator_forward(g, wrong), Shape);
    auto bad = twice;
    bad[1][3] = std::numeric_limits<double>::infinity();
    CHECK_ERROR_CODE(generator_forward(g, bad), InvalidArgument);
    CHECK_ERROR_CODE(generator_forward(g, std::vector<LatentVector>{}), InvalidArgument);
}

TEST_CASE("seeded construction is reproducible and does not disturb the global RNG") {
    torch::manual_seed(77);
    auto expected = torch::rand({3});
    torch::manual_seed(77);
    GeneratorModel a(small_generator(), 5);
    auto after = torch::rand({3});
    CHECK(torch::equal(expected, after));
    GeneratorModel b(small_generator(), 5);
    GeneratorModel c(small_generator(), 6);
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() != c.digest());
}

TEST_CASE("oracle generator maps zero to the neutral image") {
    auto g = GeneratorModel::oracle(6, 32, "float64");
    auto img = generator_forward(g, std::vector<LatentVector>{LatentVector(6, 0.0)});
    CHECK(img[0] == render_sample(AttributeConfig::neutral(0), 32));
}

TEST_CASE("oracle generator ignores nuisance components") {
    auto g = GeneratorModel::oracle(8, 16);
    auto zs = random_latents(2, 8, 4);
    for (int k = 0; k < 4; ++k) zs[1][k] = zs[0][k];
    auto out = generator_forward(g, zs);
    CHECK(out[0] == out[1]);
}

TEST_CASE("oracle generator needs at least four latent components") {
    CHECK_ERROR_CODE(GeneratorModel::oracle(3, 16), Config);
    CHECK_ERROR_CODE(GeneratorModel::oracle(4, 24), Config);
}

TEST_CASE("oracle generator pixel-sum gradient matches central finite differences") {
    auto g = GeneratorModel::oracle(4, 32, "float64");
    const double h = 1e-4;
    auto pixel_sum = [&](const torch::Tensor& z) { return g.forward(z).sum(); };
    auto z0 = torch::tensor({0.3, -0.2, 0.5, 0.1}, torch::kFloat64).view({1, 4}).requires_grad_(true);
    pixel_sum(z0).backward();
    for (int comp = 0; comp < 4; ++comp) {
        const double analytic = z0.grad()[0][comp].item<double>();
        torch::NoGradGuard ng;
        auto zp = z0.detach().clone(), zm = z0.detach().clone();
        zp[0][comp] += h;
        zm[0][comp] -= h;
        const double fd = (pixel_sum(zp).item<double>() - pixel_sum(zm).item<double>()) / (2 * h);
        CHECK(std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(analytic), 1e-6));
    }
}

TEST_CASE("oracle generator pixel gradients match finite differences on 20 probes") {
    auto g = GeneratorModel::oracle(4, 32, "float64");
    const auto& masks = region_masks(32);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal;
    const double h = 1e-4;
    int checked = 0;
    while (checked < 20) {
        const int comp = static_cast<int>(rng() % 4);
        const auto& mask = attribute_mask(masks, kAllAttributes[comp]);
        const auto pixel = static_cast<int64_t>(rng() % mask.size());
        if (!mask[pixel]) continue;
        std::vector<double> zv = {normal(rng), normal(rng), normal(rng), normal(rng)};
        auto z = torch::tensor(zv, torch::kFloat64).view({1, 4}).requires_grad_(true);
        g.forward(z).flatten()[pixel].backward();
        const double analytic = z.grad()[0][comp].item<double>();
        double fd;
        {
            torch::NoGradGuard ng;
            auto zp = z.detach().clone(), zm = z.detach().clone();
            zp[0][comp] += h;
            zm[0][comp] -= h;
            fd = (g.forward(zp).flatten()[pixel].item<double>() - g.forward(zm).flatten()[pixel].item<double>()) /
                 (2 * h);
        }
        CHECK(std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(analytic), 1e-6));
        ++checked;
    }
}

TEST_CASE("encoder is deterministic in inference mode only") {
    EncoderModel e(small_encoder(), 3);
    auto img = render_sample(AttributeConfig(0.2, 0.9, 0.5, 1.0, 4), 16);
    auto z = encoder_forward(e, std::vector<ImageTensor>{img, img});
    CHECK((z[0] == z[1]));
    CHECK(z[0].size() == 8);

    auto x = images_to_tensor(std::vector<ImageTensor>{img, img});
    auto train = e.forward(x, Mode::Train);
    auto infer = e.forward(x, Mode::Inference);
    CHECK_FALSE(torch::equal(train, infer));
}

TEST_CASE("encoder input validation") {
    EncoderModel e(small_encoder(), 3);
    CHECK_ERROR_CODE(encoder_forward(e, std::vector<ImageTensor>{}), InvalidArgument);
    CHECK_ERROR_CODE(encoder_forward(e, std::vector<ImageTensor>{ImageTensor(32, 32)}), Shape);
}

TEST_CASE("default encoder has more parameters than the default generator") {
    GeneratorModel g(default_generator_architecture(32, 32), 0);
    EncoderModel e(default_encoder_architecture(32, 32), 0);
    CHECK(e.parameter_count() > g.parameter_count());
}

TEST_CASE("affine encoder inverts the oracle generator exactly when fitted") {
    auto e = test::exact_inverse_encoder(16);
    auto g = GeneratorModel::oracle(4, 16, "float64");
    auto zs = random_latents(5, 4, 12);
    auto x = g.forward(latents_to_tensor(zs, torch::kFloat64));
    auto back = tensor_to_latents(e.forward(x));
    for (std::size_t i = 0; i < zs.size(); ++i)
        for (int k = 0; k < 4; ++k) CHECK(back[i][k] == doctest::Approx(zs[i][k]).epsilon(1e-8));
}

TEST_CASE("concurrent inference on a shared model is consistent") {
    GeneratorModel g(small_generator(), 8);
    auto zs = random_latents(4, 8, 2);
    auto expected = generator_forward(g, zs);
    std::vector<std::vector<ImageTensor>> results(4);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { results[t] = generator_forward(g, zs); });
    for (auto& th : threads) th.join();
    for (const auto& r : results) CHECK((r == expected));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    test::TempDir dir;
    GeneratorModel g(small_generator(), 10);
    const auto path = dir / "g.ckpt";
    save_checkpoint(make_checkpoint(g, {{"lr", 1e-4}}, torch_rng_digest()), path);
    auto loaded = load_generator(path);
    auto zs = random_latents(3, 8, 5);
    CHECK((generator_forward(loaded, zs) == generator_forward(g, zs)));
    CHECK(loaded.digest() == g.digest());

    save_checkpoint(load_checkpoint(path), dir / "g2.ckpt");
    CHECK(read_file(path) == read_file(dir / "g2.ckpt"));

    auto ckpt = load_checkpoint(path);
    CHECK(ckpt.training_config["lr"].get<double>() == 1e-4);
    CHECK(ckpt.architecture == g.architecture());
}

TEST_CASE("encoder and discriminator checkpoints round trip") {
    test::TempDir dir;
    EncoderModel e(small_encoder(), 2);
    DiscriminatorModel d(default_discriminator_architecture(16), 2);
    d.forward(torch::zeros({1, 1, 16, 16}), Mode::Train);
    save_checkpoint(make_checkpoint(e), dir / "e.ckpt");
    save_checkpoint(make_checkpoint(d), dir / "d.ckpt");
    CHECK(load_encoder(dir / "e.ckpt").digest() == e.digest());
    CHECK(load_discriminator(dir / "d.ckpt").digest() == d.digest());
}

TEST_CASE("corrupt checkpoints fail with distinct errors") {
    test::TempDir dir;
    GeneratorModel g(small_generator(), 10);
    const auto path = dir / "g.ckpt";
    save_checkpoint(make_checkpoint(g), path);
    const auto bytes = read_file(path);

    auto variant = [&](const std::string& name, std::string content) {
        write_file_atomic(dir / name, content);
        return dir / name;
    };
    auto flipped_version = bytes;
    flipped_version[4] ^= 0x01;
    CHECK_ERROR_CODE(load_checkpoint(variant("v.ckpt", flipped_version)), Version);

    auto flipped_payload = bytes;
    flipped_payload[bytes.size() - 3] ^= 0x40;
    CHECK_ERROR_CODE(load_checkpoint(variant("p.ckpt", flipped_payload)), Digest);

    CHECK_ERROR_CODE(load_checkpoint(variant("t.ckpt", bytes.substr(0, bytes.size() - 100))), Truncated);
    CHECK_ERROR_CODE(load_checkpoint(variant("h.ckpt", bytes.substr(0, 10))), Truncated);
    CHECK_ERROR_CODE(load_checkpoint(variant("m.ckpt", "NOPE" + bytes.substr(4))), Io);
    CHECK_ERROR_CODE(load_encoder(path), Kind);
    CHECK_ERROR_CODE(load_checkpoint(dir / "missing.ckpt"), Io);
}

}
