#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <crg/crg.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

class Scratch {
public:
    Scratch() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("crg-capi-" + std::to_string(std::random_device{}()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string take(char* s) {
    std::string out = s ? s : "";
    crg_free(s);
    return out;
}

nlohmann::json take_json(char* s) { return nlohmann::json::parse(take(s)); }

crg_image* constant(int h, int w, float v) {
    std::vector<float> px(static_cast<std::size_t>(h * w), v);
    crg_image* img = nullptr;
    REQUIRE(crg_image_create(h, w, px.data(), &img) == CRG_OK);
    return img;
}

}  // namespace

TEST_CASE("status names and last error") {
    CHECK(std::string(crg_status_name(CRG_OK)) == "ok");
    CHECK(std::string(crg_status_name(CRG_ERR_DEGENERATE)) == "degenerate input");
    CHECK(std::string(crg_status_name(static_cast<crg_status>(99))) == "unknown");
    crg_image* img = nullptr;
    CHECK(crg_image_read_png("/nonexistent/file.png", &img) == CRG_ERR_IO);
    CHECK(img == nullptr);
    CHECK(std::strlen(crg_last_error()) > 0);
    CHECK(crg_image_create(2, 2, nullptr, &img) == CRG_ERR_INVALID_ARGUMENT);
    float bad[4] = {0, 0, 0, 2.0f};
    CHECK(crg_image_create(2, 2, bad, &img) == CRG_ERR_INVALID_ARGUMENT);
    char hex[65];
    CHECK(crg_sha256_hex("abc", 3, hex) == CRG_OK);
    CHECK(std::string(hex) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(std::string(crg_last_error()).empty());
}

TEST_CASE("base64 round trip") {
    const std::string text = "crg\x01\x02";
    char* enc = nullptr;
    REQUIRE(crg_base64_encode(text.data(), text.size(), &enc) == CRG_OK);
    uint8_t* dec = nullptr;
    size_t n = 0;
    REQUIRE(crg_base64_decode(enc, &dec, &n) == CRG_OK);
    CHECK(std::string(reinterpret_cast<char*>(dec), n) == text);
    crg_free(enc);
    crg_free(dec);
    CHECK(crg_base64_decode("@@@", &dec, &n) == CRG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("images, PNG and hashes") {
    Scratch tmp;
    auto* img = constant(32, 32, 0.2f);
    CHECK(crg_image_height(img) == 32);
    CHECK(crg_image_width(img) == 32);
    char hex[17];
    REQUIRE(crg_image_hash(img, "phash", hex) == CRG_OK);
    CHECK(std::string(hex) == "8000000000000000");
    REQUIRE(crg_image_hash(img, "dhash", hex) == CRG_OK);
    CHECK(std::string(hex) == "0000000000000000");
    CHECK(crg_image_hash(img, "ahash", hex) == CRG_ERR_INVALID_ARGUMENT);
    double sim = 0.0;
    REQUIRE(crg_hash_similarity("ffff000000000000", "0000000000000000", &sim) == CRG_OK);
    CHECK(sim == 0.75);

    REQUIRE(crg_image_write_png(img, (tmp / "a.png").c_str()) == CRG_OK);
    crg_image* back = nullptr;
    REQUIRE(crg_image_read_png((tmp / "a.png").c_str(), &back) == CRG_OK);
    uint8_t* png = nullptr;
    size_t n = 0;
    REQUIRE(crg_image_encode_png(back, &png, &n) == CRG_OK);
    crg_image* decoded = nullptr;
    REQUIRE(crg_image_decode_png(png, n, &decoded) == CRG_OK);
    CHECK(std::memcmp(crg_image_pixels(decoded), crg_image_pixels(back), 32 * 32 * sizeof(float)) == 0);
    double mae = 1, mse = 1;
    REQUIRE(crg_pixel_errors(img, back, &mae, &mse) == CRG_OK);
    CHECK(mae < 1.0 / 255);
    auto* small = constant(8, 8, 0.0f);
    CHECK(crg_pixel_errors(img, small, &mae, &mse) == CRG_ERR_SHAPE);
    crg_free(png);
    for (auto* p : {img, back, decoded, small}) crg_image_free(p);
}

TEST_CASE("dataset plan and generate agree") {
    Scratch tmp;
    const char* spec = R"({"n": 6, "seed": 7, "resolution": 32})";
    char* planned = nullptr;
    REQUIRE(crg_dataset_plan(spec, &planned) == CRG_OK);
    auto plan = take_json(planned);
    char* made = nullptr;
    REQUIRE(crg_dataset_generate((tmp / "ds").c_str(), spec, &made) == CRG_OK);
    auto manifest = take_json(made);
    CHECK(plan["digest"] == manifest["digest"]);

    crg_dataset* ds = nullptr;
    REQUIRE(crg_dataset_load((tmp / "ds").c_str(), 1, &ds) == CRG_OK);
    CHECK(crg_dataset_size(ds) == 6);
    crg_image* first = nullptr;
    REQUIRE(crg_dataset_image(ds, 0, &first) == CRG_OK);
    CHECK(crg_image_height(first) == 32);
    CHECK(crg_dataset_image(ds, 6, &first) == CRG_ERR_INVALID_ARGUMENT);
    crg_image_free(first);
    crg_dataset_free(ds);
    CHECK(crg_dataset_plan(R"({"seed": 1})", &planned) == CRG_ERR_INVALID_ARGUMENT);
    CHECK(crg_dataset_plan("{not json", &planned) == CRG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("oracle generator, checkpoints and kind checks") {
    Scratch tmp;
    crg_generator* g = nullptr;
    REQUIRE(crg_generator_oracle(4, 32, &g) == CRG_OK);
    CHECK(crg_generator_latent_dim(g) == 4);
    CHECK(crg_generator_resolution(g) == 32);
    double z[4] = {0.1, -0.2, 0.3, 1.0};
    crg_image* img = nullptr;
    REQUIRE(crg_generator_generate(g, z, 4, &img) == CRG_OK);
    CHECK(crg_generator_generate(g, z, 3, &img) == CRG_ERR_SHAPE);

    REQUIRE(crg_generator_save(g, (tmp / "g.ckpt").c_str(), R"({"note": "oracle"})") == CRG_OK);
    crg_generator* loaded = nullptr;
    REQUIRE(crg_generator_load((tmp / "g.ckpt").c_str(), &loaded) == CRG_OK);
    char* info = nullptr;
    REQUIRE(crg_generator_info(loaded, &info) == CRG_OK);
    auto j = take_json(info);
    CHECK(j["kind"] == "generator");
    CHECK(j["training_config"]["note"] == "oracle");
    crg_image* again = nullptr;
    REQUIRE(crg_generator_generate(loaded, z, 4, &again) == CRG_OK);
    CHECK(std::memcmp(crg_image_pixels(img), crg_image_pixels(again), 32 * 32 * sizeof(float)) == 0);

    crg_encoder* e = nullptr;
    CHECK(crg_encoder_load((tmp / "g.ckpt").c_str(), &e) == CRG_ERR_KIND);
    {
        std::ofstream(tmp / "junk.ckpt") << "CRGC";
    }
    CHECK(crg_generator_load((tmp / "junk.ckpt").c_str(), &loaded) != CRG_OK);
    crg_image_free(img);
    crg_image_free(again);
    crg_generator_free(g);
}

TEST_CASE("directions, edits and k ranges") {
    double z1[2] = {0.0, 0.0}, z2[2] = {2.0, 0.0};
    char* dj = nullptr;
    REQUIRE(crg_direction_from_latents(z1, z2, 2, "eyewear", &dj) == CRG_OK);
    const std::string dir = take(dj);
    auto d = nlohmann::json::parse(dir);
    CHECK(d["raw"][0] == 0.5);
    CHECK(d["attribute"] == "eyewear");
    CHECK(crg_direction_from_latents(z1, z1, 2, "x", &dj) == CRG_ERR_DEGENERATE);

    double out[2];
    REQUIRE(crg_edit_latent(dir.c_str(), z1, 2, 2.0, 0, out) == CRG_OK);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.0);
    double p = 0;
    REQUIRE(crg_project(dir.c_str(), z2, 2, &p) == CRG_OK);
    CHECK(p == 2.0);

    const char* stats = R"({"direction": [1.0, 0.0], "mu_neutral": -1.0, "sigma_neutral": 0.1,
        "mu_attributed": 1.0, "sigma_attributed": 0.2, "count_neutral": 10, "count_attributed": 10})";
    double lo = 0, hi = 0;
    REQUIRE(crg_k_range(dir.c_str(), stats, z1, 2, 1, &lo, &hi) == CRG_OK);
    CHECK(hi == doctest::Approx(1.6));
    CHECK(lo == doctest::Approx(-1.3));
    const char* flipped = R"({"direction": [1.0, 0.0], "mu_neutral": 1.0, "sigma_neutral": 0.1,
        "mu_attributed": -1.0, "sigma_attributed": 0.2, "count_neutral": 10, "count_attributed": 10})";
    CHECK(crg_k_range(dir.c_str(), flipped, z1, 2, 1, &lo, &hi) == CRG_ERR_ORIENTATION);

    char* avg = nullptr;
    const std::string list = "[" + dir + "," + dir + "]";
    REQUIRE(crg_direction_average(list.c_str(), &avg) == CRG_OK);
    CHECK(take_json(avg)["provenance"] == "average-of-2");
    CHECK(crg_direction_average(dir.c_str(), &avg) == CRG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("evaluation, analysis and inversion on the oracle") {
    crg_generator* g = nullptr;
    REQUIRE(crg_generator_oracle(4, 32, &g) == CRG_OK);
    std::vector<crg_image*> imgs;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 6; ++i) {
        double z[4];
        for (auto& c : z) c = normal(rng);
        crg_image* img = nullptr;
        REQUIRE(crg_generator_generate(g, z, 4, &img) == CRG_OK);
        imgs.push_back(img);
    }
    char* row = nullptr;
    REQUIRE(crg_evaluate_mean_baseline(imgs.data(), imgs.size(), &row) == CRG_OK);
    auto baseline = take_json(row);
    CHECK(baseline["name"] == "mean-image");
    CHECK(baseline["count"] == 6);

    nlohmann::json report = {{"dataset_digest", "d"}, {"rows", {baseline}}};
    char* text = nullptr;
    REQUIRE(crg_metrics_report_text(report.dump().c_str(), &text) == CRG_OK);
    CHECK(take(text).find("mean-image") != std::string::npos);

    char* res = nullptr;
    REQUIRE(crg_invert(g, nullptr, imgs[0], R"({"steps": 5, "step_size": 1.0, "init_seed": 2})", nullptr, &res) ==
            CRG_OK);
    auto inv = take_json(res);
    CHECK(inv["z"].size() == 4);
    CHECK(inv["steps"] == 5);
    CHECK(crg_invert(g, nullptr, imgs[0], R"({"steps": 0})", nullptr, &res) == CRG_ERR_CONFIG);
    for (auto* img : imgs) crg_image_free(img);
    crg_generator_free(g);
}

TEST_CASE("short training runs through the C API") {
    Scratch tmp;
    crg_dataset* ds = nullptr;
    REQUIRE(crg_dataset_generate((tmp / "ds").c_str(), R"({"n": 64, "seed": 1, "resolution": 16})", nullptr) ==
            CRG_OK);
    REQUIRE(crg_dataset_load((tmp / "ds").c_str(), 1, &ds) == CRG_OK);

    nlohmann::json gan = {{"total_steps", 3},    {"batch_size", 8},       {"log_every", 1},
                          {"monitor_every", 100},  {"monitor_samples", 16}, {"seed", 4}};
    gan["generator"] = {{"family", "dense"}, {"latent_dim", 4}, {"resolution", 16}, {"hidden", 16}};
    gan["discriminator"] = {{"family", "conv"}, {"latent_dim", 4}, {"resolution", 16}, {"channels", {8, 16}}};
    int lines = 0;
    auto count = [](const char*, void* user) { ++*static_cast<int*>(user); };
    crg_generator* g = nullptr;
    char* result = nullptr;
    const std::string opts = nlohmann::json{{"discriminator_path", tmp / "d.ckpt"}}.dump();
    const auto st = crg_train_gan(ds, gan.dump().c_str(), opts.c_str(), count, &lines, &g, &result);
    INFO(crg_last_error());
    REQUIRE(st == CRG_OK);
    CHECK(take_json(result)["generator_steps"] == 3);
    CHECK(lines >= 3);
    CHECK(fs::exists(tmp / "d.ckpt"));

    nlohmann::json enc = {{"batch_size", 16}, {"max_epochs", 2}, {"validation_latents", 16}, {"seed", 2}};
    enc["encoder"] = {{"family", "dense"}, {"latent_dim", 4}, {"resolution", 16}, {"hidden", 64}};
    crg_encoder* e = nullptr;
    crg_generator* g2 = nullptr;
    lines = 0;
    REQUIRE(crg_train_encoder(g, ds, enc.dump().c_str(), nullptr, count, &lines, &e, &g2, &result) == CRG_OK);
    auto r = take_json(result);
    CHECK(r["epochs_run"] == 2);
    CHECK(r["generator_digest_before"] == r["generator_digest_after"]);
    CHECK(lines == 2);

    crg_image* x = nullptr;
    REQUIRE(crg_dataset_image(ds, 0, &x) == CRG_OK);
    double z[4];
    REQUIRE(crg_encoder_encode(e, x, z, 4) == CRG_OK);
    CHECK(crg_encoder_encode(e, x, z, 3) == CRG_ERR_SHAPE);
    for (double c : z) CHECK(std::isfinite(c));

    REQUIRE(crg_encoder_save(e, (tmp / "e.ckpt").c_str(), nullptr) == CRG_OK);
    crg_encoder* e2 = nullptr;
    REQUIRE(crg_encoder_load((tmp / "e.ckpt").c_str(), &e2) == CRG_OK);
    char* cfg = nullptr;
    REQUIRE(crg_encoder_training_config(e2, &cfg) == CRG_OK);
    CHECK(take_json(cfg).contains("generator_digest"));

    char* dj = nullptr;
    CHECK(crg_direction_from_images(e2, x, x, "eyewear", &dj) == CRG_ERR_DEGENERATE);

    crg_image_free(x);
    crg_encoder_free(e);
    crg_encoder_free(e2);
    crg_generator_free(g);
    crg_generator_free(g2);
    crg_dataset_free(ds);
}
