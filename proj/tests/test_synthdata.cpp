#include "test_support.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "common/image.hpp"
#include "synthdata/dataset.hpp"
#include "synthdata/render.hpp"

using namespace crg;

namespace {

double region_mean01(const ImageTensor& img, const std::vector<std::uint8_t>& mask) {
    double sum = 0, n = 0;
    auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!mask[i]) continue;
        sum += (px[i] + 1.0) / 2.0;
        n += 1;
    }
    return sum / n;
}

AttributeConfig random_config(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0), m(-1.0, 1.0);
    return AttributeConfig(u(rng), u(rng), m(rng), u(rng), rng());
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("attribute config rejects out-of-range fields") {
    CHECK_ERROR_CODE(AttributeConfig(1.1, 0.5, 0.0, 0.5), InvalidArgument);
    CHECK_ERROR_CODE(AttributeConfig(0.5, -0.1, 0.0, 0.5), InvalidArgument);
    CHECK_ERROR_CODE(AttributeConfig(0.5, 0.5, -1.5, 0.5), InvalidArgument);
    CHECK_ERROR_CODE(AttributeConfig(0.5, 0.5, 0.0, 2.0), InvalidArgument);
    CHECK_ERROR_CODE(AttributeConfig(std::nan(""), 0.5, 0.0, 0.5), InvalidArgument);
    CHECK_NOTHROW(AttributeConfig(0.0, 1.0, -1.0, 1.0));
}

TEST_CASE("rendering is deterministic and within range") {
    const auto a = AttributeConfig(0.3, 0.6, -0.4, 0.2, 99);
    for (int res : {16, 32}) {
        auto x = render_sample(a, res);
        auto y = render_sample(a, res);
        CHECK(x == y);
        CHECK(x.height() == res);
        CHECK_NOTHROW(x.validate());
    }
}

TEST_CASE("unsupported resolution is a configuration error") {
    CHECK_ERROR_CODE(render_sample(AttributeConfig::neutral(), 24), Config);
    CHECK_ERROR_CODE(render_sample(AttributeConfig::neutral(), 64), Config);
}

TEST_CASE("hair shade 0.8 gives a top-band mean of 0.8") {
    for (int res : {16, 32}) {
        auto img = render_sample(AttributeConfig(0.5, 0.8, 0.0, 0.5, 3), res);
        CHECK(std::abs(region_mean01(img, region_masks(res).hair) - 0.80) <= 0.02);
    }
}

TEST_CASE("region masks partition the image") {
    for (int res : {16, 32}) {
        const auto& m = region_masks(res);
        for (std::size_t i = 0; i < m.face.size(); ++i) {
            CHECK(m.hair[i] + m.eye[i] + m.mouth[i] + m.face[i] == 1);
            if (m.cheek[i]) CHECK(m.face[i] == 1);
            if (m.texture[i]) CHECK(m.face[i] == 1);
        }
    }
}

TEST_CASE("each attribute changes pixels only inside its region mask") {
    std::mt19937_64 rng(11);
    for (int res : {16, 32}) {
        const auto& masks = region_masks(res);
        for (int trial = 0; trial < 5; ++trial) {
            const auto base = random_config(rng);
            for (auto a : kAllAttributes) {
                const auto r = attribute_range(a);
                auto lo = render_sample(base.with(a, r.lo), res);
                auto hi = render_sample(base.with(a, r.hi), res);
                const auto& mask = attribute_mask(masks, a);
                double inside = 0;
                for (std::size_t i = 0; i < lo.size(); ++i) {
                    const double d = std::abs(lo.data()[i] - hi.data()[i]);
                    if (mask[i])
                        inside = std::max(inside, d);
                    else
                        CHECK(d == 0.0);
                }
                CHECK(inside > 0.0);
            }
        }
    }
}

TEST_CASE("eyewear 0 vs 1 differs only inside the eye band") {
    const auto base = AttributeConfig(0.4, 0.3, 0.2, 0.0, 5);
    auto a = render_sample(base, 32);
    auto b = render_sample(base.with(Attribute::Eyewear, 1.0), 32);
    const auto& eye = region_masks(32).eye;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!eye[i]) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("region statistics are monotone in their attribute") {
    const auto& m = region_masks(32);
    auto base = AttributeConfig::neutral(1);
    double prev_face = -1, prev_hair = -1, prev_eye = 2;
    for (int k = 0; k <= 10; ++k) {
        const double v = k / 10.0;
        const double face = region_mean01(render_sample(base.with(Attribute::FaceSize, v), 32), m.face);
        const double hair = region_mean01(render_sample(base.with(Attribute::HairShade, v), 32), m.hair);
        const double eye = region_mean01(render_sample(base.with(Attribute::Eyewear, v), 32), m.eye);
        CHECK(face > prev_face);
        CHECK(hair > prev_hair);
        CHECK(eye < prev_eye);
        prev_face = face;
        prev_hair = hair;
        prev_eye = eye;
    }
}

TEST_CASE("measure inverts render for 100 random configurations") {
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const auto a = random_config(rng);
        for (int res : {16, 32}) {
            auto est = measure_attributes(render_sample(a, res));
            CHECK_FALSE(est.low_confidence);
            for (auto attr : kAllAttributes) worst = std::max(worst, std::abs(est.get(attr) - a.get(attr)));
        }
    }
    CHECK(worst <= 0.02);
}

TEST_CASE("measure inverts render on a 10-point grid per attribute") {
    for (auto attr : kAllAttributes) {
        const auto r = attribute_range(attr);
        for (int k = 0; k < 10; ++k) {
            const double v = r.lo + (r.hi - r.lo) * k / 9.0;
            auto est = measure_attributes(render_sample(AttributeConfig::neutral(k).with(attr, v), 32));
            for (auto other : kAllAttributes) {
                const double truth = other == attr ? v : AttributeConfig::neutral().get(other);
                CHECK(std::abs(est.get(other) - truth) <= 0.02);
            }
        }
    }
}

TEST_CASE("measure survives 8-bit PNG quantization") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const auto a = random_config(rng);
        auto img = decode_png(encode_png(render_sample(a, 32)));
        auto est = measure_attributes(img);
        for (auto attr : kAllAttributes) CHECK(std::abs(est.get(attr) - a.get(attr)) <= 0.02);
    }
}

TEST_CASE("constant -1 image is flagged low confidence at range minima") {
    ImageTensor img(32, 32, std::vector<float>(32 * 32, -1.0f));
    auto est = measure_attributes(img);
    CHECK(est.low_confidence);
    for (auto attr : kAllAttributes) CHECK(est.get(attr) == attribute_range(attr).lo);
}

TEST_CASE("single-factor variation moves only that estimate") {
    const auto base = AttributeConfig(0.6, 0.4, -0.8, 0.3, 17);
    auto e1 = measure_attributes(render_sample(base, 32));
    auto e2 = measure_attributes(render_sample(base.with(Attribute::MouthCurve, 0.9), 32));
    CHECK(std::abs(e2.get(Attribute::MouthCurve) - e1.get(Attribute::MouthCurve)) > 1.0);
    for (auto attr : {Attribute::FaceSize, Attribute::HairShade, Attribute::Eyewear})
        CHECK(std::abs(e2.get(attr) - e1.get(attr)) <= 0.02);
}

TEST_CASE("measure rejects unsupported resolutions") {
    CHECK_ERROR_CODE(measure_attributes(ImageTensor(24, 24)), Shape);
    CHECK_ERROR_CODE(measure_attributes(ImageTensor(16, 32)), Shape);
}

TEST_CASE("render_attributes is differentiable") {
    auto attrs = torch::tensor({0.3, 0.7, 0.1, 0.6}, torch::kFloat64).view({1, 4}).requires_grad_(true);
    auto img = render_attributes(attrs, 16, 0);
    img.sum().backward();
    CHECK(attrs.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("dataset planning is seeded and reproducible") {
    const auto s = SamplerSpec::defaults();
    auto a = plan_dataset(10, 7, 32, s);
    auto b = plan_dataset(10, 7, 32, s);
    auto c = plan_dataset(10, 8, 32, s);
    CHECK(a.digest == b.digest);
    CHECK(a.digest != c.digest);
    CHECK(a.records.size() == 10);
    CHECK_ERROR_CODE(plan_dataset(0, 7, 32, s), InvalidArgument);
}

TEST_CASE("binary sampler labels exactly ceil(n * fraction) samples") {
    auto s = SamplerSpec::defaults();
    s[Attribute::Eyewear] = AttributeSampler::binary(1.0, 0.0, 0.5);
    for (std::size_t n : {1u, 7u, 10u, 33u}) {
        auto m = plan_dataset(n, 3, 16, s);
        CHECK(m.attributed_count(Attribute::Eyewear) == (n + 1) / 2);
        std::size_t ones = 0;
        for (const auto& r : m.records) ones += r.eyewear() == 1.0;
        CHECK(ones == (n + 1) / 2);
    }
}

TEST_CASE("generated dataset round-trips through disk") {
    test::TempDir dir;
    auto m = generate_dataset(dir.path(), 12, 5, 16, SamplerSpec::defaults());
    auto loaded = load_dataset(dir.path());
    CHECK(loaded.manifest.digest == m.digest);
    CHECK((loaded.manifest.records == m.records));
    CHECK(loaded.manifest.schema_version == DatasetManifest::kSchemaVersion);
    std::vector<ImageTensor> rendered;
    plan_dataset(12, 5, 16, SamplerSpec::defaults(), &rendered);
    for (std::size_t i = 0; i < rendered.size(); ++i) CHECK(loaded.images[i] == quantized(rendered[i]));
}

TEST_CASE("tampered dataset fails digest verification") {
    test::TempDir dir;
    auto m = generate_dataset(dir.path(), 4, 1, 16, SamplerSpec::defaults());
    write_png(dir.path() / m.image_file(2), ImageTensor(16, 16));
    CHECK_ERROR_CODE(load_dataset(dir.path()), Digest);
    CHECK_NOTHROW(load_dataset(dir.path(), false));
}

TEST_CASE("unwritable output location is an I/O error") {
    test::TempDir dir;
    const auto blocker = dir / "file";
    std::ofstream(blocker) << "x";
    CHECK_ERROR_CODE(generate_dataset(blocker / "sub", 2, 1, 16, SamplerSpec::defaults()), Io);
}

TEST_CASE("sampler spec JSON round-trips") {
    auto s = SamplerSpec::defaults();
    s[Attribute::HairShade] = AttributeSampler::fixed(0.25);
    auto back = SamplerSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
}

}
