#include "synthdata/render.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include "common/error.hpp"

namespace crg {
namespace {

// Intensities in [0, 1] before the map to the model domain.
constexpr double kSkin = 0.70;
constexpr double kBackground = 0.15;
constexpr double kBar = 0.05;
constexpr double kTextureAmplitude = 0.06;
constexpr double kEyeDepth = 0.55;
constexpr double kEyeSigma = 0.045;
constexpr double kMouthDepth = 0.5;
constexpr double kMouthSigma = 0.03;
constexpr double kMouthBend = 0.05;
constexpr double kMouthHalfWidth = 0.2;
constexpr double kFaceCenterY = 0.56;
constexpr double kFaceEdge = 0.04;
constexpr double kConfidenceTolerance = 0.25;
// Face outline: face_size blends a small and a large anti-aliased ellipse,
// which keeps every pixel affine in every attribute.
constexpr double kSmallHalfWidth = 0.30, kSmallHalfHeight = 0.34;
constexpr double kLargeHalfWidth = 0.44, kLargeHalfHeight = 0.46;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Templates {
    RegionMasks masks;
    std::vector<double> eye_base;    // glasses-free eye band
    std::vector<double> smile;       // stroke darkness, corners up
    std::vector<double> frown;       // stroke darkness, corners down
    std::vector<double> small_face;  // coverage of the small ellipse
    std::vector<double> large_face;  // coverage of the large ellipse
    double face_mean_small = 0.0;    // face-region mean intensity at face_size 0
    double face_mean_large = 0.0;    // ... and at face_size 1
    AttributeReadout readout;
    torch::Tensor eye_t, smile_t, frown_t, small_t, large_t;
    torch::Tensor hair_m, eye_m, mouth_m, face_m;
};

// Pixel (r, c) has center ((c + 0.5) / R, (r + 0.5) / R). Region borders sit
// on multiples of 1/16, which fall between pixel centers at R = 16 and 32.
bool in_band(int index, int resolution, int lo16, int hi16) {
    const int twice = 2 * index + 1;  // 2R * center
    return 16 * twice >= 2 * lo16 * resolution && 16 * twice < 2 * hi16 * resolution;
}

torch::Tensor as_tensor(const std::vector<double>& values, int resolution) {
    return torch::from_blob(const_cast<double*>(values.data()), {resolution, resolution}, torch::kFloat64).clone();
}

torch::Tensor mask_tensor(const std::vector<std::uint8_t>& mask, int resolution) {
    std::vector<double> values(mask.begin(), mask.end());
    return as_tensor(values, resolution);
}

std::unique_ptr<Templates> build_templates(int resolution) {
    auto t = std::make_unique<Templates>();
    const int n = resolution * resolution;
    auto& m = t->masks;
    m.resolution = resolution;
    for (auto* mask : {&m.hair, &m.eye, &m.mouth, &m.face, &m.cheek, &m.texture}) mask->assign(n, 0);
    t->eye_base.assign(n, 0.0);
    t->smile.assign(n, 0.0);
    t->frown.assign(n, 0.0);
    t->small_face.assign(n, 0.0);
    t->large_face.assign(n, 0.0);

    auto coverage = [](double u, double v, double a, double b) {
        const double rho = std::hypot((u - 0.5) / a, (v - kFaceCenterY) / b);
        return sigmoid((1.0 - rho) / kFaceEdge);
    };
    for (int r = 0; r < resolution; ++r) {
        for (int c = 0; c < resolution; ++c) {
            const int i = r * resolution + c;
            const double u = (c + 0.5) / resolution;
            const double v = (r + 0.5) / resolution;
            if (in_band(r, resolution, 0, 3)) {
                m.hair[i] = 1;
            } else if (in_band(r, resolution, 5, 7) && in_band(c, resolution, 3, 13)) {
                m.eye[i] = 1;
            } else if (in_band(r, resolution, 10, 13) && in_band(c, resolution, 4, 12)) {
                m.mouth[i] = 1;
            } else {
                m.face[i] = 1;
                if (in_band(r, resolution, 7, 10) && in_band(c, resolution, 6, 10)) m.cheek[i] = 1;
                const double rho_max = std::hypot((u - 0.5) / kLargeHalfWidth, (v - kFaceCenterY) / kLargeHalfHeight);
                if (rho_max >= 1.15) m.texture[i] = 1;
            }
            t->small_face[i] = coverage(u, v, kSmallHalfWidth, kSmallHalfHeight);
            t->large_face[i] = coverage(u, v, kLargeHalfWidth, kLargeHalfHeight);

            const double eye_v = 6.0 / 16.0;
            double eyes = 0.0;
            for (double eye_u : {0.34, 0.66}) {
                const double d2 = (u - eye_u) * (u - eye_u) + (v - eye_v) * (v - eye_v);
                eyes += std::exp(-d2 / (2.0 * kEyeSigma * kEyeSigma));
            }
            t->eye_base[i] = kSkin - kEyeDepth * eyes;

            const double mouth_v = 11.5 / 16.0;
            const double tt = (u - 0.5) / kMouthHalfWidth;
            const double bend = kMouthBend * (0.5 - tt * tt);
            const double cap = sigmoid((kMouthHalfWidth - std::abs(u - 0.5)) / 0.02);
            const double ys = mouth_v + bend;  // center lower than corners
            const double yf = mouth_v - bend;
            const double k = 2.0 * kMouthSigma * kMouthSigma;
            t->smile[i] = kMouthDepth * cap * std::exp(-(v - ys) * (v - ys) / k);
            t->frown[i] = kMouthDepth * cap * std::exp(-(v - yf) * (v - yf) / k);
        }
    }

    t->eye_t = as_tensor(t->eye_base, resolution);
    t->smile_t = as_tensor(t->smile, resolution);
    t->frown_t = as_tensor(t->frown, resolution);
    t->small_t = as_tensor(t->small_face, resolution);
    t->large_t = as_tensor(t->large_face, resolution);
    t->hair_m = mask_tensor(m.hair, resolution);
    t->eye_m = mask_tensor(m.eye, resolution);
    t->mouth_m = mask_tensor(m.mouth, resolution);
    t->face_m = mask_tensor(m.face, resolution);

    // The nuisance texture is zero-mean over its support, so it drops out of
    // the face-region mean.
    double small_sum = 0.0, large_sum = 0.0, count = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!m.face[i]) continue;
        small_sum += kBackground + (kSkin - kBackground) * t->small_face[i];
        large_sum += kBackground + (kSkin - kBackground) * t->large_face[i];
        count += 1.0;
    }
    t->face_mean_small = small_sum / count;
    t->face_mean_large = large_sum / count;

    // Readout in intensity I = (x + 1) / 2, folded into the model domain.
    auto& ro = t->readout;
    ro.resolution = resolution;
    for (auto& w : ro.weights) w.assign(n, 0.0);
    double hair_n = 0, eye_den = 0, mouth_den = 0;
    for (int i = 0; i < n; ++i) {
        hair_n += m.hair[i];
        if (m.eye[i]) eye_den += std::pow(t->eye_base[i] - kBar, 2);
        if (m.mouth[i]) mouth_den += std::pow(t->smile[i] - t->frown[i], 2);
    }
    const double face_span = t->face_mean_large - t->face_mean_small;
    ro.bias = {(0.5 - t->face_mean_small) / face_span, 0.5, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        if (m.face[i]) ro.weights[0][i] = 0.5 / (count * face_span);
        if (m.hair[i]) ro.weights[1][i] = 0.5 / hair_n;
        if (m.mouth[i]) {
            // mouth = -2 <I - base, diff> / |diff|^2, base = skin - (smile + frown) / 2
            const double diff = t->smile[i] - t->frown[i];
            const double base = kSkin - 0.5 * (t->smile[i] + t->frown[i]);
            ro.weights[2][i] = -diff / mouth_den;
            ro.bias[2] += (2.0 * base - 1.0) * diff / mouth_den;
        }
        if (m.eye[i]) {
            // eyewear = <base - I, base - bar> / |base - bar|^2
            const double dir = t->eye_base[i] - kBar;
            ro.weights[3][i] = -0.5 * dir / eye_den;
            ro.bias[3] += (t->eye_base[i] - 0.5) * dir / eye_den;
        }
    }
    return t;
}

const Templates& templates(int resolution) {
    check_resolution(resolution);
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<Templates>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[resolution];
    if (!slot) slot = build_templates(resolution);
    return *slot;
}

// Zero-mean texture over the texture mask; identical for identical seeds.
std::vector<double> nuisance_texture(const RegionMasks& masks, std::uint64_t seed) {
    std::vector<double> tex(masks.texture.size(), 0.0);
    std::mt19937_64 rng(seed);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < tex.size(); ++i) {
        if (!masks.texture[i]) continue;
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        tex[i] = 2.0 * unit - 1.0;
        sum += tex[i];
        ++count;
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    for (std::size_t i = 0; i < tex.size(); ++i)
        if (masks.texture[i]) tex[i] = kTextureAmplitude * (tex[i] - mean);
    return tex;
}

}  // namespace

void check_resolution(int resolution) {
    require(std::find(kSupportedResolutions.begin(), kSupportedResolutions.end(), resolution) !=
                kSupportedResolutions.end(),
            ErrorCode::Config, "unsupported resolution " + std::to_string(resolution) + " (expected 16 or 32)");
}

const RegionMasks& region_masks(int resolution) { return templates(resolution).masks; }

const std::vector<std::uint8_t>& attribute_mask(const RegionMasks& masks, Attribute a) {
    switch (a) {
        case Attribute::FaceSize: return masks.face;
        case Attribute::HairShade: return masks.hair;
        case Attribute::MouthCurve: return masks.mouth;
        case Attribute::Eyewear: return masks.eye;
    }
    return masks.face;
}

torch::Tensor render_attributes(const torch::Tensor& attrs, int resolution, std::uint64_t nuisance_seed) {
    require(attrs.dim() == 2 && attrs.size(1) == 4, ErrorCode::Shape, "attribute tensor must be [B, 4]");
    const auto& t = templates(resolution);
    const auto dtype = attrs.scalar_type();
    const int64_t batch = attrs.size(0);
    auto column = [&](int k) { return attrs.select(1, k).view({batch, 1, 1}); };
    auto s = column(0), hair = column(1), mouth = column(2), eyewear = column(3);
    auto cast = [&](const torch::Tensor& x) { return x.to(dtype); };

    auto texture = cast(as_tensor(nuisance_texture(t.masks, nuisance_seed), resolution));
    auto coverage = (1.0 - s) * cast(t.small_t) + s * cast(t.large_t);
    auto face = kBackground + (kSkin - kBackground) * coverage + texture;
    auto eye = (1.0 - eyewear) * cast(t.eye_t) + eyewear * kBar;
    auto mouth_img = kSkin - (0.5 * (1.0 + mouth) * cast(t.smile_t) + 0.5 * (1.0 - mouth) * cast(t.frown_t));
    auto intensity = cast(t.hair_m) * hair + cast(t.eye_m) * eye + cast(t.mouth_m) * mouth_img +
                     cast(t.face_m) * face;
    return (2.0 * intensity - 1.0).unsqueeze(1);
}

ImageTensor render_sample(const AttributeConfig& attrs, int resolution) {
    check_resolution(resolution);
    torch::NoGradGuard no_grad;
    const auto& v = attrs.values();
    auto a = torch::tensor({v[0], v[1], v[2], v[3]}, torch::kFloat64).view({1, 4});
    auto img = render_attributes(a, resolution, attrs.nuisance_seed()).contiguous();
    const double* src = img.data_ptr<double>();
    std::vector<float> data(static_cast<std::size_t>(resolution) * resolution);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<float>(std::clamp(src[i], -1.0, 1.0));
    return ImageTensor(resolution, resolution, std::move(data));
}

AttributeEstimate measure_attributes(const ImageTensor& image) {
    require(image.height() == image.width(), ErrorCode::Shape, "attribute oracle expects a square image");
    const int resolution = image.height();
    require(std::find(kSupportedResolutions.begin(), kSupportedResolutions.end(), resolution) !=
                kSupportedResolutions.end(),
            ErrorCode::Shape, "attribute oracle does not support resolution " + std::to_string(resolution));
    const auto& t = templates(resolution);
    const auto& m = t.masks;
    auto px = image.data();

    double cheek_sum = 0, cheek_n = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!m.cheek[i]) continue;
        cheek_sum += (static_cast<double>(px[i]) + 1.0) / 2.0;
        cheek_n += 1;
    }

    AttributeEstimate est;
    if (std::abs(cheek_sum / cheek_n - kSkin) > kConfidenceTolerance) {
        est.low_confidence = true;
        for (auto a : kAllAttributes) est.values[static_cast<std::size_t>(a)] = attribute_range(a).lo;
        return est;
    }
    for (auto a : kAllAttributes) {
        const auto r = attribute_range(a);
        est.values[static_cast<std::size_t>(a)] = std::clamp(t.readout.apply(a, px), r.lo, r.hi);
    }
    return est;
}

double AttributeReadout::apply(Attribute a, std::span<const float> pixels) const {
    const auto& w = weights[static_cast<std::size_t>(a)];
    require(pixels.size() == w.size(), ErrorCode::Shape, "readout applied to an image of the wrong size");
    double acc = bias[static_cast<std::size_t>(a)];
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * static_cast<double>(pixels[i]);
    return acc;
}

const AttributeReadout& attribute_readout(int resolution) { return templates(resolution).readout; }

}  // namespace crg
