#include "metrics/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "common/error.hpp"

namespace crg {

std::string HashCode::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

HashCode HashCode::from_hex(const std::string& text) {
    require(text.size() == 16 && std::all_of(text.begin(), text.end(), [](char c) { return std::isxdigit(c); }),
            ErrorCode::InvalidArgument, "hash code must be 16 hex digits");
    return HashCode{std::stoull(text, nullptr, 16)};
}

int hamming_distance(HashCode a, HashCode b) { return std::popcount(a.bits ^ b.bits); }

double hash_similarity(HashCode a, HashCode b) { return 1.0 - hamming_distance(a, b) / 64.0; }

namespace {

// Row i holds the fractional coverage of input cells by output cell i,
// normalized to sum to one.
std::vector<double> area_weights(int in, int out) {
    std::vector<double> w(static_cast<std::size_t>(out) * in, 0.0);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (int i = static_cast<int>(std::floor(lo)); i < in && i < hi; ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0) w[static_cast<std::size_t>(o) * in + i] = overlap / scale;
        }
    }
    return w;
}

std::vector<double> median_threshold_bits(const std::vector<double>& values, double median) {
    std::vector<double> bits(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) bits[i] = values[i] > median ? 1.0 : 0.0;
    return bits;
}

HashCode pack(const std::vector<double>& bits) {
    HashCode code;
    for (int i = 0; i < 64; ++i)
        if (bits[static_cast<std::size_t>(i)] != 0.0) code.set(i / 8, i % 8);
    return code;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<double> area_resize(const ImageTensor& image, int out_h, int out_w) {
    const int h = image.height(), w = image.width();
    const auto wr = area_weights(h, out_h);
    const auto wc = area_weights(w, out_w);
    std::vector<double> rows(static_cast<std::size_t>(out_h) * w, 0.0);
    for (int o = 0; o < out_h; ++o)
        for (int i = 0; i < h; ++i) {
            const double a = wr[static_cast<std::size_t>(o) * h + i];
            if (a == 0.0) continue;
            for (int c = 0; c < w; ++c)
                rows[static_cast<std::size_t>(o) * w + c] += a * (image.at(i, c) + 1.0) / 2.0;
        }
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w, 0.0);
    for (int r = 0; r < out_h; ++r)
        for (int o = 0; o < out_w; ++o) {
            double s = 0.0;
            for (int c = 0; c < w; ++c) s += wc[static_cast<std::size_t>(o) * w + c] * rows[static_cast<std::size_t>(r) * w + c];
            out[static_cast<std::size_t>(r) * out_w + o] = s;
        }
    return out;
}

double quantize_coefficient(double value) {
    constexpr double scale = 1073741824.0;
    return std::nearbyint(value * scale) / scale;
}

HashCode dhash(const ImageTensor& image) {
    require(image.width() >= 9 && image.height() >= 8, ErrorCode::Shape, "dhash needs an image of at least 9x8");
    auto p = area_resize(image, 8, 9);
    for (auto& v : p) v = quantize_coefficient(v);
    HashCode code;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (p[static_cast<std::size_t>(r) * 9 + c] < p[static_cast<std::size_t>(r) * 9 + c + 1]) code.set(r, c);
    return code;
}

HashCode phash(const ImageTensor& image) {
    require(image.width() >= 32 && image.height() >= 32, ErrorCode::Shape, "phash needs an image of at least 32x32");
    constexpr int n = 32, k = 8;
    const auto g = area_resize(image, n, n);
    std::vector<double> m(static_cast<std::size_t>(k) * n);
    for (int u = 0; u < k; ++u)
        for (int x = 0; x < n; ++x)
            m[static_cast<std::size_t>(u) * n + x] =
                std::sqrt((u == 0 ? 1.0 : 2.0) / n) * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * n));
    // coefficients = M G M^T restricted to the low-frequency 8x8 block
    std::vector<double> mg(static_cast<std::size_t>(k) * n, 0.0);
    for (int u = 0; u < k; ++u)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                mg[static_cast<std::size_t>(u) * n + x] += m[static_cast<std::size_t>(u) * n + y] * g[static_cast<std::size_t>(y) * n + x];
    std::vector<double> coeffs(64, 0.0);
    for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
            double s = 0.0;
            for (int x = 0; x < n; ++x) s += mg[static_cast<std::size_t>(u) * n + x] * m[static_cast<std::size_t>(v) * n + x];
            coeffs[static_cast<std::size_t>(u) * k + v] = quantize_coefficient(s);
        }
    const double median = median_of(std::vector<double>(coeffs.begin() + 1, coeffs.end()));
    return pack(median_threshold_bits(coeffs, median));
}

HashCode whash(const ImageTensor& image) {
    require(image.width() >= 8 && image.height() >= 8, ErrorCode::Shape, "whash needs an image of at least 8x8");
    auto a = area_resize(image, 32, 32);
    for (int size = 32; size > 8; size /= 2) {
        const int half = size / 2;
        std::vector<double> next(static_cast<std::size_t>(half) * half);
        for (int r = 0; r < half; ++r)
            for (int c = 0; c < half; ++c) {
                const auto at = [&](int y, int x) { return a[static_cast<std::size_t>(y) * size + x]; };
                next[static_cast<std::size_t>(r) * half + c] =
                    (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1)) / 2.0;
            }
        a = std::move(next);
    }
    for (auto& v : a) v = quantize_coefficient(v);
    return pack(median_threshold_bits(a, median_of(a)));
}

namespace {

void require_same_shape(const ImageTensor& x, const ImageTensor& y) {
    require(x.height() == y.height() && x.width() == y.width(), ErrorCode::Shape, "images differ in shape");
}

}  // namespace

double pixel_mae(const ImageTensor& x, const ImageTensor& y) {
    require_same_shape(x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(static_cast<double>(x.data()[i]) - y.data()[i]);
    return x.size() ? s / static_cast<double>(x.size()) : 0.0;
}

double pixel_mse(const ImageTensor& x, const ImageTensor& y) {
    require_same_shape(x, y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x.data()[i]) - y.data()[i];
        s += d * d;
    }
    return x.size() ? s / static_cast<double>(x.size()) : 0.0;
}

nlohmann::json MetricsRow::to_json() const {
    return {{"name", name}, {"dhash", dhash}, {"phash", phash}, {"whash", whash},
            {"mae", mae},   {"mse", mse},     {"count", count}};
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j = {{"dataset_digest", dataset_digest}, {"domain", domain}, {"rows", nlohmann::json::array()}};
    for (const auto& r : rows) j["rows"].push_back(r.to_json());
    return j;
}

std::string MetricsReport::to_text() const {
    std::size_t width = 5;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    std::ostringstream out;
    out << "dataset " << dataset_digest << "  (MAE/MSE in the " << domain << " domain)\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-*s %8s %8s %8s %10s %10s %7s\n", static_cast<int>(width), "model", "dhash",
                  "phash", "whash", "MAE", "MSE", "count");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-*s %8.4f %8.4f %8.4f %10.6f %10.6f %7zu\n", static_cast<int>(width),
                      r.name.c_str(), r.dhash, r.phash, r.whash, r.mae, r.mse, r.count);
        out << line;
    }
    return out.str();
}

MetricsRow compare_images(const std::string& name, std::span<const ImageTensor> originals,
                          std::span<const ImageTensor> reconstructions) {
    require(originals.size() == reconstructions.size(), ErrorCode::Shape, "image set sizes differ");
    require(!originals.empty(), ErrorCode::InvalidArgument, "no images to evaluate");
    MetricsRow row;
    row.name = name;
    row.count = originals.size();
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const auto& x = originals[i];
        const auto& y = reconstructions[i];
        row.dhash += hash_similarity(dhash(x), dhash(y));
        row.phash += hash_similarity(phash(x), phash(y));
        row.whash += hash_similarity(whash(x), whash(y));
        row.mae += pixel_mae(x, y);
        row.mse += pixel_mse(x, y);
    }
    const double n = static_cast<double>(row.count);
    row.dhash /= n;
    row.phash /= n;
    row.whash /= n;
    row.mae /= n;
    row.mse /= n;
    return row;
}

std::vector<ImageTensor> reconstruct(const EncoderModel& encoder, const Generator& generator,
                                     std::span<const ImageTensor> images) {
    require(encoder.latent_dim() == generator.latent_dim(), ErrorCode::Config,
            "encoder and generator latent dimensions differ");
    for (const auto& img : images)
        require(img.height() == generator.resolution() && img.width() == generator.resolution(), ErrorCode::Shape,
                "image resolution does not match the model resolution " + std::to_string(generator.resolution()));
    std::vector<ImageTensor> out;
    out.reserve(images.size());
    constexpr std::size_t chunk = 256;
    for (std::size_t i = 0; i < images.size(); i += chunk) {
        const auto part = images.subspan(i, std::min(chunk, images.size() - i));
        const auto zs = encoder_forward(encoder, part);
        auto xs = generator_forward(generator, zs);
        for (auto& x : xs) out.push_back(std::move(x));
    }
    return out;
}

MetricsRow evaluate_reconstructions(const std::string& name, const EncoderModel& encoder,
                                    const Generator& generator, std::span<const ImageTensor> images) {
    const auto recon = reconstruct(encoder, generator, images);
    return compare_images(name, images, recon);
}

ImageTensor mean_image(std::span<const ImageTensor> images) {
    require(!images.empty(), ErrorCode::InvalidArgument, "no images to average");
    const int h = images[0].height(), w = images[0].width();
    std::vector<double> acc(images[0].size(), 0.0);
    for (const auto& img : images) {
        require(img.height() == h && img.width() == w, ErrorCode::Shape, "images differ in shape");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += img.data()[i];
    }
    std::vector<float> data(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) data[i] = static_cast<float>(acc[i] / images.size());
    return ImageTensor(h, w, std::move(data));
}

MetricsRow evaluate_mean_baseline(std::span<const ImageTensor> images) {
    const auto mean = mean_image(images);
    std::vector<ImageTensor> recon(images.size(), mean);
    return compare_images("mean-image", images, recon);
}

}  // namespace crg
