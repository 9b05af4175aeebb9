#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common/image.hpp"
#include "json.hpp"
#include "models/networks.hpp"

namespace crg {

// 64-bit code from an 8x8 decision grid; grid position (r, c) is bit
// 63 - (8r + c), so (0, 0) is the most significant bit.
struct HashCode {
    std::uint64_t bits = 0;

    bool bit(int row, int col) const { return (bits >> (63 - (row * 8 + col))) & 1U; }
    void set(int row, int col) { bits |= std::uint64_t{1} << (63 - (row * 8 + col)); }

    std::string hex() const;
    // Throws Error(InvalidArgument) unless text is exactly 16 hex digits.
    static HashCode from_hex(const std::string& text);

    bool operator==(const HashCode&) const = default;
};

int hamming_distance(HashCode a, HashCode b);
double hash_similarity(HashCode a, HashCode b);

// Grayscale in [0, 1] resized by area averaging to out_h x out_w, row-major.
std::vector<double> area_resize(const ImageTensor& image, int out_h, int out_w);

// Rounds to the 2^-30 grid so that values equal up to rounding compare equal.
double quantize_coefficient(double value);

HashCode dhash(const ImageTensor& image);
HashCode phash(const ImageTensor& image);
HashCode whash(const ImageTensor& image);

double pixel_mae(const ImageTensor& x, const ImageTensor& y);
double pixel_mse(const ImageTensor& x, const ImageTensor& y);

struct MetricsRow {
    std::string name;
    double dhash = 0.0;
    double phash = 0.0;
    double whash = 0.0;
    double mae = 0.0;
    double mse = 0.0;
    std::size_t count = 0;
    nlohmann::json to_json() const;
};

struct MetricsReport {
    std::string dataset_digest;
    std::string domain = "[-1,1]";
    std::vector<MetricsRow> rows;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Mean similarities and errors between originals[i] and reconstructions[i].
MetricsRow compare_images(const std::string& name, std::span<const ImageTensor> originals,
                          std::span<const ImageTensor> reconstructions);

std::vector<ImageTensor> reconstruct(const EncoderModel& encoder, const Generator& generator,
                                     std::span<const ImageTensor> images);

// Row for g(e(x)) over images. Errors: Shape on a resolution mismatch.
MetricsRow evaluate_reconstructions(const std::string& name, const EncoderModel& encoder,
                                    const Generator& generator, std::span<const ImageTensor> images);

ImageTensor mean_image(std::span<const ImageTensor> images);
// Every image reconstructed as the pixelwise mean of the set.
MetricsRow evaluate_mean_baseline(std::span<const ImageTensor> images);

}  // namespace crg
