#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "common/image.hpp"
#include "synthdata/attributes.hpp"

namespace crg {

inline constexpr std::array<int, 2> kSupportedResolutions = {16, 32};

// Throws Error(Config) for resolutions the renderer has no masks for.
void check_resolution(int resolution);

// Fixed per-resolution region masks, row-major, 1 inside the region.
// hair/eye/mouth/face partition the image; cheek and texture are subsets of
// face used by the confidence check and the nuisance texture respectively.
struct RegionMasks {
    int resolution = 0;
    std::vector<std::uint8_t> hair;
    std::vector<std::uint8_t> eye;
    std::vector<std::uint8_t> mouth;
    std::vector<std::uint8_t> face;
    std::vector<std::uint8_t> cheek;
    std::vector<std::uint8_t> texture;
};

const RegionMasks& region_masks(int resolution);
// Region whose pixels depend on the given attribute.
const std::vector<std::uint8_t>& attribute_mask(const RegionMasks& masks, Attribute a);

// Differentiable renderer. attrs is [B, 4] with columns (face_size,
// hair_shade, mouth_curve, eyewear); the output is [B, 1, R, R] in [-1, 1]
// with the dtype of attrs. Attribute values are not range-checked here.
torch::Tensor render_attributes(const torch::Tensor& attrs, int resolution,
                                std::uint64_t nuisance_seed);

ImageTensor render_sample(const AttributeConfig& attrs, int resolution);

// Affine readout that recovers every attribute exactly from a rendered image
// in the model domain: attr_k = sum_i weights[k][i] * x_i + bias[k].
struct AttributeReadout {
    int resolution = 0;
    std::array<std::vector<double>, 4> weights;
    std::array<double, 4> bias{};

    double apply(Attribute a, std::span<const float> pixels) const;
};

const AttributeReadout& attribute_readout(int resolution);

struct AttributeEstimate {
    std::array<double, 4> values{};
    // Set when the skin reference patch does not look like a rendered face;
    // every estimate then reports its range minimum.
    bool low_confidence = false;

    double get(Attribute a) const { return values[static_cast<std::size_t>(a)]; }
};

// Region-statistic oracle: the clamped affine readout plus a confidence
// check on the skin reference patch. Throws Error(Shape) for unsupported
// resolutions.
AttributeEstimate measure_attributes(const ImageTensor& image);

}  // namespace crg
