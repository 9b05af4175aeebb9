#pragma once

#include <cstdint>

#include "models/networks.hpp"

namespace crg {

// g(z) = A z reshaped to a side x side image, float64, without output
// clamping. A reference generator with an analytic inverse.
class LinearGenerator final : public Generator {
public:
    // A is [side*side, side*side].
    explicit LinearGenerator(torch::Tensor matrix);
    // Random orthogonal factors around singular values spread evenly over
    // [1, condition], scaled so the largest is 1.
    static LinearGenerator well_conditioned(int side, double condition, std::uint64_t seed);

    int latent_dim() const override { return static_cast<int>(matrix_.size(1)); }
    int resolution() const override { return side_; }
    torch::Dtype dtype() const override { return torch::kFloat64; }
    torch::Tensor forward(const torch::Tensor& z) const override;

    const torch::Tensor& matrix() const { return matrix_; }
    // A^-1 x for a single image.
    LatentVector solve(const ImageTensor& x) const;
    double condition_number() const;

private:
    torch::Tensor matrix_;
    int side_ = 0;
};

}  // namespace crg
