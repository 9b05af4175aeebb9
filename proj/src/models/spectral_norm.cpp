#include "models/spectral_norm.hpp"

#include "common/error.hpp"

namespace crg {
namespace {

torch::Tensor normalized(const torch::Tensor& v) {
    return v / v.norm().clamp_min(1e-12);
}

}  // namespace

SpectralNormResult spectral_normalize(const torch::Tensor& weight, const torch::Tensor& u, int iterations) {
    require(weight.dim() >= 2, ErrorCode::Shape, "spectral normalization needs a matrix or conv kernel");
    require(iterations >= 0, ErrorCode::InvalidArgument, "power iteration count must be non-negative");
    auto mat = weight.reshape({weight.size(0), -1});
    require(u.dim() == 1 && u.size(0) == mat.size(0), ErrorCode::Shape,
            "power-iteration state does not match the weight's row count");

    torch::Tensor left, right;
    {
        torch::NoGradGuard no_grad;
        auto w = mat.detach();
        require(w.abs().max().item<double>() > 0.0, ErrorCode::Degenerate,
                "cannot spectrally normalize an all-zero weight");
        left = u.detach().to(w.scalar_type()).clone();
        right = normalized(torch::mv(w.t(), left));
        for (int i = 0; i < iterations; ++i) {
            right = normalized(torch::mv(w.t(), left));
            left = normalized(torch::mv(w, right));
        }
    }
    auto sigma = torch::dot(left, torch::mv(mat, right));
    SpectralNormResult out;
    out.weight = weight / sigma;
    out.u = left;
    out.sigma = sigma.item<double>();
    return out;
}

torch::Tensor spectral_norm_init_state(const torch::Tensor& weight, int warmup_iterations) {
    torch::NoGradGuard no_grad;
    auto u = normalized(torch::randn({weight.size(0)}, weight.options()));
    if (warmup_iterations > 0) u = spectral_normalize(weight, u, warmup_iterations).u;
    return u;
}

}  // namespace crg
