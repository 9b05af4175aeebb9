#pragma once

#include <torch/torch.h>

namespace crg {

struct SpectralNormResult {
    torch::Tensor weight;  // weight / sigma, differentiable w.r.t. the input weight
    torch::Tensor u;       // updated left singular vector estimate
    double sigma = 0.0;
};

// Power-iteration spectral normalization of weight viewed as
// [out, in * kh * kw]. u is the carried left-vector state of size out; it is
// not modified. Throws Error(Degenerate) for an all-zero weight.
SpectralNormResult spectral_normalize(const torch::Tensor& weight, const torch::Tensor& u, int iterations);

// Unit vector of size rows drawn from gen, refined by warmup iterations.
torch::Tensor spectral_norm_init_state(const torch::Tensor& weight, int warmup_iterations);

}  // namespace crg
