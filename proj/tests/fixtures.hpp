#pragma once

#include <random>
#include <vector>

#include "models/networks.hpp"
#include "synthdata/dataset.hpp"
#include "synthdata/render.hpp"

namespace crg::test {

inline std::vector<LatentVector> random_latents(int n, int d, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<LatentVector> zs(static_cast<std::size_t>(n), LatentVector(static_cast<std::size_t>(d)));
    for (auto& z : zs)
        for (auto& c : z) c = scale * normal(rng);
    return zs;
}

// Affine encoder (D = 4) whose weights are the exact inverse of the oracle
// generator: the attribute readout followed by the inverse squash.
inline EncoderModel exact_inverse_encoder(int resolution) {
    auto arch = default_encoder_architecture(4, resolution);
    arch.family = "affine";
    arch.dtype = "float64";
    EncoderModel e(arch, 0);
    const auto& ro = attribute_readout(resolution);
    const double mid[4] = {0.5, 0.5, 0.0, 0.5}, half[4] = {0.5, 0.5, 1.0, 0.5};
    auto tensors = e.named_tensors();
    torch::NoGradGuard ng;
    for (auto& [name, t] : tensors) {
        if (name == "map.weight")
            for (int k = 0; k < 4; ++k)
                for (std::size_t i = 0; i < ro.weights[k].size(); ++i)
                    t[k][static_cast<int64_t>(i)] = ro.weights[k][i] / half[k];
        if (name == "map.bias")
            for (int k = 0; k < 4; ++k) t[k] = (ro.bias[k] - mid[k]) / half[k];
    }
    e.load_tensors(tensors);
    return e;
}

inline Dataset rendered_dataset(std::size_t n, std::uint64_t seed, int resolution) {
    Dataset ds;
    ds.manifest = plan_dataset(n, seed, resolution, SamplerSpec::defaults(), &ds.images);
    return ds;
}

}  // namespace crg::test
