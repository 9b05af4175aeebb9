#include "inversion/linear_generator.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "common/error.hpp"
#include "common/tensor_util.hpp"

namespace crg {

LinearGenerator::LinearGenerator(torch::Tensor matrix) : matrix_(matrix.to(torch::kFloat64).contiguous()) {
    require(matrix_.dim() == 2 && matrix_.size(0) == matrix_.size(1), ErrorCode::Shape, "matrix must be square");
    side_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(matrix_.size(0)))));
    require(static_cast<int64_t>(side_) * side_ == matrix_.size(0), ErrorCode::Shape,
            "matrix size must be a square number of pixels");
}

LinearGenerator LinearGenerator::well_conditioned(int side, double condition, std::uint64_t seed) {
    require(side >= 1 && condition >= 1.0, ErrorCode::Config, "side must be >= 1 and condition >= 1");
    const int64_t n = static_cast<int64_t>(side) * side;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto q1 = std::get<0>(torch::linalg_qr(torch::randn({n, n}, gen, opts)));
    auto q2 = std::get<0>(torch::linalg_qr(torch::randn({n, n}, gen, opts)));
    auto s = n > 1 ? torch::linspace(1.0 / condition, 1.0, n, opts) : torch::ones({1}, opts);
    return LinearGenerator(q1.matmul(torch::diag(s)).matmul(q2.t()));
}

torch::Tensor LinearGenerator::forward(const torch::Tensor& z) const {
    require(z.dim() == 2 && z.size(1) == matrix_.size(1), ErrorCode::Shape, "latent batch must be [B, D]");
    return z.to(torch::kFloat64).matmul(matrix_.t()).reshape({z.size(0), 1, side_, side_});
}

LatentVector LinearGenerator::solve(const ImageTensor& x) const {
    require(x.height() == side_ && x.width() == side_, ErrorCode::Shape, "image does not match the generator");
    std::vector<ImageTensor> xs = {x};
    auto b = images_to_tensor(xs, torch::kFloat64).reshape({-1, 1});
    auto z = torch::linalg_solve(matrix_, b).reshape({1, -1});
    return tensor_to_latents(z)[0];
}

double LinearGenerator::condition_number() const {
    auto s = torch::linalg_svdvals(matrix_);
    return (s.max() / s.min()).item<double>();
}

}  // namespace crg
