#include "common/tensor_util.hpp"

#include <cmath>

#include "common/digest.hpp"
#include "common/error.hpp"

namespace crg {

torch::Tensor images_to_tensor(std::span<const ImageTensor> images, torch::Dtype dtype) {
    require(!images.empty(), ErrorCode::InvalidArgument, "empty image batch");
    const int h = images.front().height();
    const int w = images.front().width();
    auto out = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
    float* dst = out.data_ptr<float>();
    for (const auto& img : images) {
        require(img.height() == h && img.width() == w, ErrorCode::Shape,
                "images in a batch must share one resolution");
        auto src = img.data();
        std::copy(src.begin(), src.end(), dst);
        dst += src.size();
    }
    return out.to(dtype);
}

ImageTensor tensor_to_image(const torch::Tensor& single) {
    auto t = single.detach().to(torch::kFloat32).contiguous();
    require(t.dim() >= 2, ErrorCode::Shape, "image tensor needs at least two dimensions");
    const auto h = t.size(-2);
    const auto w = t.size(-1);
    require(t.numel() == h * w, ErrorCode::Shape, "expected a single-channel image tensor");
    std::vector<float> data(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    return ImageTensor(static_cast<int>(h), static_cast<int>(w), std::move(data));
}

std::vector<ImageTensor> tensor_to_images(const torch::Tensor& batch) {
    require(batch.dim() == 4 && batch.size(1) == 1, ErrorCode::Shape, "expected a [B, 1, H, W] tensor");
    std::vector<ImageTensor> out;
    out.reserve(static_cast<std::size_t>(batch.size(0)));
    for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(tensor_to_image(batch[i]));
    return out;
}

torch::Tensor latents_to_tensor(std::span<const std::vector<double>> latents, torch::Dtype dtype) {
    require(!latents.empty(), ErrorCode::InvalidArgument, "empty latent batch");
    const auto d = latents.front().size();
    auto out = torch::empty({static_cast<int64_t>(latents.size()), static_cast<int64_t>(d)}, torch::kFloat64);
    double* dst = out.data_ptr<double>();
    for (const auto& z : latents) {
        require(z.size() == d, ErrorCode::Shape, "latent vectors in a batch must share one dimension");
        for (double v : z) require(std::isfinite(v), ErrorCode::InvalidArgument, "latent vector has a non-finite component");
        dst = std::copy(z.begin(), z.end(), dst);
    }
    return out.to(dtype);
}

std::vector<std::vector<double>> tensor_to_latents(const torch::Tensor& batch) {
    auto t = batch.detach().to(torch::kFloat64).contiguous();
    require(t.dim() == 2, ErrorCode::Shape, "expected a [B, D] latent tensor");
    std::vector<std::vector<double>> out(static_cast<std::size_t>(t.size(0)));
    const double* src = t.data_ptr<double>();
    for (auto& z : out) {
        z.assign(src, src + t.size(1));
        src += t.size(1);
    }
    return out;
}

std::string tensors_digest(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
    Sha256 hasher;
    for (const auto& [name, tensor] : named) {
        auto t = tensor.detach().contiguous();
        hasher.update(name);
        hasher.update(std::string(c10::toString(t.scalar_type())));
        for (auto s : t.sizes()) hasher.update(&s, sizeof(s));
        hasher.update(t.data_ptr(), static_cast<std::size_t>(t.numel()) * t.element_size());
    }
    return hasher.hex();
}

}  // namespace crg
