#pragma once

#include <torch/torch.h>

#include <span>
#include <vector>

#include "common/image.hpp"

namespace crg {

// [B, 1, H, W] float tensor from images of identical shape.
torch::Tensor images_to_tensor(std::span<const ImageTensor> images,
                               torch::Dtype dtype = torch::kFloat32);
std::vector<ImageTensor> tensor_to_images(const torch::Tensor& batch);
ImageTensor tensor_to_image(const torch::Tensor& single);

// [B, D] tensor from equally sized latent vectors.
torch::Tensor latents_to_tensor(std::span<const std::vector<double>> latents,
                                torch::Dtype dtype = torch::kFloat32);
std::vector<std::vector<double>> tensor_to_latents(const torch::Tensor& batch);

// SHA-256 over dtype, shape and raw bytes of every named tensor, in order.
std::string tensors_digest(const std::vector<std::pair<std::string, torch::Tensor>>& named);

}  // namespace crg
