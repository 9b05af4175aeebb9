#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common/image.hpp"
#include "json.hpp"

namespace crg {

using LatentVector = std::vector<double>;
using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

enum class Mode { Train, Inference };

enum class ModelKind { Generator, Encoder, Discriminator };
const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

// Architecture descriptor stored in checkpoints.
//   generator families:     "conv", "dense", "oracle"
//   encoder families:       "conv", "dense", "affine"
//   discriminator families: "conv"
struct Architecture {
    std::string family = "conv";
    int latent_dim = 32;
    int resolution = 32;
    std::vector<int64_t> channels;  // empty selects the family default
    int64_t hidden = 64;            // dense families
    double dropout = 0.0;           // conv encoder spatial dropout rate
    std::string dtype = "float32";

    torch::Dtype torch_dtype() const;
    nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
    bool operator==(const Architecture&) const = default;
};

Architecture default_generator_architecture(int latent_dim = 32, int resolution = 32);
Architecture default_encoder_architecture(int latent_dim = 32, int resolution = 32, double dropout = 0.5);
Architecture default_discriminator_architecture(int resolution = 32);

// Differentiable map from latents [B, D] to images [B, 1, H, W] in [-1, 1].
class Generator {
public:
    virtual ~Generator() = default;
    virtual int latent_dim() const = 0;
    virtual int resolution() const = 0;
    virtual torch::Dtype dtype() const = 0;
    // Inference-mode forward; gradients flow to z and to any parameter that
    // requires grad.
    virtual torch::Tensor forward(const torch::Tensor& z) const = 0;
};

struct GeneratorNet : torch::nn::Module {
    virtual torch::Tensor forward(const torch::Tensor& z, Mode mode) = 0;
};

struct EncoderNet : torch::nn::Module {
    virtual torch::Tensor forward(const torch::Tensor& x, Mode mode) = 0;
};

struct DiscriminatorOutput {
    torch::Tensor logits;    // [B]
    torch::Tensor features;  // [B, F] feature tap for the Frechet proxy
};

struct DiscriminatorNet : torch::nn::Module {
    virtual DiscriminatorOutput forward(const torch::Tensor& x, Mode mode) = 0;
};

// Shared plumbing of the three model kinds: architecture, parameters and
// buffers in a stable (sorted-by-name) order.
template <typename Net>
class ModelBase {
public:
    const Architecture& architecture() const noexcept { return arch_; }
    Net& net() const { return *net_; }
    std::shared_ptr<Net> net_ptr() const { return net_; }

    // Parameters followed by buffers, each sorted by name.
    NamedTensors named_tensors() const;
    // Replaces every tensor's values; names and shapes must match exactly.
    void load_tensors(const NamedTensors& tensors);
    std::string digest() const;
    std::int64_t parameter_count() const;
    std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
    void set_requires_grad(bool flag) const;

protected:
    ModelBase(Architecture arch, std::shared_ptr<Net> net) : arch_(std::move(arch)), net_(std::move(net)) {}
    Architecture arch_;
    std::shared_ptr<Net> net_;
};

class GeneratorModel final : public ModelBase<GeneratorNet>, public Generator {
public:
    // Builds the network for arch with weights drawn under init_seed.
    explicit GeneratorModel(const Architecture& arch, std::uint64_t init_seed = 0);
    static GeneratorModel oracle(int latent_dim, int resolution, const std::string& dtype = "float32");

    GeneratorModel clone() const;

    int latent_dim() const override { return arch_.latent_dim; }
    int resolution() const override { return arch_.resolution; }
    torch::Dtype dtype() const override { return arch_.torch_dtype(); }
    torch::Tensor forward(const torch::Tensor& z) const override { return forward(z, Mode::Inference); }
    torch::Tensor forward(const torch::Tensor& z, Mode mode) const;

private:
    GeneratorModel(Architecture arch, std::shared_ptr<GeneratorNet> net)
        : ModelBase(std::move(arch), std::move(net)) {}
};

class EncoderModel final : public ModelBase<EncoderNet> {
public:
    explicit EncoderModel(const Architecture& arch, std::uint64_t init_seed = 0);
    EncoderModel clone() const;

    int latent_dim() const { return arch_.latent_dim; }
    int resolution() const { return arch_.resolution; }
    torch::Dtype dtype() const { return arch_.torch_dtype(); }
    torch::Tensor forward(const torch::Tensor& x, Mode mode = Mode::Inference) const;

private:
    EncoderModel(Architecture arch, std::shared_ptr<EncoderNet> net) : ModelBase(std::move(arch), std::move(net)) {}
};

class DiscriminatorModel final : public ModelBase<DiscriminatorNet> {
public:
    explicit DiscriminatorModel(const Architecture& arch, std::uint64_t init_seed = 0);
    DiscriminatorModel clone() const;

    int resolution() const { return arch_.resolution; }
    DiscriminatorOutput forward(const torch::Tensor& x, Mode mode = Mode::Inference) const;
    // Spectrally normalized weights (as used in forward) by layer name.
    NamedTensors normalized_weights() const;

private:
    DiscriminatorModel(Architecture arch, std::shared_ptr<DiscriminatorNet> net)
        : ModelBase(std::move(arch), std::move(net)) {}
};

// Normalized weights of every spectrally normalized layer of a generator.
NamedTensors normalized_weights(const GeneratorModel& model);

// Batch inference entry points; inputs are validated (dimension, finiteness,
// resolution, non-empty batch). Safe to call concurrently on a shared model.
std::vector<ImageTensor> generator_forward(const Generator& model, std::span<const LatentVector> zs);
std::vector<LatentVector> encoder_forward(const EncoderModel& model, std::span<const ImageTensor> images);

// Oracle squashing of the first four latent components onto the attribute
// ranges: attr = mid + half * tanh(z / 2). The inverse is 2 * atanh.
torch::Tensor oracle_squash(const torch::Tensor& z);

}  // namespace crg
