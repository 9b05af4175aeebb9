#include "models/networks.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "common/digest.hpp"
#include "common/error.hpp"
#include "common/tensor_util.hpp"
#include "models/spectral_norm.hpp"
#include "synthdata/render.hpp"

namespace crg {

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Generator: return "generator";
        case ModelKind::Encoder: return "encoder";
        case ModelKind::Discriminator: return "discriminator";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "generator") return ModelKind::Generator;
    if (name == "encoder") return ModelKind::Encoder;
    if (name == "discriminator") return ModelKind::Discriminator;
    fail(ErrorCode::Kind, "unknown model kind '" + name + "'");
}

torch::Dtype Architecture::torch_dtype() const {
    if (dtype == "float32") return torch::kFloat32;
    if (dtype == "float64") return torch::kFloat64;
    fail(ErrorCode::Config, "unsupported dtype '" + dtype + "'");
}

nlohmann::json Architecture::to_json() const {
    return {{"family", family},       {"latent_dim", latent_dim}, {"resolution", resolution},
            {"channels", channels},   {"hidden", hidden},         {"dropout", dropout},
            {"dtype", dtype}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    try {
        a.family = j.at("family").get<std::string>();
        a.latent_dim = j.at("latent_dim").get<int>();
        a.resolution = j.at("resolution").get<int>();
        a.channels = j.value("channels", std::vector<int64_t>{});
        a.hidden = j.value("hidden", int64_t{64});
        a.dropout = j.value("dropout", 0.0);
        a.dtype = j.value("dtype", std::string("float32"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed architecture descriptor: ") + e.what());
    }
    return a;
}

Architecture default_generator_architecture(int latent_dim, int resolution) {
    Architecture a;
    a.family = "conv";
    a.latent_dim = latent_dim;
    a.resolution = resolution;
    return a;
}

Architecture default_encoder_architecture(int latent_dim, int resolution, double dropout) {
    Architecture a;
    a.family = "conv";
    a.latent_dim = latent_dim;
    a.resolution = resolution;
    a.dropout = dropout;
    return a;
}

Architecture default_discriminator_architecture(int resolution) {
    Architecture a;
    a.family = "conv";
    a.latent_dim = 0;
    a.resolution = resolution;
    return a;
}

namespace {

std::mutex& init_mutex() {
    static std::mutex m;
    return m;
}

torch::Tensor leaky(const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); }

// Per-pixel feature normalization across channels.
torch::Tensor pixel_norm(const torch::Tensor& x) {
    return x * torch::rsqrt(x.square().mean(1, true) + 1e-8);
}

int log2_exact(int value) {
    int k = 0;
    while ((1 << k) < value) ++k;
    return (1 << k) == value ? k : -1;
}

// Weight normalized by its largest singular value (power iteration). The
// left-vector state advances once per training-mode forward.
struct SpectralWeight : torch::nn::Module {
    torch::Tensor weight, u;

    explicit SpectralWeight(torch::Tensor init) {
        weight = register_parameter("weight", std::move(init));
        u = register_buffer("sn_u", spectral_norm_init_state(weight.detach(), 500));
    }

    torch::Tensor normalized(Mode mode) {
        if (mode == Mode::Train) {
            auto r = spectral_normalize(weight, u, 1);
            torch::NoGradGuard no_grad;
            u.copy_(r.u);
            return r.weight;
        }
        return spectral_normalize(weight, u, 0).weight;
    }
};

struct SNLinear : torch::nn::Module {
    std::shared_ptr<SpectralWeight> w;
    torch::Tensor bias;

    SNLinear(int64_t in, int64_t out) {
        auto init = torch::empty({out, in});
        torch::nn::init::xavier_uniform_(init);
        w = register_module("sn", std::make_shared<SpectralWeight>(init));
        bias = register_parameter("bias", torch::zeros({out}));
    }
    torch::Tensor forward(const torch::Tensor& x, Mode mode) { return torch::linear(x, w->normalized(mode), bias); }
};

struct SNConv : torch::nn::Module {
    std::shared_ptr<SpectralWeight> w;
    torch::Tensor bias;
    int64_t stride, padding;

    SNConv(int64_t in, int64_t out, int64_t kernel, int64_t stride_, int64_t padding_)
        : stride(stride_), padding(padding_) {
        auto init = torch::empty({out, in, kernel, kernel});
        torch::nn::init::xavier_uniform_(init);
        w = register_module("sn", std::make_shared<SpectralWeight>(init));
        bias = register_parameter("bias", torch::zeros({out}));
    }
    torch::Tensor forward(const torch::Tensor& x, Mode mode) {
        return torch::conv2d(x, w->normalized(mode), bias, stride, padding);
    }
};

void collect_spectral(const torch::nn::Module& root, NamedTensors& out) {
    for (const auto& item : root.named_modules()) {
        if (auto* sw = dynamic_cast<SpectralWeight*>(item.value().get())) {
            torch::NoGradGuard no_grad;
            out.emplace_back(item.key(), sw->normalized(Mode::Inference));
        }
    }
}

// ---------------------------------------------------------------- generators

struct ConvGenerator : GeneratorNet {
    int latent_dim, resolution;
    std::vector<int64_t> channels;
    std::shared_ptr<SNLinear> input;
    std::vector<std::shared_ptr<SNConv>> stages;
    std::shared_ptr<SNConv> output;

    explicit ConvGenerator(const Architecture& a) : latent_dim(a.latent_dim), resolution(a.resolution) {
        const int ups = log2_exact(a.resolution) - 2;
        require(ups >= 1, ErrorCode::Config, "conv generator resolution must be a power of two >= 8");
        channels = a.channels;
        if (channels.empty()) {
            channels = {64};
            for (int i = 0; i < ups; ++i) channels.push_back(std::max<int64_t>(8, channels.back() / 2));
        }
        require(static_cast<int>(channels.size()) == ups + 1, ErrorCode::Config,
                "conv generator needs one channel width per 4x4..RxR stage");
        input = register_module("input", std::make_shared<SNLinear>(latent_dim, channels[0] * 16));
        for (int i = 0; i < ups; ++i)
            stages.push_back(register_module("up" + std::to_string(i),
                                             std::make_shared<SNConv>(channels[i], channels[i + 1], 3, 1, 1)));
        output = register_module("output", std::make_shared<SNConv>(channels.back(), 1, 3, 1, 1));
    }

    torch::Tensor forward(const torch::Tensor& z, Mode mode) override {
        auto h = input->forward(z, mode).view({z.size(0), channels[0], 4, 4});
        h = pixel_norm(leaky(h));
        for (auto& stage : stages) {
            h = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
            h = pixel_norm(leaky(stage->forward(h, mode)));
        }
        return torch::tanh(output->forward(h, mode));
    }
};

struct DenseGenerator : GeneratorNet {
    int resolution;
    torch::nn::Linear hidden{nullptr}, out{nullptr};

    explicit DenseGenerator(const Architecture& a) : resolution(a.resolution) {
        hidden = register_module("hidden", torch::nn::Linear(a.latent_dim, a.hidden));
        out = register_module("out", torch::nn::Linear(a.hidden, a.resolution * a.resolution));
    }
    torch::Tensor forward(const torch::Tensor& z, Mode) override {
        auto h = torch::tanh(hidden->forward(z));
        return torch::tanh(out->forward(h)).view({z.size(0), 1, resolution, resolution});
    }
};

struct OracleGenerator : GeneratorNet {
    int resolution;
    explicit OracleGenerator(const Architecture& a) : resolution(a.resolution) {
        require(a.latent_dim >= 4, ErrorCode::Config, "oracle generator needs latent_dim >= 4");
        check_resolution(a.resolution);
    }
    torch::Tensor forward(const torch::Tensor& z, Mode) override {
        return render_attributes(oracle_squash(z.slice(1, 0, 4)), resolution, 0);
    }
};

// ------------------------------------------------------------------ encoders

struct ConvEncoder : EncoderNet {
    struct Block {
        torch::nn::Conv2d conv{nullptr};
        torch::Tensor bn_weight, bn_bias, running_mean, running_var;
        bool pool = false;
    };
    std::vector<Block> blocks;
    torch::nn::Linear head{nullptr};
    double dropout;

    explicit ConvEncoder(const Architecture& a) : dropout(a.dropout) {
        require(a.dropout >= 0.0 && a.dropout < 1.0, ErrorCode::Config, "dropout must lie in [0, 1)");
        require(log2_exact(a.resolution) >= 3, ErrorCode::Config, "conv encoder resolution must be a power of two >= 8");
        auto channels = a.channels.empty() ? std::vector<int64_t>{32, 64, 128, 128, 128} : a.channels;
        int64_t in = 1;
        int size = a.resolution;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            Block b;
            const auto name = "block" + std::to_string(i);
            b.conv = register_module(name + "_conv",
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(in, channels[i], 3).padding(1)));
            b.bn_weight = register_parameter(name + "_bn_weight", torch::ones({channels[i]}));
            b.bn_bias = register_parameter(name + "_bn_bias", torch::zeros({channels[i]}));
            b.running_mean = register_buffer(name + "_bn_mean", torch::zeros({channels[i]}));
            b.running_var = register_buffer(name + "_bn_var", torch::ones({channels[i]}));
            b.pool = i < 3 && size > 4;
            if (b.pool) size /= 2;
            blocks.push_back(b);
            in = channels[i];
        }
        head = register_module("head", torch::nn::Linear(in, a.latent_dim));
    }

    torch::Tensor forward(const torch::Tensor& x, Mode mode) override {
        const bool training = mode == Mode::Train;
        auto h = x;
        for (auto& b : blocks) {
            h = torch::relu(b.conv->forward(h));
            if (b.pool) h = torch::max_pool2d(h, 2);
            h = torch::batch_norm(h, b.bn_weight, b.bn_bias, b.running_mean, b.running_var, training, 0.1, 1e-5,
                                  false);
            if (training && dropout > 0.0) h = torch::feature_dropout(h, dropout, true);
        }
        return head->forward(std::get<0>(h.flatten(2).max(2)));
    }
};

struct DenseEncoder : EncoderNet {
    torch::nn::Linear hidden{nullptr}, out{nullptr};
    explicit DenseEncoder(const Architecture& a) {
        hidden = register_module("hidden", torch::nn::Linear(a.resolution * a.resolution, a.hidden));
        out = register_module("out", torch::nn::Linear(a.hidden, a.latent_dim));
    }
    torch::Tensor forward(const torch::Tensor& x, Mode) override {
        return out->forward(torch::tanh(hidden->forward(x.flatten(1))));
    }
};

// Affine readout followed by the inverse oracle squash; the oracle
// generator's exact inverse is representable with D = 4.
struct AffineEncoder : EncoderNet {
    torch::nn::Linear map{nullptr};
    explicit AffineEncoder(const Architecture& a) {
        map = register_module("map", torch::nn::Linear(a.resolution * a.resolution, a.latent_dim));
    }
    torch::Tensor forward(const torch::Tensor& x, Mode) override {
        const double eps = x.scalar_type() == torch::kFloat64 ? 1e-12 : 1e-6;
        auto y = map->forward(x.flatten(1)).clamp(-1.0 + eps, 1.0 - eps);
        return 2.0 * torch::atanh(y);
    }
};

// ------------------------------------------------------------ discriminators

struct ConvDiscriminator : DiscriminatorNet {
    std::vector<std::shared_ptr<SNConv>> convs;
    std::shared_ptr<SNLinear> head;

    explicit ConvDiscriminator(const Architecture& a) {
        auto channels = a.channels.empty() ? std::vector<int64_t>{32, 64, 128} : a.channels;
        int size = a.resolution;
        int64_t in = 1;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            require(size >= 2 && size % 2 == 0, ErrorCode::Config, "discriminator resolution too small for its depth");
            convs.push_back(register_module("conv" + std::to_string(i), std::make_shared<SNConv>(in, channels[i], 4, 2, 1)));
            in = channels[i];
            size /= 2;
        }
        head = register_module("head", std::make_shared<SNLinear>(in * size * size, 1));
    }

    DiscriminatorOutput forward(const torch::Tensor& x, Mode mode) override {
        auto h = x;
        for (auto& c : convs) h = leaky(c->forward(h, mode));
        DiscriminatorOutput out;
        out.features = h.mean({2, 3});
        out.logits = head->forward(h.flatten(1), mode).squeeze(1);
        return out;
    }
};

template <typename Net, typename Build>
std::shared_ptr<Net> build_seeded(const Architecture& arch, std::uint64_t seed, Build build) {
    std::lock_guard lock(init_mutex());
    auto gen = at::detail::getDefaultCPUGenerator();
    auto saved = gen.get_state();
    gen.set_current_seed(seed);
    std::shared_ptr<Net> net;
    try {
        net = build();
    } catch (...) {
        gen.set_state(saved);
        throw;
    }
    gen.set_state(saved);
    net->to(arch.torch_dtype());
    return net;
}

std::shared_ptr<GeneratorNet> make_generator_net(const Architecture& a, std::uint64_t seed) {
    require(a.latent_dim >= 1, ErrorCode::Config, "latent_dim must be positive");
    return build_seeded<GeneratorNet>(a, seed, [&]() -> std::shared_ptr<GeneratorNet> {
        if (a.family == "conv") return std::make_shared<ConvGenerator>(a);
        if (a.family == "dense") return std::make_shared<DenseGenerator>(a);
        if (a.family == "oracle") return std::make_shared<OracleGenerator>(a);
        fail(ErrorCode::Config, "unknown generator family '" + a.family + "'");
    });
}

std::shared_ptr<EncoderNet> make_encoder_net(const Architecture& a, std::uint64_t seed) {
    require(a.latent_dim >= 1, ErrorCode::Config, "latent_dim must be positive");
    return build_seeded<EncoderNet>(a, seed, [&]() -> std::shared_ptr<EncoderNet> {
        if (a.family == "conv") return std::make_shared<ConvEncoder>(a);
        if (a.family == "dense") return std::make_shared<DenseEncoder>(a);
        if (a.family == "affine") return std::make_shared<AffineEncoder>(a);
        fail(ErrorCode::Config, "unknown encoder family '" + a.family + "'");
    });
}

std::shared_ptr<DiscriminatorNet> make_discriminator_net(const Architecture& a, std::uint64_t seed) {
    return build_seeded<DiscriminatorNet>(a, seed, [&]() -> std::shared_ptr<DiscriminatorNet> {
        if (a.family == "conv") return std::make_shared<ConvDiscriminator>(a);
        fail(ErrorCode::Config, "unknown discriminator family '" + a.family + "'");
    });
}

NamedTensors sorted_items(const torch::OrderedDict<std::string, torch::Tensor>& dict) {
    NamedTensors out;
    for (const auto& item : dict) out.emplace_back(item.key(), item.value());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

void check_latents(const torch::Tensor& z, int latent_dim) {
    require(z.dim() == 2 && z.size(1) == latent_dim, ErrorCode::Shape,
            "latent batch must be [B, " + std::to_string(latent_dim) + "]");
}

void check_images(const torch::Tensor& x, int resolution) {
    require(x.dim() == 4 && x.size(1) == 1 && x.size(2) == resolution && x.size(3) == resolution, ErrorCode::Shape,
            "image batch must be [B, 1, " + std::to_string(resolution) + ", " + std::to_string(resolution) + "]");
}

}  // namespace

// ------------------------------------------------------------------ ModelBase

template <typename Net>
NamedTensors ModelBase<Net>::named_tensors() const {
    auto params = sorted_items(net_->named_parameters());
    auto buffers = sorted_items(net_->named_buffers());
    params.insert(params.end(), buffers.begin(), buffers.end());
    return params;
}

template <typename Net>
void ModelBase<Net>::load_tensors(const NamedTensors& tensors) {
    auto own = named_tensors();
    require(own.size() == tensors.size(), ErrorCode::Shape,
            "tensor count mismatch: model has " + std::to_string(own.size()) + ", source has " +
                std::to_string(tensors.size()));
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < own.size(); ++i) {
        require(own[i].first == tensors[i].first, ErrorCode::Shape,
                "tensor name mismatch: '" + own[i].first + "' vs '" + tensors[i].first + "'");
        require(own[i].second.sizes() == tensors[i].second.sizes(), ErrorCode::Shape,
                "tensor shape mismatch for '" + own[i].first + "'");
        own[i].second.copy_(tensors[i].second);
    }
}

template <typename Net>
std::string ModelBase<Net>::digest() const {
    return tensors_digest(named_tensors());
}

template <typename Net>
std::int64_t ModelBase<Net>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : net_->parameters()) n += p.numel();
    return n;
}

template <typename Net>
void ModelBase<Net>::set_requires_grad(bool flag) const {
    for (auto& p : net_->parameters()) p.set_requires_grad(flag);
}

template class ModelBase<GeneratorNet>;
template class ModelBase<EncoderNet>;
template class ModelBase<DiscriminatorNet>;

// ------------------------------------------------------------------- models

GeneratorModel::GeneratorModel(const Architecture& arch, std::uint64_t init_seed)
    : ModelBase(arch, make_generator_net(arch, init_seed)) {}

GeneratorModel GeneratorModel::oracle(int latent_dim, int resolution, const std::string& dtype) {
    Architecture a;
    a.family = "oracle";
    a.latent_dim = latent_dim;
    a.resolution = resolution;
    a.channels.clear();
    a.hidden = 0;
    a.dtype = dtype;
    return GeneratorModel(a);
}

GeneratorModel GeneratorModel::clone() const {
    GeneratorModel copy(arch_, make_generator_net(arch_, 0));
    copy.load_tensors(named_tensors());
    return copy;
}

torch::Tensor GeneratorModel::forward(const torch::Tensor& z, Mode mode) const {
    check_latents(z, arch_.latent_dim);
    return net_->forward(z.to(dtype()), mode);
}

EncoderModel::EncoderModel(const Architecture& arch, std::uint64_t init_seed)
    : ModelBase(arch, make_encoder_net(arch, init_seed)) {}

EncoderModel EncoderModel::clone() const {
    EncoderModel copy(arch_, make_encoder_net(arch_, 0));
    copy.load_tensors(named_tensors());
    return copy;
}

torch::Tensor EncoderModel::forward(const torch::Tensor& x, Mode mode) const {
    check_images(x, arch_.resolution);
    require(x.size(0) > 0, ErrorCode::InvalidArgument, "empty image batch");
    return net_->forward(x.to(dtype()), mode);
}

DiscriminatorModel::DiscriminatorModel(const Architecture& arch, std::uint64_t init_seed)
    : ModelBase(arch, make_discriminator_net(arch, init_seed)) {}

DiscriminatorModel DiscriminatorModel::clone() const {
    DiscriminatorModel copy(arch_, make_discriminator_net(arch_, 0));
    copy.load_tensors(named_tensors());
    return copy;
}

DiscriminatorOutput DiscriminatorModel::forward(const torch::Tensor& x, Mode mode) const {
    check_images(x, arch_.resolution);
    return net_->forward(x.to(arch_.torch_dtype()), mode);
}

NamedTensors DiscriminatorModel::normalized_weights() const {
    NamedTensors out;
    collect_spectral(*net_, out);
    return out;
}

NamedTensors normalized_weights(const GeneratorModel& model) {
    NamedTensors out;
    collect_spectral(model.net(), out);
    return out;
}

std::vector<ImageTensor> generator_forward(const Generator& model, std::span<const LatentVector> zs) {
    require(!zs.empty(), ErrorCode::InvalidArgument, "empty latent batch");
    for (const auto& z : zs)
        require(static_cast<int>(z.size()) == model.latent_dim(), ErrorCode::Shape,
                "latent dimension " + std::to_string(z.size()) + " does not match the generator's " +
                    std::to_string(model.latent_dim()));
    torch::NoGradGuard no_grad;
    auto batch = latents_to_tensor(zs, model.dtype());
    return tensor_to_images(model.forward(batch).clamp(-1.0, 1.0));
}

std::vector<LatentVector> encoder_forward(const EncoderModel& model, std::span<const ImageTensor> images) {
    require(!images.empty(), ErrorCode::InvalidArgument, "empty image batch");
    for (const auto& img : images)
        require(img.height() == model.resolution() && img.width() == model.resolution(), ErrorCode::Shape,
                "image resolution does not match the encoder's " + std::to_string(model.resolution()));
    torch::NoGradGuard no_grad;
    auto z = model.forward(images_to_tensor(images, model.dtype()), Mode::Inference);
    auto out = tensor_to_latents(z);
    for (const auto& v : out)
        for (double c : v) require(std::isfinite(c), ErrorCode::Numeric, "encoder produced a non-finite latent");
    return out;
}

torch::Tensor oracle_squash(const torch::Tensor& z) {
    require(z.dim() == 2 && z.size(1) == 4, ErrorCode::Shape, "oracle squash expects [B, 4]");
    auto opts = z.options();
    auto mid = torch::tensor({0.5, 0.5, 0.0, 0.5}, opts.dtype(torch::kFloat64)).to(z.scalar_type());
    auto half = torch::tensor({0.5, 0.5, 1.0, 0.5}, opts.dtype(torch::kFloat64)).to(z.scalar_type());
    return mid + half * torch::tanh(z / 2.0);
}

}  // namespace crg
