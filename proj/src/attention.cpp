#include "s2am/attention.hpp"

#include "s2am/errors.hpp"

#include <cmath>
#include <ostream>

namespace s2am::attention {

namespace F = torch::nn::functional;

void S2AMConfig::validate() const {
    if (channels < 1) {
        throw ConfigError("S2AM channels must be >= 1, got " + std::to_string(channels));
    }
    if (use_gates) {
        if (reduction < 1) {
            throw ConfigError("S2AM reduction must be >= 1");
        }
        if (channels % reduction != 0) {
            throw ConfigError("S2AM channels (" + std::to_string(channels) +
                              ") not divisible by reduction (" + std::to_string(reduction) + ")");
        }
    }
    if (gaussian_kernel < 1 || gaussian_kernel % 2 == 0) {
        throw ConfigError("gaussian kernel size must be odd and >= 1, got " +
                          std::to_string(gaussian_kernel));
    }
    if (!(gaussian_sigma > 0.0)) {
        throw ConfigError("gaussian sigma must be positive");
    }
}

MaskPair MaskPair::from_mask(torch::Tensor mask) {
    MaskPair pair;
    pair.complement = 1.0 - mask;
    pair.mask = std::move(mask);
    return pair;
}

torch::Tensor gaussian_kernel(int64_t size, double sigma, torch::Dtype dtype) {
    if (size < 1 || size % 2 == 0) {
        throw ConfigError("gaussian kernel size must be odd and >= 1");
    }
    auto coords = torch::arange(size, torch::kFloat64) - static_cast<double>(size / 2);
    auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
    auto kernel = torch::outer(g, g);
    return (kernel / kernel.sum()).to(dtype);
}

torch::Tensor area_resize(const torch::Tensor& mask, int64_t height, int64_t width) {
    if (height < 1 || width < 1) {
        throw ContractError("mask target size must be >= 1");
    }
    if (mask.size(2) == height && mask.size(3) == width) {
        return mask;
    }
    if (height <= mask.size(2) && width <= mask.size(3)) {
        return F::adaptive_avg_pool2d(mask, F::AdaptiveAvgPool2dFuncOptions({height, width}));
    }
    return F::interpolate(mask, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kNearest));
}

namespace {

torch::Tensor reflect_indices(int64_t length, int64_t pad) {
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(length + 2 * pad));
    const int64_t period = 2 * (length - 1);
    for (int64_t i = -pad; i < length + pad; ++i) {
        if (length == 1) {
            idx.push_back(0);
            continue;
        }
        int64_t j = ((i % period) + period) % period;
        if (j >= length) {
            j = period - j;
        }
        idx.push_back(j);
    }
    return torch::tensor(idx, torch::kLong);
}

} // namespace

torch::Tensor reflect_filter(const torch::Tensor& planes, const torch::Tensor& kernel) {
    const int64_t k = kernel.size(0);
    const int64_t pad = k / 2;
    const int64_t channels = planes.size(1);
    auto padded = planes.index_select(2, reflect_indices(planes.size(2), pad).to(planes.device()))
                      .index_select(3, reflect_indices(planes.size(3), pad).to(planes.device()));
    auto weight = kernel.to(planes.options()).view({1, 1, k, k}).repeat({channels, 1, 1, 1});
    return F::conv2d(padded, weight, F::Conv2dFuncOptions().groups(channels));
}

MaskPair smooth_and_resize_mask(const torch::Tensor& binary_mask, int64_t height, int64_t width,
                                const MaskSmoothing& smoothing) {
    if (binary_mask.dim() != 4 || binary_mask.size(1) != 1) {
        throw ContractError("mask must be (N,1,H,W)");
    }
    if (!torch::isfinite(binary_mask).all().item<bool>()) {
        throw DataError("mask contains non-finite values");
    }
    auto source = binary_mask.is_floating_point() ? binary_mask : binary_mask.to(torch::kFloat32);
    auto mask = area_resize(source, height, width);
    auto complement = area_resize(1.0 - source, height, width);
    if (smoothing.enabled) {
        auto kernel = gaussian_kernel(smoothing.kernel, smoothing.sigma, torch::kFloat64);
        mask = reflect_filter(mask, kernel);
        complement = reflect_filter(complement, kernel);
    }
    return {mask.clamp(0.0, 1.0), complement.clamp(0.0, 1.0)};
}

ChannelGateImpl::ChannelGateImpl(int64_t channels, int64_t reduction)
    : channels_(channels), hidden_(channels / reduction) {
    if (reduction < 1 || channels % reduction != 0 || hidden_ < 1) {
        throw ConfigError("channel gate: " + std::to_string(channels) +
                          " channels not divisible by reduction " + std::to_string(reduction));
    }
    fc1 = register_module("fc1", torch::nn::Linear(2 * channels, hidden_));
    fc2 = register_module("fc2", torch::nn::Linear(hidden_, channels));
}

torch::Tensor ChannelGateImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != channels_) {
        throw ConfigError("channel gate expects " + std::to_string(channels_) +
                          " channels, got tensor of shape " + c10::str(x.sizes()));
    }
    auto pooled = torch::cat({x.mean({2, 3}), x.amax({2, 3})}, 1);
    auto w = torch::sigmoid(fc2->forward(torch::relu(fc1->forward(pooled))));
    return w.view({x.size(0), channels_, 1, 1});
}

LearnableBlockImpl::LearnableBlockImpl(int64_t channels) : channels_(channels) {
    namespace nn = torch::nn;
    auto conv = [](int64_t in, int64_t out) {
        return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(1).padding(1).bias(false));
    };
    body = register_module(
        "body", nn::Sequential(conv(channels, 2 * channels), nn::BatchNorm2d(2 * channels), nn::ELU(),
                               conv(2 * channels, channels), nn::BatchNorm2d(channels), nn::ELU()));
}

torch::Tensor LearnableBlockImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != channels_) {
        throw ConfigError("learnable block expects " + std::to_string(channels_) + " channels");
    }
    return body->forward(x);
}

torch::Tensor channel_pool(const torch::Tensor& x) {
    return torch::cat({x.amax({1}, true), x.mean({1}, true)}, 1);
}

SpatialAttentionImpl::SpatialAttentionImpl() {
    namespace nn = torch::nn;
    const int64_t pad = kSpatialKernel / 2;
    conv1 = register_module(
        "conv1", nn::Conv2d(nn::Conv2dOptions(2, kSpatialHiddenChannels, kSpatialKernel).padding(pad)));
    conv2 = register_module(
        "conv2", nn::Conv2d(nn::Conv2dOptions(kSpatialHiddenChannels, 1, kSpatialKernel).padding(pad)));
}

MaskPair SpatialAttentionImpl::forward(const torch::Tensor& x) {
    auto logits = conv2->forward(torch::relu(conv1->forward(channel_pool(x))));
    return MaskPair::from_mask(torch::sigmoid(logits));
}

S2AMImpl::S2AMImpl(S2AMConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.use_gates) {
        gate_bg = register_module("gate_bg", ChannelGate(cfg_.channels, cfg_.reduction));
        if (cfg_.use_gmix) {
            gate_mix = register_module("gate_mix", ChannelGate(cfg_.channels, cfg_.reduction));
        }
        gate_fg = register_module("gate_fg", ChannelGate(cfg_.channels, cfg_.reduction));
    }
    if (cfg_.use_learnable) {
        learnable = register_module("learnable", LearnableBlock(cfg_.channels));
    }
    if (cfg_.variant == Variant::mask_free) {
        spatial = register_module("spatial", SpatialAttention());
    }
    init_weights(*this);
}

void S2AMImpl::check_input(const torch::Tensor& x) const {
    if (x.dim() != 4 || x.size(1) != cfg_.channels) {
        throw ContractError("S2AM expects (N," + std::to_string(cfg_.channels) +
                            ",H,W) input, got " + c10::str(x.sizes()));
    }
}

torch::Tensor S2AMImpl::compose(const torch::Tensor& x, const MaskPair& masks) {
    auto gated = [&](ChannelGate& gate) { return cfg_.use_gates ? x * gate->forward(x) : x; };

    auto inside = gated(gate_fg);
    if (cfg_.use_learnable) {
        inside = learnable->forward(inside);
    }
    if (cfg_.use_gmix) {
        inside = inside + gated(gate_mix);
    }
    return masks.mask * inside + masks.complement * gated(gate_bg);
}

torch::Tensor S2AMImpl::forward(const torch::Tensor& x, const MaskPair& masks) {
    if (cfg_.variant != Variant::masked) {
        throw ContractError("S2AM::forward requires the masked variant");
    }
    check_input(x);
    for (const auto* m : {&masks.mask, &masks.complement}) {
        if (!m->defined() || m->dim() != 4 || m->size(0) != x.size(0) || m->size(1) != 1 ||
            m->size(2) != x.size(2) || m->size(3) != x.size(3)) {
            throw ContractError("mask shape does not match feature map " + c10::str(x.sizes()));
        }
    }
    return compose(x, masks);
}

MaskPair S2AMImpl::predict_mask(const torch::Tensor& x) {
    if (cfg_.variant != Variant::mask_free) {
        throw ContractError("S2AM::predict_mask requires the mask-free variant");
    }
    check_input(x);
    return spatial->forward(x);
}

std::pair<torch::Tensor, MaskPair> S2AMImpl::forward_maskfree(const torch::Tensor& x) {
    auto predicted = predict_mask(x);
    auto y = compose(x, predicted);
    return {y, predicted};
}

MaskPair S2AMImpl::prepare_mask(const torch::Tensor& binary_mask, int64_t height,
                                int64_t width) const {
    MaskSmoothing smoothing{cfg_.use_gaussian, cfg_.gaussian_kernel, cfg_.gaussian_sigma};
    return smooth_and_resize_mask(binary_mask, height, width, smoothing);
}

GateResponses S2AMImpl::gate_responses(const torch::Tensor& x) {
    check_input(x);
    GateResponses out;
    if (!cfg_.use_gates) {
        return out;
    }
    out.background = gate_bg->forward(x);
    if (cfg_.use_gmix) {
        out.mix = gate_mix->forward(x);
    }
    out.foreground = gate_fg->forward(x);
    return out;
}

namespace {

void init_one(torch::nn::Module& m) {
    torch::Tensor weight;
    torch::Tensor bias;
    if (auto* conv = m.as<torch::nn::Conv2d>()) {
        weight = conv->weight;
        bias = conv->bias;
    } else if (auto* deconv = m.as<torch::nn::ConvTranspose2d>()) {
        weight = deconv->weight;
        bias = deconv->bias;
    } else if (auto* linear = m.as<torch::nn::Linear>()) {
        weight = linear->weight;
        bias = linear->bias;
    } else if (auto* bn = m.as<torch::nn::BatchNorm2d>()) {
        bn->weight.fill_(1.0);
        bn->bias.zero_();
        return;
    } else {
        return;
    }
    weight.normal_(0.0, 0.02);
    if (bias.defined()) {
        bias.zero_();
    }
}

} // namespace

void init_weights(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    init_one(module);
    for (auto& m : module.modules(/*include_self=*/false)) {
        init_one(*m);
    }
}

void write_gate_dump(std::ostream& out, const std::vector<LevelGates>& levels) {
    out << "level,gate,sample,channel,weight\n";
    out.precision(9);
    for (const auto& level : levels) {
        const std::pair<const char*, const torch::Tensor*> order[] = {
            {"bg", &level.gates.background},
            {"mix", &level.gates.mix},
            {"fg", &level.gates.foreground},
        };
        for (const auto& [name, tensor] : order) {
            if (!tensor->defined()) {
                continue;
            }
            auto w = tensor->detach().to(torch::kCPU, torch::kFloat64).contiguous();
            auto acc = w.accessor<double, 4>();
            for (int64_t n = 0; n < w.size(0); ++n) {
                for (int64_t c = 0; c < w.size(1); ++c) {
                    out << level.level << ',' << name << ',' << n << ',' << c << ','
                        << acc[n][c][0][0] << '\n';
                }
            }
        }
    }
}

} // namespace s2am::attention
