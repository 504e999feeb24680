#include "s2am/losses.hpp"

#include "s2am/errors.hpp"

namespace s2am::losses {

namespace nn = torch::nn;

void LossConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0) {
        throw ConfigError("loss weights alpha and beta must be >= 0");
    }
    if (discriminator_channels < 1 || discriminator_layers < 1) {
        throw ConfigError("discriminator channels and layers must be >= 1");
    }
}

LossConfig default_loss_config(attention::Variant variant) {
    LossConfig cfg;
    cfg.use_gan = variant == attention::Variant::mask_free;
    return cfg;
}

torch::Tensor pixel_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    if (pred.sizes() != target.sizes()) {
        throw ContractError("pixel_loss shape mismatch: " + c10::str(pred.sizes()) + " vs " +
                            c10::str(target.sizes()));
    }
    return torch::mse_loss(pred, target);
}

torch::Tensor attention_loss(const std::vector<torch::Tensor>& maps, const torch::Tensor& gt_mask,
                             AttentionLossKind kind, const std::vector<int64_t>& levels) {
    if (maps.size() != levels.size()) {
        throw ContractError("attention_loss expects " + std::to_string(levels.size()) +
                            " maps, got " + std::to_string(maps.size()));
    }
    if (gt_mask.dim() != 4 || gt_mask.size(1) != 1) {
        throw ContractError("ground-truth mask must be (N,1,H,W)");
    }
    torch::Tensor total;
    for (size_t i = 0; i < maps.size(); ++i) {
        const int64_t factor = int64_t{1} << levels[i];
        const int64_t h = gt_mask.size(2) / factor;
        const int64_t w = gt_mask.size(3) / factor;
        const auto& pred = maps[i];
        if (pred.dim() != 4 || pred.size(0) != gt_mask.size(0) || pred.size(1) != 1 ||
            pred.size(2) != h || pred.size(3) != w) {
            throw ContractError("attention map " + std::to_string(i) + " has shape " +
                                c10::str(pred.sizes()) + ", expected " + std::to_string(h) + "x" +
                                std::to_string(w));
        }
        auto gt = attention::area_resize(gt_mask.to(pred.dtype()), h, w);
        auto term = kind == AttentionLossKind::l2 ? torch::mse_loss(pred, gt)
                                                  : torch::binary_cross_entropy(pred, gt);
        total = total.defined() ? total + term : term;
    }
    if (!total.defined()) {
        total = torch::zeros({}, gt_mask.options());
    }
    return total;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int64_t input_channels, int64_t base_channels,
                                               int64_t layers) {
    auto conv = [](int64_t in, int64_t out, int64_t stride, bool bias) {
        return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(stride).padding(1).bias(bias));
    };
    auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };

    body = nn::Sequential();
    body->push_back(conv(input_channels, base_channels, 2, true));
    body->push_back(lrelu());
    int64_t width = base_channels;
    for (int64_t n = 1; n < layers; ++n) {
        const int64_t next = base_channels * std::min<int64_t>(int64_t{1} << n, 8);
        body->push_back(conv(width, next, 2, false));
        body->push_back(nn::BatchNorm2d(next));
        body->push_back(lrelu());
        width = next;
    }
    const int64_t last = base_channels * std::min<int64_t>(int64_t{1} << layers, 8);
    body->push_back(conv(width, last, 1, false));
    body->push_back(nn::BatchNorm2d(last));
    body->push_back(lrelu());
    body->push_back(conv(last, 1, 1, true));
    register_module("body", body);
    attention::init_weights(*this);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& image) {
    return body->forward(image);
}

PatchDiscriminator build_discriminator(const LossConfig& cfg) {
    cfg.validate();
    return PatchDiscriminator(cfg.conditional_discriminator ? 6 : 3, cfg.discriminator_channels,
                              cfg.discriminator_layers);
}

AdversarialLosses lsgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    auto d = 0.5 * (d_real - 1.0).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
    return {d, lsgan_generator_loss(d_fake)};
}

torch::Tensor lsgan_generator_loss(const torch::Tensor& d_fake) {
    return (d_fake - 1.0).pow(2).mean();
}

} // namespace s2am::losses
