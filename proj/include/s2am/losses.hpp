#pragma once

#include "s2am/attention.hpp"
#include "s2am/errors.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

namespace s2am::losses {

enum class AttentionLossKind { l2, bce };

struct LossConfig {
    double alpha = 90.0;
    double beta = 100.0;
    AttentionLossKind attention_loss_kind = AttentionLossKind::l2;
    bool use_gan = false;
    /// Discriminator sees concat(composite, image) instead of the image alone.
    bool conditional_discriminator = false;
    int64_t discriminator_channels = 64;
    int64_t discriminator_layers = 3;

    void validate() const;
};

/// Masked task trains without the GAN by default, the mask-free task with it.
LossConfig default_loss_config(attention::Variant variant);

struct LossBreakdown {
    double pixel = 0.0;
    double attention = 0.0;
    double adversarial_g = 0.0;
    double adversarial_d = 0.0;
    double total = 0.0;
};

/// Mean squared error over all entries.
torch::Tensor pixel_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Sum over levels of the per-level mean error between each predicted map and
/// the area-resized ground truth. `levels[i]` is the level of `maps[i]`; a map at
/// level l must have resolution (H/2^l, W/2^l).
torch::Tensor attention_loss(const std::vector<torch::Tensor>& maps, const torch::Tensor& gt_mask,
                             AttentionLossKind kind = AttentionLossKind::l2,
                             const std::vector<int64_t>& levels = {1, 2, 3});

/// Patch classifier: conv4/s2 + leaky ReLU, (layers-1) conv4/s2 + BN + leaky ReLU,
/// conv4/s1 + BN + leaky ReLU, conv4/s1 to one logit map. No sigmoid.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    PatchDiscriminatorImpl(int64_t input_channels = 3, int64_t base_channels = 64,
                           int64_t layers = 3);

    torch::Tensor forward(const torch::Tensor& image);

    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator build_discriminator(const LossConfig& cfg);

struct AdversarialLosses {
    torch::Tensor discriminator;
    torch::Tensor generator;
};

/// Least-squares objectives:
/// d = 0.5 mean((real-1)^2) + 0.5 mean(fake^2), g = mean((fake-1)^2).
AdversarialLosses lsgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// Generator-side least-squares term alone.
torch::Tensor lsgan_generator_loss(const torch::Tensor& d_fake);

/// alpha * attention + beta * pixel (+ adversarial when cfg.use_gan).
/// Masked task: the attention term must be absent (ConfigError otherwise).
template <class T>
T total_loss(const T& pixel, const std::optional<T>& attention, const T& adversarial_g,
             const LossConfig& cfg, attention::Variant variant) {
    if (variant == attention::Variant::masked && attention.has_value()) {
        throw ConfigError("attention loss term is only defined for the mask-free task");
    }
    T total = cfg.beta * pixel;
    if (attention.has_value()) {
        total = cfg.alpha * *attention + total;
    }
    if (cfg.use_gan) {
        total = total + adversarial_g;
    }
    return total;
}

} // namespace s2am::losses
