#pragma once

// Spatial-separated attention: three mask-routed channel gates plus a learnable
// block, and the mask-free variant driven by a spatial attention predictor.

#include <torch/torch.h>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace s2am::attention {

enum class Variant { masked, mask_free };

/// Support of the mask smoothing kernel spans +-3 sigma.
inline constexpr int64_t kDefaultGaussianKernel = 7;
inline constexpr double kDefaultGaussianSigma = 7.0 / 6.0;
inline constexpr int64_t kDefaultReduction = 16;
inline constexpr int64_t kSpatialHiddenChannels = 16;
inline constexpr int64_t kSpatialKernel = 7;

struct S2AMConfig {
    int64_t channels = 0;
    int64_t reduction = kDefaultReduction;
    int64_t gaussian_kernel = kDefaultGaussianKernel;
    double gaussian_sigma = kDefaultGaussianSigma;
    Variant variant = Variant::masked;
    bool use_gmix = true;
    bool use_learnable = true;
    bool use_gaussian = true;
    bool use_gates = true;

    /// Throws ConfigError when channels/reduction/kernel are inconsistent.
    void validate() const;
    int64_t hidden_width() const { return channels / reduction; }
};

/// Spliced-region mask and its complement, (N,1,H,W) each.
struct MaskPair {
    torch::Tensor mask;
    torch::Tensor complement;

    /// Complement computed as 1 - mask.
    static MaskPair from_mask(torch::Tensor mask);
};

/// Normalized isotropic Gaussian of shape (size, size); entries sum to 1.
torch::Tensor gaussian_kernel(int64_t size, double sigma,
                              torch::Dtype dtype = torch::kFloat32);

/// Area-averaging resize of an (N,1,H,W) mask. Upsampling falls back to nearest.
torch::Tensor area_resize(const torch::Tensor& mask, int64_t height, int64_t width);

/// Depthwise convolution with a square kernel and reflect padding. Works for any
/// spatial size (indices are mirrored repeatedly when the image is smaller than the pad).
torch::Tensor reflect_filter(const torch::Tensor& planes, const torch::Tensor& kernel);

struct MaskSmoothing {
    bool enabled = true;
    int64_t kernel = kDefaultGaussianKernel;
    double sigma = kDefaultGaussianSigma;
};

/// Resizes a binary mask (and independently its complement) to (height, width),
/// smooths both with the Gaussian kernel when enabled, clamps to [0,1].
/// Throws DataError on non-finite input.
MaskPair smooth_and_resize_mask(const torch::Tensor& binary_mask, int64_t height,
                                int64_t width, const MaskSmoothing& smoothing = {});

/// Per-channel weights from pooled statistics:
/// sigmoid(fc2(relu(fc1([avgpool(x), maxpool(x)])))), output (N,C,1,1).
class ChannelGateImpl : public torch::nn::Module {
public:
    ChannelGateImpl(int64_t channels, int64_t reduction);

    torch::Tensor forward(const torch::Tensor& x);

    int64_t channels() const { return channels_; }
    int64_t hidden() const { return hidden_; }

    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};

private:
    int64_t channels_;
    int64_t hidden_;
};
TORCH_MODULE(ChannelGate);

/// Two 3x3 conv -> batch norm -> ELU blocks, C -> 2C -> C, spatial size preserved.
class LearnableBlockImpl : public torch::nn::Module {
public:
    explicit LearnableBlockImpl(int64_t channels);

    torch::Tensor forward(const torch::Tensor& x);

    int64_t channels() const { return channels_; }

    torch::nn::Sequential body{nullptr};

private:
    int64_t channels_;
};
TORCH_MODULE(LearnableBlock);

/// Channel max/mean planes, (N,2,H,W), max first.
torch::Tensor channel_pool(const torch::Tensor& x);

/// Predicts a soft spliced-region mask from features:
/// sigmoid(conv7(relu(conv7(channel_pool(x))))) with 16 hidden maps.
class SpatialAttentionImpl : public torch::nn::Module {
public:
    SpatialAttentionImpl();

    MaskPair forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// Gate weight vectors of one module for a given input, any of which may be
/// undefined when the corresponding gate is disabled.
struct GateResponses {
    torch::Tensor background;
    torch::Tensor mix;
    torch::Tensor foreground;
};

/// y = M * [L(G_fg(x)) + G_mix(x)] + (1 - M) * G_bg(x)
///
/// Ablation switches replace a disabled part by identity: no gates means every
/// gate is 1, no learnable block means L(z) = z, no G_mix drops that term.
class S2AMImpl : public torch::nn::Module {
public:
    explicit S2AMImpl(S2AMConfig cfg);

    /// Masked variant. The mask pair must already be at the resolution of x.
    torch::Tensor forward(const torch::Tensor& x, const MaskPair& masks);

    /// Mask-free variant. Returns the output and the predicted (unsmoothed) mask.
    std::pair<torch::Tensor, MaskPair> forward_maskfree(const torch::Tensor& x);

    /// Predicted mask only (mask-free variant).
    MaskPair predict_mask(const torch::Tensor& x);

    /// Full-resolution binary mask -> mask pair at (height, width) following cfg.
    MaskPair prepare_mask(const torch::Tensor& binary_mask, int64_t height,
                          int64_t width) const;

    GateResponses gate_responses(const torch::Tensor& x);

    const S2AMConfig& config() const { return cfg_; }

    ChannelGate gate_bg{nullptr};
    ChannelGate gate_mix{nullptr};
    ChannelGate gate_fg{nullptr};
    LearnableBlock learnable{nullptr};
    SpatialAttention spatial{nullptr};

private:
    torch::Tensor compose(const torch::Tensor& x, const MaskPair& masks);
    void check_input(const torch::Tensor& x) const;

    S2AMConfig cfg_;
};
TORCH_MODULE(S2AM);

/// Normal(0, 0.02) for conv/linear weights, zero biases, unit batch-norm scale.
void init_weights(torch::nn::Module& module);

/// One gate table per attached level, for the channel-response dump.
struct LevelGates {
    int64_t level = 0;
    GateResponses gates;
};

/// CSV with columns level,gate,sample,channel,weight; gates ordered bg, mix, fg.
void write_gate_dump(std::ostream& out, const std::vector<LevelGates>& levels);

} // namespace s2am::attention
