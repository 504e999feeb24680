#pragma once

// U-Net trunk with S2AM attached either on the skip path (s2asc) or after the
// skip/decoder concatenation (s2ad).

#include "s2am/attention.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace s2am::backbone {

using attention::MaskPair;
using attention::Variant;

enum class Attachment { none, s2asc, s2ad };

/// `copy_paste` is the parameter-free baseline that returns its input.
enum class Architecture { unet, copy_paste };

struct ModelConfig {
    Architecture architecture = Architecture::unet;
    /// 3 = RGB trunk input; 4 additionally feeds the mask to the trunk.
    int64_t input_channels = 3;
    int64_t base_channels = 64;
    int64_t depth = 8;
    Attachment attachment = Attachment::s2asc;
    std::vector<int64_t> attachment_levels{1, 2, 3};
    Variant variant = Variant::masked;

    int64_t reduction = attention::kDefaultReduction;
    int64_t gaussian_kernel = attention::kDefaultGaussianKernel;
    double gaussian_sigma = attention::kDefaultGaussianSigma;
    bool use_gates = true;
    bool use_gmix = true;
    bool use_learnable = true;
    bool use_gaussian = true;

    /// Throws ConfigError. Levels must lie in [1, depth-1] (the bottleneck has no skip).
    void validate() const;
    /// Throws ConfigError when 2^depth exceeds the given resolution.
    void validate_resolution(int64_t height, int64_t width) const;

    /// Encoder feature width at a level: base * min(2^(level-1), 8).
    int64_t channels_at(int64_t level) const;
    /// Channel width of the S2AM instance at a level for the configured attachment.
    int64_t attention_channels_at(int64_t level) const;
    bool attached(int64_t level) const;
    attention::S2AMConfig attention_config(int64_t level) const;
};

struct NetworkOutput {
    torch::Tensor harmonized;
    /// Mask-free only: predicted masks per attached level, finest first.
    std::vector<MaskPair> attention_maps;
};

class HarmonizerImpl : public torch::nn::Module {
public:
    explicit HarmonizerImpl(ModelConfig cfg);

    /// image (N,3,H,W) in [-1,1], mask (N,1,H,W) binary. Output in [-1,1].
    NetworkOutput forward_masked(const torch::Tensor& image, const torch::Tensor& mask);

    /// Mask-free generator; returns the raw output plus predicted maps.
    NetworkOutput forward_maskfree(const torch::Tensor& image);

    const ModelConfig& config() const { return cfg_; }

    /// Attached S2AM modules ordered by level (finest first).
    std::vector<std::pair<int64_t, attention::S2AM>> attention_modules() const;

    /// Runs the network and collects the gate weights of each attached module.
    std::vector<attention::LevelGates> gate_responses(const torch::Tensor& image,
                                                      const torch::Tensor& mask);

private:
    struct Trace {
        std::vector<MaskPair> maps;
        std::vector<attention::LevelGates>* gates = nullptr;
    };
    torch::Tensor run(const torch::Tensor& image, const torch::Tensor* mask, Trace& trace);
    void check_input(const torch::Tensor& image) const;

    ModelConfig cfg_;
    std::vector<torch::nn::Sequential> down_;
    std::vector<torch::nn::Sequential> up_;
    std::vector<attention::S2AM> att_;
};
TORCH_MODULE(Harmonizer);

/// Builds the network and initializes its parameters.
Harmonizer build_network(const ModelConfig& cfg);

/// Number of scalar parameters.
int64_t parameter_count(const torch::nn::Module& module);

} // namespace s2am::backbone
