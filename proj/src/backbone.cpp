#include "s2am/backbone.hpp"

#include "s2am/errors.hpp"

#include <algorithm>
#include <set>

namespace s2am::backbone {

namespace nn = torch::nn;

void ModelConfig::validate() const {
    if (architecture == Architecture::copy_paste) {
        return;
    }
    if (input_channels != 3 && input_channels != 4) {
        throw ConfigError("input_channels must be 3 or 4");
    }
    if (base_channels < 1) {
        throw ConfigError("base_channels must be >= 1");
    }
    if (depth < 1 || depth > 16) {
        throw ConfigError("depth must be in [1, 16]");
    }
    if (variant == Variant::mask_free) {
        if (attachment != Attachment::s2ad) {
            throw ConfigError("the mask-free variant requires the s2ad attachment");
        }
        if (input_channels != 3) {
            throw ConfigError("the mask-free variant takes a 3-channel input");
        }
    }
    if (attachment == Attachment::none) {
        return;
    }
    if (attachment_levels.empty()) {
        throw ConfigError("attachment_levels must not be empty when an attachment is set");
    }
    std::set<int64_t> seen;
    for (auto level : attachment_levels) {
        if (level < 1 || level > depth - 1) {
            throw ConfigError("attachment level " + std::to_string(level) + " outside [1, " +
                              std::to_string(depth - 1) + "]");
        }
        if (!seen.insert(level).second) {
            throw ConfigError("duplicate attachment level " + std::to_string(level));
        }
        attention_config(level).validate();
    }
}

void ModelConfig::validate_resolution(int64_t height, int64_t width) const {
    if (architecture == Architecture::copy_paste) {
        return;
    }
    const int64_t factor = int64_t{1} << depth;
    if (factor > std::min(height, width)) {
        throw ConfigError("depth " + std::to_string(depth) + " needs a resolution of at least " +
                          std::to_string(factor));
    }
}

int64_t ModelConfig::channels_at(int64_t level) const {
    const int64_t mult = int64_t{1} << std::min<int64_t>(level - 1, 3);
    return base_channels * mult;
}

int64_t ModelConfig::attention_channels_at(int64_t level) const {
    return attachment == Attachment::s2ad ? 2 * channels_at(level) : channels_at(level);
}

bool ModelConfig::attached(int64_t level) const {
    return attachment != Attachment::none &&
           std::find(attachment_levels.begin(), attachment_levels.end(), level) !=
               attachment_levels.end();
}

attention::S2AMConfig ModelConfig::attention_config(int64_t level) const {
    attention::S2AMConfig c;
    c.channels = attention_channels_at(level);
    c.reduction = reduction;
    c.gaussian_kernel = gaussian_kernel;
    c.gaussian_sigma = gaussian_sigma;
    c.variant = variant;
    c.use_gates = use_gates;
    c.use_gmix = use_gmix;
    c.use_learnable = use_learnable;
    c.use_gaussian = use_gaussian;
    return c;
}

HarmonizerImpl::HarmonizerImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.architecture == Architecture::copy_paste) {
        return;
    }
    const int64_t depth = cfg_.depth;
    auto down_conv = [](int64_t in, int64_t out, bool bias) {
        return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
    };
    auto up_conv = [](int64_t in, int64_t out, bool bias) {
        return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
    };

    for (int64_t level = 1; level <= depth; ++level) {
        const int64_t out = cfg_.channels_at(level);
        nn::Sequential block;
        if (level == 1) {
            block->push_back(down_conv(cfg_.input_channels, out, true));
        } else {
            const bool innermost = level == depth;
            block->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
            block->push_back(down_conv(cfg_.channels_at(level - 1), out, innermost));
            if (!innermost) {
                block->push_back(nn::BatchNorm2d(out));
            }
        }
        down_.push_back(register_module("down" + std::to_string(level), block));
    }

    for (int64_t level = 1; level <= depth; ++level) {
        const int64_t in = level == depth ? cfg_.channels_at(level) : 2 * cfg_.channels_at(level);
        nn::Sequential block;
        block->push_back(nn::ReLU());
        if (level == 1) {
            block->push_back(up_conv(in, 3, true));
            block->push_back(nn::Tanh());
        } else {
            block->push_back(up_conv(in, cfg_.channels_at(level - 1), false));
            block->push_back(nn::BatchNorm2d(cfg_.channels_at(level - 1)));
        }
        up_.push_back(register_module("up" + std::to_string(level), block));
    }

    att_.assign(static_cast<size_t>(depth) + 1, attention::S2AM(nullptr));
    for (int64_t level = 1; level < depth; ++level) {
        if (cfg_.attached(level)) {
            att_[level] = register_module("att" + std::to_string(level),
                                          attention::S2AM(cfg_.attention_config(level)));
        }
    }
    attention::init_weights(*this);
}

std::vector<std::pair<int64_t, attention::S2AM>> HarmonizerImpl::attention_modules() const {
    std::vector<std::pair<int64_t, attention::S2AM>> out;
    for (size_t level = 0; level < att_.size(); ++level) {
        if (att_[level]) {
            out.emplace_back(static_cast<int64_t>(level), att_[level]);
        }
    }
    return out;
}

void HarmonizerImpl::check_input(const torch::Tensor& image) const {
    if (image.dim() != 4 || image.size(1) != 3) {
        throw ContractError("image must be (N,3,H,W), got " + c10::str(image.sizes()));
    }
    if (cfg_.architecture == Architecture::copy_paste) {
        return;
    }
    const int64_t factor = int64_t{1} << cfg_.depth;
    if (image.size(2) % factor != 0 || image.size(3) % factor != 0) {
        throw ContractError("image size " + std::to_string(image.size(2)) + "x" +
                            std::to_string(image.size(3)) + " is not divisible by " +
                            std::to_string(factor));
    }
}

torch::Tensor HarmonizerImpl::run(const torch::Tensor& image, const torch::Tensor* mask,
                                  Trace& trace) {
    const int64_t depth = cfg_.depth;
    auto h = image;
    if (cfg_.input_channels == 4) {
        h = torch::cat({image, mask->to(image.dtype())}, 1);
    }
    std::vector<torch::Tensor> enc(static_cast<size_t>(depth) + 1);
    for (int64_t level = 1; level <= depth; ++level) {
        h = down_[level - 1]->forward(h);
        enc[level] = h;
    }

    auto attend = [&](int64_t level, const torch::Tensor& x) {
        auto& module = att_[level];
        if (trace.gates != nullptr) {
            trace.gates->push_back({level, module->gate_responses(x)});
        }
        if (cfg_.variant == Variant::mask_free) {
            auto [y, predicted] = module->forward_maskfree(x);
            trace.maps.push_back(predicted);
            return y;
        }
        auto masks = module->prepare_mask(mask->to(x.dtype()), x.size(2), x.size(3));
        return module->forward(x, masks);
    };

    auto u = up_[depth - 1]->forward(enc[depth]);
    for (int64_t level = depth - 1; level >= 1; --level) {
        auto skip = enc[level];
        const bool attached = static_cast<bool>(att_[level]);
        if (attached && cfg_.attachment == Attachment::s2asc) {
            skip = attend(level, skip);
        }
        auto joined = torch::cat({skip, u}, 1);
        if (attached && cfg_.attachment == Attachment::s2ad) {
            joined = attend(level, joined);
        }
        u = up_[level - 1]->forward(joined);
    }
    std::reverse(trace.maps.begin(), trace.maps.end());
    if (trace.gates != nullptr) {
        std::reverse(trace.gates->begin(), trace.gates->end());
    }
    return u;
}

NetworkOutput HarmonizerImpl::forward_masked(const torch::Tensor& image, const torch::Tensor& mask) {
    if (cfg_.variant != Variant::masked) {
        throw UsageError("forward_masked called on a mask-free network");
    }
    check_input(image);
    if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(0) != image.size(0) ||
        mask.size(2) != image.size(2) || mask.size(3) != image.size(3)) {
        throw ContractError("mask must be (N,1,H,W) matching the image");
    }
    if (cfg_.architecture == Architecture::copy_paste) {
        return {image, {}};
    }
    Trace trace;
    return {run(image, &mask, trace), {}};
}

NetworkOutput HarmonizerImpl::forward_maskfree(const torch::Tensor& image) {
    if (cfg_.variant != Variant::mask_free) {
        throw UsageError("forward_maskfree called on a masked network");
    }
    check_input(image);
    if (cfg_.architecture == Architecture::copy_paste) {
        return {image, {}};
    }
    Trace trace;
    auto out = run(image, nullptr, trace);
    return {out, std::move(trace.maps)};
}

std::vector<attention::LevelGates> HarmonizerImpl::gate_responses(const torch::Tensor& image,
                                                                  const torch::Tensor& mask) {
    check_input(image);
    std::vector<attention::LevelGates> gates;
    if (cfg_.architecture == Architecture::copy_paste) {
        return gates;
    }
    Trace trace;
    trace.gates = &gates;
    run(image, &mask, trace);
    return gates;
}

Harmonizer build_network(const ModelConfig& cfg) { return Harmonizer(cfg); }

int64_t parameter_count(const torch::nn::Module& module) {
    int64_t total = 0;
    for (const auto& p : module.parameters()) {
        total += p.numel();
    }
    return total;
}

} // namespace s2am::backbone
