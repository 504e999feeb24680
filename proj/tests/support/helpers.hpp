#pragma once

#include "s2am/attention.hpp"
#include "s2am/datasynth.hpp"
#include "s2am/image.hpp"

#include <torch/torch.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace s2am::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("s2am_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Makes the gate emit `value` on every channel regardless of input.
inline void stub_gate(attention::ChannelGate& gate, double value) {
    torch::NoGradGuard no_grad;
    gate->fc1->weight.zero_();
    gate->fc1->bias.zero_();
    gate->fc2->weight.zero_();
    gate->fc2->bias.fill_(logit(value));
}

// Makes the spatial predictor emit `value` everywhere.
inline void stub_spatial(attention::SpatialAttention& spatial, double value) {
    torch::NoGradGuard no_grad;
    spatial->conv1->weight.zero_();
    spatial->conv1->bias.zero_();
    spatial->conv2->weight.zero_();
    spatial->conv2->bias.fill_(logit(value));
}

inline torch::Tensor random_binary_mask(int64_t n, int64_t h, int64_t w, std::uint64_t seed,
                                        torch::Dtype dtype = torch::kFloat32) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
    return (torch::rand({n, 1, h, w}, gen, torch::TensorOptions().dtype(dtype)) > 0.5).to(dtype);
}

inline Image8 random_image(int w, int h, int c, std::uint64_t seed) {
    Image8 img(w, h, c);
    std::mt19937_64 rng(seed);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

// Procedural scenes pushed through the synthesis pipeline: data_dir/{train,test}.
inline datasynth::Manifest make_fixture(const std::filesystem::path& root, int count, int size,
                                        std::uint64_t seed, double train_ratio = 1.0) {
    datasynth::SceneOptions scenes;
    scenes.count = count;
    scenes.size = size;
    scenes.seed = seed;
    datasynth::write_procedural_sources(root / "src", scenes);
    datasynth::GenerateOptions opts;
    opts.source_dir = root / "src";
    opts.out_dir = root / "data";
    opts.perturb.seed = seed;
    opts.train_ratio = train_ratio;
    return datasynth::generate_dataset(opts);
}

} // namespace s2am::testing
