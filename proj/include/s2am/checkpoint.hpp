#pragma once

// Parameter blob: "S2AMTENS", u32 version, u64 count, then per tensor
// u32 name length, name, u8 dtype (0 f32, 1 f64, 2 i64), u32 rank, i64 dims,
// raw little-endian data. Byte-stable for identical contents.

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace s2am::checkpoint {

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensors(const std::filesystem::path& path);

/// Parameters followed by buffers, names prefixed with `prefix`.
NamedTensors module_state(const torch::nn::Module& module, const std::string& prefix);

/// Copies matching entries into the module. Throws DataError on a missing name or shape mismatch.
void load_module_state(torch::nn::Module& module, const NamedTensors& tensors,
                       const std::string& prefix);

/// Entry lookup; throws DataError when absent.
const torch::Tensor& find(const NamedTensors& tensors, const std::string& name);
bool contains(const NamedTensors& tensors, const std::string& name);

} // namespace s2am::checkpoint
