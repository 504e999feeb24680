#include "s2am/checkpoint.hpp"

#include "s2am/errors.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace s2am::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic{'S', '2', 'A', 'M', 'T', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw DataError("truncated tensor file " + path.string());
    }
    return value;
}

std::uint8_t dtype_code(torch::Dtype dtype) {
    switch (dtype) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw DataError("unsupported tensor dtype in checkpoint");
    }
}

torch::Dtype code_dtype(std::uint8_t code) {
    switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw DataError("unknown dtype code in checkpoint");
    }
}

} // namespace

void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, tensor] : tensors) {
        auto t = tensor.detach().to(torch::kCPU).contiguous();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(out, dtype_code(t.scalar_type()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.sizes()) {
            put<std::int64_t>(out, d);
        }
        out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

NamedTensors read_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw DataError("not a tensor file: " + path.string());
    }
    if (get<std::uint32_t>(in, path) != kVersion) {
        throw DataError("unsupported tensor file version: " + path.string());
    }
    const auto count = get<std::uint64_t>(in, path);
    NamedTensors tensors;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(in, path);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) {
            throw DataError("truncated tensor file " + path.string());
        }
        const auto dtype = code_dtype(get<std::uint8_t>(in, path));
        const auto rank = get<std::uint32_t>(in, path);
        std::vector<int64_t> dims(rank);
        for (auto& d : dims) {
            d = get<std::int64_t>(in, path);
        }
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()))) {
            throw DataError("truncated tensor data in " + path.string());
        }
        tensors.emplace_back(std::move(name), std::move(t));
    }
    return tensors;
}

NamedTensors module_state(const torch::nn::Module& module, const std::string& prefix) {
    NamedTensors out;
    for (const auto& item : module.named_parameters()) {
        out.emplace_back(prefix + item.key(), item.value());
    }
    for (const auto& item : module.named_buffers()) {
        out.emplace_back(prefix + item.key(), item.value());
    }
    return out;
}

bool contains(const NamedTensors& tensors, const std::string& name) {
    for (const auto& [key, value] : tensors) {
        if (key == name) {
            return true;
        }
    }
    return false;
}

const torch::Tensor& find(const NamedTensors& tensors, const std::string& name) {
    for (const auto& [key, value] : tensors) {
        if (key == name) {
            return value;
        }
    }
    throw DataError("checkpoint has no entry '" + name + "'");
}

void load_module_state(torch::nn::Module& module, const NamedTensors& tensors,
                       const std::string& prefix) {
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
        const auto& src = find(tensors, prefix + name);
        if (src.sizes() != dst.sizes()) {
            throw DataError("shape mismatch for '" + prefix + name + "': " + c10::str(src.sizes()) +
                            " vs " + c10::str(dst.sizes()));
        }
        dst.copy_(src);
    };
    for (auto& item : module.named_parameters()) {
        copy_into(item.key(), item.value());
    }
    for (auto& item : module.named_buffers()) {
        copy_into(item.key(), item.value());
    }
}

} // namespace s2am::checkpoint
