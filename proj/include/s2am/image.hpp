#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace s2am {

/// 8-bit image, row-major, channels interleaved (RGB for color, single plane for masks).
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<size_t>(w) * static_cast<size_t>(h) * static_cast<size_t>(c), fill) {}

    size_t index(int y, int x, int c = 0) const {
        return (static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) *
                   static_cast<size_t>(channels) +
               static_cast<size_t>(c);
    }
    std::uint8_t& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
    std::uint8_t at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

    bool same_shape(const Image8& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const Image8&, const Image8&) = default;
};

/// PNG I/O. Color images are returned as RGB; `channels` forces 1 or 3 on read.
/// Throws DataError on unreadable files.
Image8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Stacks images into (N,C,H,W) scaled to [-1,1].
torch::Tensor images_to_tensor(std::span<const Image8> images,
                               torch::Dtype dtype = torch::kFloat32);

/// Stacks masks into (N,1,H,W) with values in {0,1} (any nonzero pixel is 1).
torch::Tensor masks_to_tensor(std::span<const Image8> masks, torch::Dtype dtype = torch::kFloat32);

/// Converts one (C,H,W) tensor in [-1,1] back to 8 bits (rounded, clamped).
Image8 tensor_to_image(const torch::Tensor& chw);

/// Converts one (1,H,W) tensor in [0,1] to an 8-bit plane.
Image8 unit_tensor_to_image(const torch::Tensor& chw);

/// |a - b| amplified by `gain`, mapped through a jet colormap; RGB output.
Image8 difference_colormap(const Image8& a, const Image8& b, double gain = 10.0);

/// Area-resize for color images, nearest for masks.
Image8 resize_image(const Image8& image, int width, int height, bool is_mask);

} // namespace s2am
