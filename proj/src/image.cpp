#include "s2am/image.hpp"

#include "s2am/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace s2am {

namespace {

cv::Mat as_mat(const Image8& image) {
    auto type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat view(image.height, image.width, type, const_cast<std::uint8_t*>(image.pixels.data()));
    return view.clone();
}

Image8 from_mat(const cv::Mat& mat) {
    Image8 out(mat.cols, mat.rows, mat.channels());
    auto continuous = mat.isContinuous() ? mat : mat.clone();
    std::memcpy(out.pixels.data(), continuous.data, out.pixels.size());
    return out;
}

} // namespace

Image8 read_png(const std::filesystem::path& path, int channels) {
    const int flag = channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
    cv::Mat mat = cv::imread(path.string(), flag);
    if (mat.empty()) {
        throw DataError("cannot read image " + path.string());
    }
    if (mat.depth() != CV_8U) {
        throw DataError("not an 8-bit image: " + path.string());
    }
    if (channels == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    }
    return from_mat(mat);
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ContractError("write_png supports 1 or 3 channels");
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto mat = as_mat(image);
    if (image.channels == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
    }
    if (!cv::imwrite(path.string(), mat)) {
        throw DataError("cannot write image " + path.string());
    }
}

namespace {

torch::Tensor stack_planes(std::span<const Image8> images, torch::Dtype dtype) {
    if (images.empty()) {
        throw ContractError("cannot stack an empty image list");
    }
    const auto& first = images.front();
    std::vector<torch::Tensor> planes;
    planes.reserve(images.size());
    for (const auto& img : images) {
        if (!img.same_shape(first)) {
            throw DataError("images in a batch must share dimensions");
        }
        auto hwc = torch::from_blob(const_cast<std::uint8_t*>(img.pixels.data()),
                                    {img.height, img.width, img.channels}, torch::kUInt8);
        planes.push_back(hwc.permute({2, 0, 1}).to(dtype));
    }
    return torch::stack(planes);
}

} // namespace

torch::Tensor images_to_tensor(std::span<const Image8> images, torch::Dtype dtype) {
    return stack_planes(images, dtype) / 127.5 - 1.0;
}

torch::Tensor masks_to_tensor(std::span<const Image8> masks, torch::Dtype dtype) {
    auto t = stack_planes(masks, dtype);
    if (t.size(1) != 1) {
        throw DataError("masks must be single-channel");
    }
    return (t > 0).to(dtype);
}

Image8 tensor_to_image(const torch::Tensor& chw) {
    auto scaled = ((chw.detach().to(torch::kCPU, torch::kFloat64) + 1.0) * 127.5)
                      .round()
                      .clamp(0.0, 255.0)
                      .to(torch::kUInt8)
                      .permute({1, 2, 0})
                      .contiguous();
    Image8 out(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)),
               static_cast<int>(chw.size(0)));
    std::memcpy(out.pixels.data(), scaled.data_ptr<std::uint8_t>(), out.pixels.size());
    return out;
}

Image8 unit_tensor_to_image(const torch::Tensor& chw) {
    return tensor_to_image(chw * 2.0 - 1.0);
}

Image8 difference_colormap(const Image8& a, const Image8& b, double gain) {
    if (!a.same_shape(b)) {
        throw ContractError("difference_colormap needs equally shaped images");
    }
    Image8 diff(a.width, a.height, 1);
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            double acc = 0.0;
            for (int c = 0; c < a.channels; ++c) {
                acc += std::abs(static_cast<double>(a.at(y, x, c)) - b.at(y, x, c));
            }
            const double v = std::min(255.0, gain * acc / a.channels);
            diff.at(y, x) = static_cast<std::uint8_t>(std::lround(v));
        }
    }
    cv::Mat colored;
    cv::applyColorMap(as_mat(diff), colored, cv::COLORMAP_JET);
    cv::cvtColor(colored, colored, cv::COLOR_BGR2RGB);
    return from_mat(colored);
}

Image8 resize_image(const Image8& image, int width, int height, bool is_mask) {
    if (image.width == width && image.height == height) {
        return image;
    }
    cv::Mat out;
    const bool shrinking = width <= image.width && height <= image.height;
    const int interp = is_mask ? cv::INTER_NEAREST : (shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    cv::resize(as_mat(image), out, cv::Size(width, height), 0, 0, interp);
    return from_mat(out);
}

} // namespace s2am
