#pragma once

#include "s2am/image.hpp"

#include <limits>

namespace s2am::metrics {

/// Reports cap PSNR of identical images at this value.
inline constexpr double kPsnrCap = 99.0;

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kDynamicRange = 255.0;

struct MetricReport {
    double mse = 0.0;
    double ssim = 0.0;
    /// Capped at kPsnrCap.
    double psnr = 0.0;
};

/// Mean squared difference over all pixels and channels, on the 8-bit scale.
double mse(const Image8& a, const Image8& b);

/// 10 log10(peak^2 / mse); +infinity for identical images.
double psnr(const Image8& a, const Image8& b, double peak = kDynamicRange);
double psnr_from_mse(double mse, double peak = kDynamicRange);

/// Mean over channels of the mean local SSIM over all valid 11x11 windows
/// (Gaussian weights, sigma 1.5). Throws DataError for images smaller than the window.
double ssim(const Image8& a, const Image8& b);

/// All three metrics; PSNR capped for tabular output.
MetricReport evaluate_pair(const Image8& prediction, const Image8& target);

inline double cap_psnr(double value) { return value > kPsnrCap ? kPsnrCap : value; }

} // namespace s2am::metrics
