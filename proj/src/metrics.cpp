#include "s2am/metrics.hpp"

#include "s2am/errors.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace s2am::metrics {

namespace {

void require_same_shape(const Image8& a, const Image8& b) {
    if (!a.same_shape(b) || a.empty()) {
        throw ContractError("metric inputs must be non-empty and equally shaped");
    }
}

std::vector<double> ssim_weights() {
    std::vector<double> g(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (auto& v : g) {
        v /= sum;
    }
    return g;
}

// Valid-region separable filtering of a (h x w) plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& g) {
    const int k = static_cast<int>(g.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> rows(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += g[i] * plane[static_cast<size_t>(y) * w + x + i];
            }
            rows[static_cast<size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += g[i] * rows[static_cast<size_t>(y + i) * ow + x];
            }
            out[static_cast<size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

double channel_ssim(const Image8& a, const Image8& b, int channel, const std::vector<double>& g) {
    const int h = a.height;
    const int w = a.width;
    const size_t n = static_cast<size_t>(h) * w;
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            pa[i] = a.at(y, x, channel);
            pb[i] = b.at(y, x, channel);
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
    }
    const auto mu_a = filter_valid(pa, h, w, g);
    const auto mu_b = filter_valid(pb, h, w, g);
    const auto e_aa = filter_valid(paa, h, w, g);
    const auto e_bb = filter_valid(pbb, h, w, g);
    const auto e_ab = filter_valid(pab, h, w, g);

    const double c1 = (kSsimK1 * kDynamicRange) * (kSsimK1 * kDynamicRange);
    const double c2 = (kSsimK2 * kDynamicRange) * (kSsimK2 * kDynamicRange);
    double sum = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma2 = mu_a[i] * mu_a[i];
        const double mb2 = mu_b[i] * mu_b[i];
        const double mab = mu_a[i] * mu_b[i];
        const double va = e_aa[i] - ma2;
        const double vb = e_bb[i] - mb2;
        const double cov = e_ab[i] - mab;
        sum += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
    }
    return sum / static_cast<double>(mu_a.size());
}

} // namespace

double mse(const Image8& a, const Image8& b) {
    require_same_shape(a, b);
    std::int64_t acc = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const std::int64_t d = static_cast<std::int64_t>(a.pixels[i]) - b.pixels[i];
        acc += d * d;
    }
    return static_cast<double>(acc) / static_cast<double>(a.pixels.size());
}

double psnr_from_mse(double mse, double peak) {
    if (mse <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Image8& a, const Image8& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

double ssim(const Image8& a, const Image8& b) {
    require_same_shape(a, b);
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw DataError("SSIM needs images of at least " + std::to_string(kSsimWindow) + "x" +
                        std::to_string(kSsimWindow));
    }
    const auto g = ssim_weights();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        total += channel_ssim(a, b, c, g);
    }
    return total / a.channels;
}

MetricReport evaluate_pair(const Image8& prediction, const Image8& target) {
    MetricReport r;
    r.mse = mse(prediction, target);
    r.ssim = ssim(prediction, target);
    r.psnr = cap_psnr(psnr_from_mse(r.mse));
    return r;
}

} // namespace s2am::metrics
