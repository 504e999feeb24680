#include "s2am/errors.hpp"
#include "s2am/metrics.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace s2am;
using namespace s2am::metrics;
using s2am::testing::random_image;
using s2am::testing::reference_ssim;

TEST_SUITE("metrics") {

TEST_CASE("mse on the 8-bit scale") {
    auto a = random_image(16, 16, 3, 1);
    CHECK(mse(a, a) == 0.0);
    Image8 x(8, 8, 3, 100), y(8, 8, 3, 116);
    CHECK(mse(x, y) == 256.0);
    CHECK_THROWS(mse(x, Image8(8, 8, 1)));
}

TEST_CASE("psnr closed form, cap and monotonicity") {
    const double expect = 10.0 * std::log10(255.0 * 255.0 / 256.0);
    CHECK(std::abs(psnr_from_mse(256.0) - expect) < 1e-4);
    Image8 x(16, 16, 3, 100), y(16, 16, 3, 116);
    CHECK(std::abs(psnr(x, y) - expect) < 1e-4);
    CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());
    CHECK(evaluate_pair(x, x).psnr == kPsnrCap);
    double previous = -1.0;
    for (double m : {400.0, 100.0, 25.0, 1.0, 0.01}) {
        CHECK(psnr_from_mse(m) > previous);
        previous = psnr_from_mse(m);
    }
}

TEST_CASE("ssim agrees with a direct two-dimensional implementation") {
    for (int k = 0; k < 5; ++k) {
        auto a = random_image(64, 64, 3, 10 + k);
        auto b = a;
        std::mt19937_64 rng(50 + k);
        for (auto& p : b.pixels) {
            const int v = int(p) + int(rng() % 61) - 30;
            p = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
        CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) < 1e-6);
    }
}

TEST_CASE("ssim identity, symmetry and size contract") {
    auto a = random_image(32, 24, 3, 3);
    auto b = random_image(32, 24, 3, 4);
    CHECK(ssim(a, a) == 1.0);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) < 1.0);
    CHECK_THROWS_AS(ssim(random_image(10, 20, 3, 1), random_image(10, 20, 3, 2)), DataError);
}

} // TEST_SUITE
