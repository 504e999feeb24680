#include "s2am/attention.hpp"
#include "s2am/errors.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace s2am;
using namespace s2am::attention;
using s2am::testing::check_gradient;
using s2am::testing::eq1_oracle;
using s2am::testing::stub_gate;
using s2am::testing::stub_spatial;
using s2am::testing::weighted_sum;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

S2AMConfig stub_config(int64_t channels) {
    S2AMConfig cfg;
    cfg.channels = channels;
    cfg.reduction = 1;
    cfg.use_learnable = false;
    cfg.use_gaussian = false;
    return cfg;
}

} // namespace

TEST_SUITE("attention") {

TEST_CASE("channel gate with zero parameters gives 0.5 everywhere") {
    ChannelGate gate(8, 4);
    torch::NoGradGuard no_grad;
    for (auto& p : gate->parameters()) p.zero_();
    auto w = gate->forward(torch::randn({3, 8, 5, 5}));
    CHECK(w.sizes() == torch::IntArrayRef({3, 8, 1, 1}));
    CHECK(torch::all(w == 0.5).item<bool>());
}

TEST_CASE("channel gate hidden width is C/r") {
    ChannelGate gate(32, 16);
    CHECK(gate->hidden() == 2);
    CHECK(gate->fc1->weight.sizes() == torch::IntArrayRef({2, 64}));
    CHECK(gate->fc2->weight.sizes() == torch::IntArrayRef({32, 2}));
}

TEST_CASE("channel gate weights lie strictly inside (0,1)") {
    torch::manual_seed(3);
    ChannelGate gate(16, 4);
    auto w = gate->forward(torch::randn({4, 16, 6, 6}) * 3.0);
    CHECK(torch::all(w > 0).item<bool>());
    CHECK(torch::all(w < 1).item<bool>());
}

TEST_CASE("channel gate matches a hand evaluation on C=2") {
    ChannelGate gate(2, 2);
    const double a = 0.7, b = -1.3;
    const double w1[4] = {0.5, -0.25, 1.0, 0.75};
    const double b1 = 0.1;
    const double w2[2] = {1.5, -2.0};
    const double b2[2] = {0.2, -0.3};
    {
        torch::NoGradGuard no_grad;
        gate->fc1->weight.copy_(torch::tensor({{w1[0], w1[1], w1[2], w1[3]}}));
        gate->fc1->bias.fill_(b1);
        gate->fc2->weight.copy_(torch::tensor({{w2[0]}, {w2[1]}}));
        gate->fc2->bias.copy_(torch::tensor({b2[0], b2[1]}));
    }
    auto x = torch::empty({1, 2, 4, 4}, torch::kFloat32);
    x.select(1, 0).fill_(a);
    x.select(1, 1).fill_(b);
    auto w = gate->forward(x);

    // Pooled vector [avg_a, avg_b, max_a, max_b] = [a, b, a, b] for constant planes.
    const double pooled[4] = {a, b, a, b};
    double z = b1;
    for (int i = 0; i < 4; ++i) z += w1[i] * pooled[i];
    z = std::max(z, 0.0);
    CHECK(w[0][0][0][0].item<double>() == doctest::Approx(sigmoid(w2[0] * z + b2[0])).epsilon(1e-6));
    CHECK(w[0][1][0][0].item<double>() == doctest::Approx(sigmoid(w2[1] * z + b2[1])).epsilon(1e-6));
}

TEST_CASE("channel gate rejects mismatched shapes") {
    CHECK_THROWS_AS(ChannelGate(10, 4), ConfigError);
    ChannelGate gate(8, 4);
    CHECK_THROWS(gate->forward(torch::randn({1, 6, 4, 4})));
}

TEST_CASE("learnable block preserves shape and doubles width internally") {
    LearnableBlock block(8);
    auto y = block->forward(torch::randn({1, 8, 16, 16}));
    CHECK(y.sizes() == torch::IntArrayRef({1, 8, 16, 16}));
    auto* first = block->body[0]->as<torch::nn::Conv2d>();
    REQUIRE(first != nullptr);
    CHECK(first->options.out_channels() == 16);
    CHECK_THROWS(block->forward(torch::randn({1, 4, 16, 16})));
}

TEST_CASE("learnable block preserves every spatial size") {
    LearnableBlock block(4);
    for (int64_t h = 1; h <= 9; ++h) {
        for (int64_t w = 1; w <= 9; w += 2) {
            auto y = block->forward(torch::randn({2, 4, h, w}));
            CHECK(y.sizes() == torch::IntArrayRef({2, 4, h, w}));
        }
    }
}

TEST_CASE("mask smoothing keeps constant masks constant") {
    auto ones = smooth_and_resize_mask(torch::ones({1, 1, 16, 16}), 16, 16);
    CHECK(torch::allclose(ones.mask, torch::ones({1, 1, 16, 16}), 0, 1e-6));
    CHECK(torch::allclose(ones.complement, torch::zeros({1, 1, 16, 16}), 0, 1e-6));
    auto zeros = smooth_and_resize_mask(torch::zeros({1, 1, 16, 16}), 16, 16);
    CHECK(torch::allclose(zeros.mask, torch::zeros({1, 1, 16, 16}), 0, 1e-6));
}

TEST_CASE("a single pixel smooths into the kernel stamp") {
    auto mask = torch::zeros({1, 1, 16, 16}, torch::kFloat64);
    mask[0][0][8][8] = 1.0;
    auto out = smooth_and_resize_mask(mask, 16, 16).mask;

    // Independent stamp: exp(-(dx^2+dy^2)/(2 sigma^2)) normalized over 7x7.
    const double sigma = 7.0 / 6.0;
    double stamp[7][7];
    double total = 0.0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            stamp[dy + 3][dx + 3] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            total += stamp[dy + 3][dx + 3];
        }
    double max_err = 0.0;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            const bool inside = std::abs(i - 8) <= 3 && std::abs(j - 8) <= 3;
            const double expect = inside ? stamp[i - 8 + 3][j - 8 + 3] / total : 0.0;
            max_err = std::max(max_err, std::abs(out[0][0][i][j].item<double>() - expect));
        }
    CHECK(max_err < 1e-12);
    CHECK(out.sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("smoothed mask and complement partition unity for binary masks") {
    auto mask = s2am::testing::random_binary_mask(2, 32, 32, 5, torch::kFloat64);
    for (int64_t size : {32, 16, 8, 4}) {
        auto pair = smooth_and_resize_mask(mask, size, size);
        CHECK(torch::all(pair.mask >= 0).item<bool>());
        CHECK(torch::all(pair.mask <= 1).item<bool>());
        CHECK(torch::allclose(pair.mask + pair.complement, torch::ones_like(pair.mask), 0, 1e-12));
    }
}

TEST_CASE("mask smoothing rejects non-finite values") {
    auto mask = torch::zeros({1, 1, 8, 8});
    mask[0][0][2][2] = std::nan("");
    CHECK_THROWS_AS(smooth_and_resize_mask(mask, 8, 8), DataError);
}

TEST_CASE("channel pooling takes the max and mean planes") {
    auto base = torch::rand({2, 2, 6, 6});
    auto x = torch::cat({std::get<0>(base.max(1, true)) + 1.0 + torch::rand({2, 1, 6, 6}), base}, 1);
    auto pooled = channel_pool(x);
    REQUIRE(pooled.sizes() == torch::IntArrayRef({2, 2, 6, 6}));
    auto xa = x.accessor<float, 4>();
    auto pa = pooled.accessor<float, 4>();
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                CHECK(pa[n][0][i][j] == xa[n][0][i][j]);
                const double mean = (double(xa[n][0][i][j]) + xa[n][1][i][j] + xa[n][2][i][j]) / 3.0;
                CHECK(pa[n][1][i][j] == doctest::Approx(mean).epsilon(1e-6));
            }
}

TEST_CASE("spatial attention outputs complementary maps in (0,1)") {
    torch::manual_seed(4);
    SpatialAttention sa;
    init_weights(*sa);
    auto pair = sa->forward(torch::randn({2, 5, 12, 12}) * 4.0);
    CHECK(torch::all(pair.mask > 0).item<bool>());
    CHECK(torch::all(pair.mask < 1).item<bool>());
    CHECK(torch::allclose(pair.mask + pair.complement, torch::ones_like(pair.mask), 0, 1e-7));

    torch::NoGradGuard no_grad;
    for (auto& p : sa->parameters()) p.zero_();
    auto half = sa->forward(torch::randn({1, 5, 12, 12}));
    CHECK(torch::all(half.mask == 0.5).item<bool>());
    CHECK(torch::all(half.complement == 0.5).item<bool>());
}

TEST_CASE("S2AM matches the per-pixel composition with stubbed gates") {
    auto cfg = stub_config(4);
    S2AM module(cfg);
    stub_gate(module->gate_bg, 0.25);
    stub_gate(module->gate_mix, 0.5);
    stub_gate(module->gate_fg, 0.75);
    auto x = torch::randn({1, 4, 8, 8});
    auto masks = MaskPair::from_mask(s2am::testing::random_binary_mask(1, 8, 8, 9));
    auto y = module->forward(x, masks);
    auto expect = eq1_oracle(x, masks.mask, masks.complement, 0.25, 0.5, 0.75, true);
    CHECK((y.to(torch::kFloat64) - expect).abs().max().item<double>() <= 1e-6);
}

TEST_CASE("S2AM degenerate masks select one branch") {
    torch::manual_seed(12);
    S2AMConfig cfg;
    cfg.channels = 8;
    cfg.reduction = 4;
    cfg.use_gaussian = false;
    S2AM module(cfg);
    module->eval();
    auto x = torch::randn({2, 8, 6, 6});

    auto y0 = module->forward(x, module->prepare_mask(torch::zeros({2, 1, 6, 6}), 6, 6));
    CHECK(torch::allclose(y0, x * module->gate_bg->forward(x), 0, 1e-6));

    auto y1 = module->forward(x, module->prepare_mask(torch::ones({2, 1, 6, 6}), 6, 6));
    auto branch = module->learnable->forward(x * module->gate_fg->forward(x)) + x * module->gate_mix->forward(x);
    CHECK(torch::allclose(y1, branch, 0, 1e-6));
}

TEST_CASE("fully ablated S2AM is the identity on binary masks") {
    S2AMConfig cfg;
    cfg.channels = 6;
    cfg.use_gates = false;
    cfg.use_gmix = false;
    cfg.use_learnable = false;
    cfg.use_gaussian = false;
    S2AM module(cfg);
    CHECK(module->parameters().empty());
    auto x = torch::randn({2, 6, 8, 8});
    auto mask = s2am::testing::random_binary_mask(2, 8, 8, 1);
    auto y = module->forward(x, module->prepare_mask(mask, 8, 8));
    CHECK(torch::equal(y, x));
}

TEST_CASE("S2AM preserves shape and rejects mismatched masks") {
    S2AMConfig cfg;
    cfg.channels = 16;
    S2AM module(cfg);
    auto x = torch::randn({2, 16, 10, 6});
    auto masks = module->prepare_mask(s2am::testing::random_binary_mask(2, 20, 12, 2), 10, 6);
    CHECK(module->forward(x, masks).sizes() == x.sizes());
    auto wrong = MaskPair::from_mask(torch::zeros({2, 1, 5, 3}));
    CHECK_THROWS_AS(module->forward(x, wrong), ContractError);
    CHECK_THROWS_AS(module->forward_maskfree(x), ContractError);
}

TEST_CASE("S2AM configuration is validated") {
    S2AMConfig cfg;
    cfg.channels = 20;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.channels = 32;
    cfg.gaussian_kernel = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.gaussian_kernel = 7;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.hidden_width() == 2);
}

TEST_CASE("mask-free S2AM with a saturated predictor keeps only the background branch") {
    auto cfg = stub_config(4);
    cfg.variant = Variant::mask_free;
    S2AM module(cfg);
    torch::manual_seed(8);
    auto x = torch::randn({1, 4, 8, 8});
    {
        torch::NoGradGuard no_grad;
        for (auto& p : module->spatial->parameters()) p.zero_();
        module->spatial->conv2->bias.fill_(-50.0);
    }
    auto [y, predicted] = module->forward_maskfree(x);
    CHECK(torch::allclose(y, x * module->gate_bg->forward(x), 0, 1e-4));
    auto direct = module->spatial->forward(x);
    CHECK(torch::equal(predicted.mask, direct.mask));
}

TEST_CASE("mask-free S2AM matches the per-pixel composition") {
    auto cfg = stub_config(4);
    cfg.variant = Variant::mask_free;
    S2AM module(cfg);
    stub_gate(module->gate_bg, 0.25);
    stub_gate(module->gate_mix, 0.5);
    stub_gate(module->gate_fg, 0.75);
    stub_spatial(module->spatial, 0.3);
    auto x = torch::randn({1, 4, 8, 8});
    auto [y, predicted] = module->forward_maskfree(x);
    CHECK(torch::allclose(predicted.mask, torch::full_like(predicted.mask, 0.3), 0, 1e-6));
    auto expect = eq1_oracle(x, predicted.mask, predicted.complement, 0.25, 0.5, 0.75, true);
    CHECK((y.to(torch::kFloat64) - expect).abs().max().item<double>() <= 1e-6);
}

TEST_CASE("gradients through S2AM match finite differences") {
    torch::manual_seed(21);
    S2AMConfig cfg;
    cfg.channels = 4;
    cfg.reduction = 2;
    S2AM module(cfg);
    init_weights(*module);
    module->to(torch::kFloat64);
    auto x = torch::randn({2, 4, 8, 8}, torch::kFloat64).requires_grad_(true);
    auto masks = module->prepare_mask(s2am::testing::random_binary_mask(2, 8, 8, 4, torch::kFloat64), 8, 8);
    auto loss = [&] { return weighted_sum(module->forward(x, masks)); };

    auto r = check_gradient(loss, x, "x");
    CHECK_MESSAGE(r.max_rel_err < 1e-3, r.worst);
    for (auto& item : module->named_parameters()) {
        auto p = item.value();
        auto rp = check_gradient(loss, p, item.key(), 6);
        CHECK_MESSAGE(rp.max_rel_err < 1e-3, rp.worst);
    }
}

TEST_CASE("gradients through mask-free S2AM match finite differences") {
    torch::manual_seed(22);
    S2AMConfig cfg;
    cfg.channels = 4;
    cfg.reduction = 2;
    cfg.variant = Variant::mask_free;
    S2AM module(cfg);
    init_weights(*module);
    module->to(torch::kFloat64);
    auto x = torch::randn({2, 4, 8, 8}, torch::kFloat64).requires_grad_(true);
    auto loss = [&] {
        auto [y, predicted] = module->forward_maskfree(x);
        return weighted_sum(y) + weighted_sum(predicted.mask, 5);
    };
    auto r = check_gradient(loss, x, "x");
    CHECK_MESSAGE(r.max_rel_err < 1e-3, r.worst);
    for (auto& item : module->spatial->named_parameters()) {
        auto rp = check_gradient(loss, item.value(), item.key(), 6);
        CHECK_MESSAGE(rp.max_rel_err < 1e-3, rp.worst);
    }
}

TEST_CASE("gate dump lists every channel of every gate") {
    S2AMConfig cfg;
    cfg.channels = 4;
    cfg.reduction = 2;
    S2AM module(cfg);
    std::vector<LevelGates> levels{{1, module->gate_responses(torch::randn({2, 4, 4, 4}))}};
    std::ostringstream out;
    write_gate_dump(out, levels);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "level,gate,sample,channel,weight");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3 * 2 * 4);
}

} // TEST_SUITE
