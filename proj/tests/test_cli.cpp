#include "s2am/cli.hpp"
#include "s2am/config.hpp"
#include "s2am/harness.hpp"
#include "s2am/metrics.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace s2am;
namespace fs = std::filesystem;
using s2am::testing::read_bytes;
using s2am::testing::scratch_dir;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "s2am");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    CliResult r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string p(const fs::path& path) { return path.string(); }

// Sources, a synthesized dataset (6 train / 2 test at 32x32) and a tiny run config.
struct Workspace {
    fs::path root;
    fs::path data;
    fs::path config;

    Workspace() {
        root = scratch_dir("cli");
        data = root / "data";
        config = root / "tiny.json";
        REQUIRE(run_cli({"scenes", "--out", p(root / "src"), "--count", "8", "--size", "32", "--seed", "2"}).code ==
                cli::kExitOk);
        REQUIRE(run_cli({"synth", "--src", p(root / "src"), "--out", p(data), "--seed", "3", "--split", "0.75"})
                    .code == cli::kExitOk);
        std::ofstream(config) << R"({"model": {"depth": 5, "base_channels": 8, "reduction": 4},
                                     "loss": {"discriminator_channels": 8},
                                     "train": {"batch_size": 4}})";
    }
    ~Workspace() { fs::remove_all(root); }
};

Workspace& workspace() {
    static Workspace ws;
    return ws;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a manifest and is reproducible") {
    auto& ws = workspace();
    CHECK(fs::exists(ws.data / "manifest.csv"));
    CHECK(fs::exists(ws.data / "config.json"));
    auto again = run_cli({"synth", "--src", p(ws.root / "src"), "--out", p(ws.root / "again"), "--seed", "3",
                          "--split", "0.75"});
    CHECK(again.code == cli::kExitOk);
    CHECK(read_bytes(ws.data / "manifest.csv") == read_bytes(ws.root / "again" / "manifest.csv"));
    auto bad = run_cli({"synth", "--src", p(ws.root / "src"), "--out", p(ws.root / "bad"), "--threshold", "1.01"});
    CHECK(bad.code == cli::kExitError);
}

TEST_CASE("synth with nothing above the threshold reports an empty result") {
    auto& ws = workspace();
    auto r = run_cli({"synth", "--src", p(ws.root / "src"), "--out", p(ws.root / "none"), "--threshold", "0.99"});
    CHECK(r.code == cli::kExitEmpty);
}

TEST_CASE("usage errors") {
    CHECK(run_cli({}).code == cli::kExitError);
    CHECK(run_cli({"bogus"}).code == cli::kExitError);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
    auto& ws = workspace();
    auto r = run_cli({"train", "--task", "maskfree", "--attachment", "s2asc", "--data", p(ws.data), "--out",
                      p(ws.root / "never")});
    CHECK(r.code == cli::kExitError);
    CHECK(r.err.find("s2ad") != std::string::npos);
    CHECK(run_cli({"train", "--ablation", "nope", "--data", p(ws.data), "--out", p(ws.root / "never")}).code ==
          cli::kExitError);
}

TEST_CASE("train echoes the ablated configuration and completes one epoch") {
    auto& ws = workspace();
    const auto out = ws.root / "run_no_gmix";
    auto r = run_cli({"train", "--config", p(ws.config), "--ablation", "no_gmix", "--epochs", "1", "--data",
                      p(ws.data), "--out", p(out)});
    CHECK(r.code == cli::kExitOk);
    std::ifstream in(out / "config.json");
    const auto echoed = config::Json::parse(in);
    CHECK(echoed["model"]["use_gmix"] == false);
    CHECK(echoed["model"]["use_gates"] == true);
    CHECK(fs::exists(out / "checkpoints" / "epoch_0001.ckpt"));
    CHECK(fs::exists(out / "losses.csv"));
    CHECK(fs::exists(out / "metrics.csv"));
}

TEST_CASE("eval of the identity model prints the offline MSE") {
    auto& ws = workspace();
    const auto stem = ws.root / "identity";
    REQUIRE(run_cli({"init", "--architecture", "copy_paste", "--out", p(stem)}).code == cli::kExitOk);
    const auto out = ws.root / "eval_identity";
    auto r = run_cli({"eval", "--checkpoint", p(stem) + ".ckpt", "--data", p(ws.data), "--out", p(out)});
    REQUIRE(r.code == cli::kExitOk);

    auto test = harness::load_split(ws.data, "test");
    double total = 0.0;
    for (int64_t i = 0; i < test.size(); ++i) total += metrics::mse(test.composites[i], test.targets[i]);
    char expect[64];
    std::snprintf(expect, sizeof(expect), "%.4f", total / static_cast<double>(test.size()));
    CHECK(r.out.find(expect) != std::string::npos);

    int maps = 0;
    for (const auto& e : fs::directory_iterator(out / "colormaps")) maps += e.path().extension() == ".png";
    CHECK(maps == test.size());
    CHECK(fs::exists(out / "metrics.csv"));
    CHECK(fs::exists(out / "config.json"));

    fs::create_directories(ws.root / "empty");
    CHECK(run_cli({"eval", "--checkpoint", p(stem) + ".ckpt", "--data", p(ws.root / "empty")}).code ==
          cli::kExitError);
    CHECK(run_cli({"eval", "--checkpoint", p(ws.root / "absent.ckpt"), "--data", p(ws.data)}).code ==
          cli::kExitError);
}

TEST_CASE("harmonize in the masked task keeps the background") {
    auto& ws = workspace();
    const auto stem = ws.root / "masked";
    REQUIRE(run_cli({"init", "--config", p(ws.config), "--out", p(stem)}).code == cli::kExitOk);
    const auto image = ws.data / "train" / "composite";
    const auto first = fs::directory_iterator(image)->path();
    const auto mask = ws.data / "train" / "mask" / first.filename();
    const auto out = ws.root / "harmonized.png";
    auto r = run_cli({"harmonize", "--checkpoint", p(stem) + ".ckpt", "--image", p(first), "--mask", p(mask),
                      "--out", p(out)});
    REQUIRE(r.code == cli::kExitOk);
    const auto in_img = read_png(first, 3);
    const auto out_img = read_png(out, 3);
    const auto m = read_png(mask, 1);
    bool background_equal = true;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x) == 0)
                for (int c = 0; c < 3; ++c) background_equal &= in_img.at(y, x, c) == out_img.at(y, x, c);
    CHECK(background_equal);

    CHECK(run_cli({"harmonize", "--checkpoint", p(stem) + ".ckpt", "--image", p(first), "--out", p(out)}).code ==
          cli::kExitError);

    const auto odd = ws.root / "odd.png";
    const auto odd_mask = ws.root / "odd_mask.png";
    write_png(odd, s2am::testing::random_image(48, 32, 3, 1));
    write_png(odd_mask, Image8(48, 32, 1));
    auto bad = run_cli({"harmonize", "--checkpoint", p(stem) + ".ckpt", "--image", p(odd), "--mask",
                        p(odd_mask), "--out", p(ws.root / "odd_out.png")});
    CHECK(bad.code == cli::kExitError);
    CHECK(bad.err.find("pad to 64x32") != std::string::npos);
}

TEST_CASE("harmonize in the mask-free task writes the attention map") {
    auto& ws = workspace();
    const auto stem = ws.root / "maskfree";
    REQUIRE(run_cli({"init", "--config", p(ws.config), "--task", "maskfree", "--out", p(stem)}).code ==
            cli::kExitOk);
    const auto first = fs::directory_iterator(ws.data / "train" / "composite")->path();
    const auto out = ws.root / "free.png";
    auto r = run_cli({"harmonize", "--checkpoint", p(stem) + ".ckpt", "--image", p(first), "--out", p(out)});
    CHECK(r.code == cli::kExitOk);
    CHECK(fs::exists(out));
    CHECK(fs::exists(ws.root / "free.attention.png"));
}

TEST_CASE("gates dumps per-level channel responses") {
    auto& ws = workspace();
    const auto stem = ws.root / "gates_model";
    REQUIRE(run_cli({"init", "--config", p(ws.config), "--out", p(stem)}).code == cli::kExitOk);
    const auto first = fs::directory_iterator(ws.data / "train" / "composite")->path();
    const auto mask = ws.data / "train" / "mask" / first.filename();
    const auto csv = ws.root / "gates.csv";
    REQUIRE(run_cli({"gates", "--checkpoint", p(stem) + ".ckpt", "--image", p(first), "--mask", p(mask), "--out",
                     p(csv)})
                .code == cli::kExitOk);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "level,gate,sample,channel,weight");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    // Levels 1-3 at widths 8, 16, 32 with three gates each.
    CHECK(rows == 3 * (8 + 16 + 32));
}

} // TEST_SUITE
