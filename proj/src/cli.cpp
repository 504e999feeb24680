#include "s2am/cli.hpp"

#include "s2am/config.hpp"
#include "s2am/datasynth.hpp"
#include "s2am/errors.hpp"
#include "s2am/harness.hpp"
#include "s2am/image.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace s2am::cli {

namespace fs = std::filesystem;
using config::RunConfig;

namespace {

// Flags shared by the commands that resolve a model configuration.
struct ModelFlags {
    std::string config_file;
    std::string task = "masked";
    std::optional<std::string> attachment;
    std::optional<std::string> architecture;
    std::string ablation = "none";
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<int> batch_size;

    void attach(CLI::App& cmd, bool training) {
        cmd.add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
        cmd.add_option("--task", task, "masked or maskfree")->capture_default_str();
        cmd.add_option("--attachment", attachment, "none, s2asc or s2ad");
        cmd.add_option("--architecture", architecture, "unet or copy_paste");
        cmd.add_option("--ablation", ablation,
                       "none, no_gates, no_gmix, no_gaussian, six_layers, no_learnable")
            ->capture_default_str();
        cmd.add_option("--seed", seed, "master seed");
        if (training) {
            cmd.add_option("--epochs", epochs, "number of epochs");
            cmd.add_option("--batch-size", batch_size, "batch size");
        }
    }

    RunConfig resolve() const {
        const auto variant = config::parse_variant(task);
        RunConfig cfg = config::default_run_config(variant);
        if (!config_file.empty()) {
            cfg = config::load_run_config(config_file, cfg);
        }
        cfg.model.variant = variant;
        if (attachment) {
            cfg.model.attachment = config::parse_attachment(*attachment);
        }
        if (architecture) {
            config::Json doc;
            doc["model"]["architecture"] = *architecture;
            cfg = config::apply_json(doc, cfg);
        }
        if (epochs) cfg.train.epochs = *epochs;
        if (seed) cfg.train.seed = *seed;
        if (batch_size) cfg.train.batch_size = *batch_size;
        cfg.model = harness::run_ablation(cfg.model, harness::parse_ablation(ablation));
        cfg.validate();
        return cfg;
    }
};

void echo_config(const RunConfig& cfg, const std::optional<fs::path>& dir) {
    const auto text = config::to_json(cfg).dump(2);
    std::cout << text << '\n';
    if (dir) {
        fs::create_directories(*dir);
        std::ofstream(*dir / "config.json", std::ios::trunc) << text << '\n';
    }
}

fs::path attention_path(const fs::path& out) {
    auto p = out;
    p.replace_extension();
    p += ".attention.png";
    return p;
}

void print_table(const std::string& label, const metrics::MetricReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-24s %10s %8s %8s\n%-24s %10.4f %8.4f %8.2f\n", "method", "MSE",
                  "SSIM", "PSNR", label.c_str(), r.mse, r.ssim, r.psnr);
    std::cout << buf;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Spatial-separated attention for image harmonization"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "build a synthetic composite dataset");
    std::string synth_src, synth_out, synth_config;
    std::uint64_t synth_seed = 0;
    double synth_threshold = datasynth::kDefaultAreaThreshold;
    double synth_split = 0.95;
    int synth_size = 0;
    synth->add_option("--src", synth_src, "source dir with images/ and masks/")->required();
    synth->add_option("--out", synth_out, "output dataset dir")->required();
    synth->add_option("--seed", synth_seed, "master seed")->capture_default_str();
    synth->add_option("--threshold", synth_threshold, "minimum mask area fraction")->capture_default_str();
    synth->add_option("--split", synth_split, "train fraction")->capture_default_str();
    synth->add_option("--size", synth_size, "resize sources to size x size (0 keeps)")->capture_default_str();
    synth->add_option("--config", synth_config, "JSON config; its perturb section is used")
        ->check(CLI::ExistingFile);

    // scenes
    auto* scenes = app.add_subcommand("scenes", "write procedural source scenes");
    datasynth::SceneOptions scene_opts;
    std::string scenes_out;
    scenes->add_option("--out", scenes_out, "output source dir")->required();
    scenes->add_option("--count", scene_opts.count)->capture_default_str();
    scenes->add_option("--size", scene_opts.size)->capture_default_str();
    scenes->add_option("--seed", scene_opts.seed)->capture_default_str();
    scenes->add_option("--min-area", scene_opts.min_area)->capture_default_str();
    scenes->add_option("--max-area", scene_opts.max_area)->capture_default_str();

    // init
    auto* init = app.add_subcommand("init", "write an untrained checkpoint");
    ModelFlags init_flags;
    init_flags.attach(*init, false);
    std::string init_out;
    init->add_option("--out", init_out, "checkpoint stem (writes <stem>.ckpt and <stem>.json)")->required();

    // train
    auto* train = app.add_subcommand("train", "train a harmonization network");
    ModelFlags train_flags;
    train_flags.attach(*train, true);
    std::string train_data, train_out, train_resume;
    train->add_option("--data", train_data, "dataset dir (train/ and optional test/)")->required();
    train->add_option("--out", train_out, "run output dir")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from")->check(CLI::ExistingFile);

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--split", eval_split)->capture_default_str();
    eval->add_option("--out", eval_out, "report dir (default: <checkpoint dir>/eval_<split>)");

    // harmonize
    auto* harm = app.add_subcommand("harmonize", "harmonize one image");
    std::string harm_ckpt, harm_image, harm_mask, harm_out;
    harm->add_option("--checkpoint", harm_ckpt)->required();
    harm->add_option("--image", harm_image)->required();
    harm->add_option("--mask", harm_mask, "spliced-region mask (masked task)");
    harm->add_option("--out", harm_out)->required();

    // gates
    auto* gates = app.add_subcommand("gates", "dump per-level channel gate responses as CSV");
    std::string gates_ckpt, gates_image, gates_mask, gates_out;
    gates->add_option("--checkpoint", gates_ckpt)->required();
    gates->add_option("--image", gates_image)->required();
    gates->add_option("--mask", gates_mask);
    gates->add_option("--out", gates_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*synth) {
            datasynth::GenerateOptions opts;
            if (!synth_config.empty()) {
                opts.perturb = config::load_run_config(synth_config, RunConfig{}).perturb;
            }
            opts.source_dir = synth_src;
            opts.out_dir = synth_out;
            opts.perturb.seed = synth_seed;
            opts.threshold = synth_threshold;
            opts.train_ratio = synth_split;
            opts.size = synth_size;
            opts.validate();
            RunConfig echo;
            echo.perturb = opts.perturb;
            config::Json doc;
            doc["perturb"] = config::to_json(echo)["perturb"];
            doc["synth"] = {{"src", synth_src}, {"threshold", synth_threshold},
                            {"split", synth_split}, {"size", synth_size}};
            std::cout << doc.dump(2) << '\n';
            fs::create_directories(opts.out_dir);
            std::ofstream(opts.out_dir / "config.json", std::ios::trunc) << doc.dump(2) << '\n';
            const auto manifest = datasynth::generate_dataset(opts);
            std::cout << "generated " << manifest.samples.size() << " samples, skipped "
                      << manifest.skipped.size() << '\n';
        } else if (*scenes) {
            datasynth::write_procedural_sources(scenes_out, scene_opts);
            std::cout << "wrote " << scene_opts.count << " scenes to " << scenes_out << '\n';
        } else if (*init) {
            auto cfg = init_flags.resolve();
            echo_config(cfg, std::nullopt);
            torch::manual_seed(cfg.train.seed);
            auto net = backbone::build_network(cfg.model);
            harness::save_model(init_out, cfg, net);
            std::cout << "wrote " << init_out << ".ckpt\n";
        } else if (*train) {
            auto cfg = train_flags.resolve();
            echo_config(cfg, fs::path(train_out));
            std::optional<fs::path> resume;
            if (!train_resume.empty()) {
                resume = train_resume;
            }
            auto result = harness::train(cfg, train_data, train_out, resume, [](const harness::LossRow& row) {
                std::printf("epoch %d step %lld total %.6f pixel %.6f attention %.6f\n", row.epoch,
                            static_cast<long long>(row.step), row.parts.total, row.parts.pixel,
                            row.parts.attention);
            });
            std::cout << "last checkpoint: " << result.last_checkpoint.string() << '\n';
        } else if (*eval) {
            if (!fs::exists(eval_ckpt)) {
                throw DataError("checkpoint not found: " + eval_ckpt);
            }
            auto loaded = harness::load_model(eval_ckpt);
            const auto data = harness::load_split(eval_data, eval_split);
            auto report = harness::evaluate(loaded.net, data, true, loaded.config.train.batch_size);
            const fs::path out = eval_out.empty()
                                     ? fs::path(eval_ckpt).parent_path() / ("eval_" + eval_split)
                                     : fs::path(eval_out);
            fs::create_directories(out / "colormaps");
            echo_config(loaded.config, out);
            {
                std::ofstream csv(out / "metrics.csv", std::ios::trunc);
                harness::write_metrics_csv(csv, report);
            }
            for (size_t i = 0; i < report.samples.size(); ++i) {
                write_png(out / "colormaps" / (report.samples[i].id + ".png"),
                          difference_colormap(report.outputs[i], data.targets[i], 10.0));
            }
            print_table(fs::path(eval_ckpt).stem().string(), report.mean);
        } else if (*harm) {
            auto loaded = harness::load_model(harm_ckpt);
            const auto image = read_png(harm_image, 3);
            std::optional<Image8> mask;
            if (!harm_mask.empty()) {
                mask = read_png(harm_mask, 1);
            }
            if (loaded.config.model.variant == attention::Variant::masked && !mask) {
                throw UsageError("this checkpoint was trained for the masked task; --mask is required");
            }
            auto result = harness::harmonize(loaded.net, image, mask ? &*mask : nullptr);
            write_png(harm_out, result.output);
            if (result.attention) {
                write_png(attention_path(harm_out), *result.attention);
            }
        } else if (*gates) {
            auto loaded = harness::load_model(gates_ckpt);
            const auto image = read_png(gates_image, 3);
            auto input = images_to_tensor(std::span<const Image8>(&image, 1));
            torch::Tensor mask_tensor;
            if (!gates_mask.empty()) {
                const auto mask = read_png(gates_mask, 1);
                mask_tensor = masks_to_tensor(std::span<const Image8>(&mask, 1));
            } else if (loaded.config.model.variant == attention::Variant::masked) {
                throw UsageError("this checkpoint was trained for the masked task; --mask is required");
            } else {
                mask_tensor = torch::zeros({1, 1, input.size(2), input.size(3)});
            }
            torch::NoGradGuard no_grad;
            const auto levels = loaded.net->gate_responses(input, mask_tensor);
            std::ofstream out(gates_out, std::ios::trunc);
            attention::write_gate_dump(out, levels);
        }
    } catch (const EmptyResultError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitEmpty;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitOk;
}

} // namespace s2am::cli
