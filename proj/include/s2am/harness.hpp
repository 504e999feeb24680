#pragma once

// Training and evaluation loops, post-processing, checkpoints and ablations.

#include "s2am/backbone.hpp"
#include "s2am/checkpoint.hpp"
#include "s2am/config.hpp"
#include "s2am/image.hpp"
#include "s2am/losses.hpp"
#include "s2am/metrics.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace s2am::harness {

using backbone::Harmonizer;
using backbone::ModelConfig;
using config::RunConfig;

/// One split of a generated dataset, fully loaded.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<Image8> composites;
    std::vector<Image8> masks;
    std::vector<Image8> targets;

    int64_t size() const { return static_cast<int64_t>(ids.size()); }
    bool empty() const { return ids.empty(); }
};

/// Reads data_dir/<split>/{composite,mask,target}/<id>.png. Throws DataError
/// listing every missing file, or when the split holds no samples.
Dataset load_split(const std::filesystem::path& data_dir, const std::string& split);
bool has_split(const std::filesystem::path& data_dir, const std::string& split);

struct Batch {
    torch::Tensor composite; ///< (N,3,H,W) in [-1,1]
    torch::Tensor mask;      ///< (N,1,H,W) in {0,1}
    torch::Tensor target;    ///< (N,3,H,W) in [-1,1]
};

Batch make_batch(const Dataset& data, const std::vector<int64_t>& indices,
                 torch::Dtype dtype = torch::kFloat32);

/// mask * pred + (1 - mask) * input.
torch::Tensor postprocess_masked(const torch::Tensor& pred, const torch::Tensor& input,
                                 const torch::Tensor& mask);

/// pred * Up(m2s) + input * (1 - Up(m2s)); m2s must be at half the input resolution.
torch::Tensor postprocess_maskfree(const torch::Tensor& pred, const torch::Tensor& input,
                                   const torch::Tensor& m2s);

enum class Ablation { none, no_gates, no_gmix, no_gaussian, six_layers, no_learnable };

/// Throws UsageError for unknown names.
Ablation parse_ablation(const std::string& name);
std::string to_string(Ablation ablation);
ModelConfig run_ablation(ModelConfig base, Ablation ablation);

struct LossRow {
    int64_t step = 0;
    int epoch = 0;
    losses::LossBreakdown parts;
    double learning_rate = 0.0;
};

struct EpochMetrics {
    int epoch = 0;
    metrics::MetricReport report;
};

struct TrainState {
    int epoch = 0;
    int64_t global_step = 0;
    std::uint64_t master_seed = 0;
    std::vector<EpochMetrics> metric_history;
};

/// True when S2AM_DETERMINISTIC=1.
bool deterministic_from_env();

/// Seeds torch; in deterministic mode also pins one thread and deterministic kernels.
void configure_runtime(std::uint64_t seed, bool deterministic);

/// Adam with the training defaults (betas 0.9/0.999, eps 1e-8, no weight decay).
std::unique_ptr<torch::optim::Adam> make_optimizer(std::vector<torch::Tensor> params,
                                                   double learning_rate);

/// Generator, optional discriminator, their Adam optimizers and the step counter.
class Trainer {
public:
    explicit Trainer(RunConfig cfg);

    /// One optimization step (discriminator first, then generator).
    losses::LossBreakdown step(const Batch& batch);

    /// Loss terms for a batch without updating anything.
    losses::LossBreakdown measure(const Batch& batch);

    Harmonizer& generator() { return generator_; }
    const RunConfig& config() const { return cfg_; }
    TrainState& state() { return state_; }
    const TrainState& state() const { return state_; }
    double learning_rate() const;

    /// Writes <stem>.ckpt and the <stem>.json sidecar.
    void save(const std::filesystem::path& stem) const;
    /// Restores parameters, optimizer moments and state. Throws ConfigError listing
    /// the differing keys when the checkpoint's model/loss/optimizer settings differ.
    void load(const std::filesystem::path& checkpoint);

private:
    struct Terms {
        torch::Tensor pixel;
        std::optional<torch::Tensor> attention;
        torch::Tensor adversarial_g;
        torch::Tensor adversarial_d;
        torch::Tensor prediction;
    };
    Terms generator_terms(const Batch& batch);
    torch::Tensor discriminator_input(const Batch& batch, const torch::Tensor& image) const;

    RunConfig cfg_;
    Harmonizer generator_{nullptr};
    losses::PatchDiscriminator discriminator_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::Adam> opt_d_;
    TrainState state_;
};

struct TrainResult {
    TrainState state;
    std::filesystem::path last_checkpoint;
    std::vector<LossRow> losses;
};

/// Trains on data_dir/train for cfg.train.epochs epochs, writing
/// out_dir/{config.json,losses.csv,metrics.csv,checkpoints/epoch_NNNN.{ckpt,json}}.
/// With `resume`, continues after the checkpoint's epoch.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt,
                  const std::function<void(const LossRow&)>& on_step = {});

struct SampleReport {
    std::string id;
    metrics::MetricReport metrics;
};

struct EvaluationReport {
    std::vector<SampleReport> samples;
    metrics::MetricReport mean;
    /// Post-processed outputs, filled when requested.
    std::vector<Image8> outputs;
};

/// Runs the network in evaluation mode with task post-processing and scores
/// each sample against its target on the 8-bit scale.
EvaluationReport evaluate(Harmonizer& net, const Dataset& data, bool keep_outputs = false,
                          int batch_size = 8);

struct LoadedModel {
    RunConfig config;
    Harmonizer net{nullptr};
    TrainState state;
};

/// Loads a checkpoint written by Trainer::save (or save_model).
LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Writes an untrained (or any) network as a checkpoint without optimizer state.
void save_model(const std::filesystem::path& stem, const RunConfig& cfg, Harmonizer& net,
                const TrainState& state = {});

/// Evaluates a checkpoint on one split of a dataset directory.
EvaluationReport evaluate(const std::filesystem::path& checkpoint,
                          const std::filesystem::path& data_dir, const std::string& split = "test",
                          bool keep_outputs = false);

struct Harmonization {
    Image8 output;
    /// Mask-free only: finest predicted map at full resolution.
    std::optional<Image8> attention;
};

/// Single-image inference with post-processing. The masked task requires a mask.
/// Throws ContractError naming the required padding when the size does not fit the depth.
Harmonization harmonize(Harmonizer& net, const Image8& image, const Image8* mask);

void write_loss_csv(std::ostream& out, const std::vector<LossRow>& rows, bool header);
void write_metrics_csv(std::ostream& out, const EvaluationReport& report);

/// Checkpoint path helpers: <stem>.ckpt <-> <stem>.json.
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

} // namespace s2am::harness
