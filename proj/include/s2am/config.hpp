#pragma once

// Run configuration document: one JSON tree covering model, losses, training
// and dataset perturbation. Unknown keys are rejected.

#include "s2am/backbone.hpp"
#include "s2am/datasynth.hpp"
#include "s2am/losses.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace s2am::config {

using Json = nlohmann::ordered_json;

struct TrainSettings {
    int epochs = 1;
    int batch_size = 8;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    bool deterministic = false;
    /// Save every n-th epoch (the last epoch is always saved); 0 saves only the last.
    int checkpoint_interval = 1;
    /// Evaluate on the test split after each epoch when it exists.
    bool eval_each_epoch = true;

    void validate() const;
};

struct RunConfig {
    backbone::ModelConfig model;
    losses::LossConfig loss;
    TrainSettings train;
    datasynth::PerturbSpec perturb;

    void validate() const;
};

/// Defaults for a task: the mask-free task uses s2ad and the GAN term.
RunConfig default_run_config(attention::Variant variant);

Json to_json(const RunConfig& cfg);

/// Overlays the keys present in `doc` onto `base`. Throws ConfigError naming the
/// first unknown key or mistyped value.
RunConfig apply_json(const Json& doc, RunConfig base);

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);

/// Dotted key paths whose values differ between two documents.
std::vector<std::string> differing_keys(const Json& a, const Json& b);

std::string to_string(attention::Variant v);
std::string to_string(backbone::Attachment a);
std::string to_string(backbone::Architecture a);
std::string to_string(losses::AttentionLossKind k);

/// Throw UsageError for unknown names.
attention::Variant parse_variant(const std::string& name);
backbone::Attachment parse_attachment(const std::string& name);

} // namespace s2am::config
