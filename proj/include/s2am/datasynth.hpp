#pragma once

// Synthetic harmonization triples: perturb the appearance of an image, paste the
// masked region back onto the original, keep masks covering enough of the frame.

#include "s2am/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace s2am::datasynth {

struct Range {
    double low = 0.5;
    double high = 1.5;
};

struct PerturbSpec {
    Range brightness{0.5, 1.5};
    Range contrast{0.5, 1.5};
    Range saturation{0.5, 1.5};
    std::uint64_t seed = 0;

    /// Ranges must be ordered, positive, and contain 1.
    void validate() const;
};

struct PerturbFactors {
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
};

/// Factors drawn uniformly from the spec's ranges, deterministic in spec.seed.
PerturbFactors draw_factors(const PerturbSpec& spec);

/// Brightness scale, then contrast about the mean luma of the image, then
/// saturation about each pixel's luma. Clamped to [0,255] after each stage.
Image8 apply_perturbation(const Image8& image, const PerturbFactors& factors);

/// draw_factors + apply_perturbation.
Image8 perturb_appearance(const Image8& image, const PerturbSpec& spec);

struct CompositeSample {
    Image8 composite;
    Image8 mask;
    Image8 target;
    std::string id;
};

/// composite = perturbed where mask != 0, target elsewhere. Mask is re-emitted as {0,255}.
CompositeSample composite(const Image8& target, const Image8& perturbed, const Image8& mask,
                          std::string id = {});

/// Fraction of nonzero mask pixels.
double area_fraction(const Image8& mask);

inline constexpr double kDefaultAreaThreshold = 0.15;

/// True iff area_fraction(mask) >= threshold (boundary inclusive).
bool area_filter(const Image8& mask, double threshold = kDefaultAreaThreshold);

/// Per-sample RNG seed derived from the master seed and the sample id.
std::uint64_t sample_seed(std::uint64_t master_seed, const std::string& id);

struct GenerateOptions {
    std::filesystem::path source_dir;
    std::filesystem::path out_dir;
    PerturbSpec perturb;
    double threshold = kDefaultAreaThreshold;
    /// Fraction of accepted samples placed in the train split.
    double train_ratio = 0.95;
    /// Square side length to resize sources to; 0 keeps the source size.
    int size = 0;

    void validate() const;
};

struct ManifestEntry {
    std::string id;
    /// "train", "test", or "skip".
    std::string split;
    std::uint64_t seed = 0;
    PerturbFactors factors;
    double area_fraction = 0.0;
};

struct Manifest {
    std::vector<ManifestEntry> samples;
    std::vector<ManifestEntry> skipped;
};

/// Reads source_dir/images/<id>.png paired with source_dir/masks/<id>.png and
/// writes out_dir/{train,test}/{composite,mask,target}/<id>.png plus manifest.csv.
/// Unpaired or unreadable sources are warned about and skipped; throws
/// EmptyResultError when nothing passes.
Manifest generate_dataset(const GenerateOptions& options);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct SceneOptions {
    int count = 8;
    int size = 64;
    std::uint64_t seed = 0;
    double min_area = 0.2;
    double max_area = 0.45;
};

/// Procedural source scenes (smooth colored backgrounds, textured objects, one
/// elliptical instance mask each) in the layout generate_dataset reads.
void write_procedural_sources(const std::filesystem::path& dir, const SceneOptions& options);

} // namespace s2am::datasynth
