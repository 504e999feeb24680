#include "s2am/datasynth.hpp"

#include "s2am/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

namespace s2am::datasynth {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Uniform in [0,1) from the top 53 bits, independent of the standard library's distributions.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void check_range(const Range& r, const char* name) {
    if (!(r.low > 0.0) || !(r.high > 0.0) || r.low > r.high || r.low > 1.0 || r.high < 1.0) {
        throw ConfigError(std::string(name) + " range must satisfy 0 < low <= 1 <= high");
    }
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

void PerturbSpec::validate() const {
    check_range(brightness, "brightness");
    check_range(contrast, "contrast");
    check_range(saturation, "saturation");
}

PerturbFactors draw_factors(const PerturbSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    PerturbFactors f;
    f.brightness = uniform(rng, spec.brightness.low, spec.brightness.high);
    f.contrast = uniform(rng, spec.contrast.low, spec.contrast.high);
    f.saturation = uniform(rng, spec.saturation.low, spec.saturation.high);
    return f;
}

Image8 apply_perturbation(const Image8& image, const PerturbFactors& factors) {
    if (image.channels != 3) {
        throw ContractError("appearance perturbation expects an RGB image");
    }
    const size_t n = static_cast<size_t>(image.width) * image.height;
    std::vector<double> v(image.pixels.begin(), image.pixels.end());

    for (auto& x : v) {
        x = clamp255(x * factors.brightness);
    }

    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean += luma(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
    }
    mean /= static_cast<double>(n);
    for (auto& x : v) {
        x = clamp255(mean + factors.contrast * (x - mean));
    }

    for (size_t i = 0; i < n; ++i) {
        const double l = luma(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        for (size_t c = 0; c < 3; ++c) {
            v[3 * i + c] = clamp255(l + factors.saturation * (v[3 * i + c] - l));
        }
    }

    Image8 out(image.width, image.height, 3);
    for (size_t i = 0; i < v.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v[i]));
    }
    return out;
}

Image8 perturb_appearance(const Image8& image, const PerturbSpec& spec) {
    return apply_perturbation(image, draw_factors(spec));
}

CompositeSample composite(const Image8& target, const Image8& perturbed, const Image8& mask,
                          std::string id) {
    if (!target.same_shape(perturbed) || mask.channels != 1 || mask.width != target.width ||
        mask.height != target.height) {
        throw DataError("composite inputs have mismatched dimensions");
    }
    CompositeSample s;
    s.id = std::move(id);
    s.target = target;
    s.composite = target;
    s.mask = Image8(mask.width, mask.height, 1);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(y, x) == 0) {
                continue;
            }
            s.mask.at(y, x) = 255;
            for (int c = 0; c < target.channels; ++c) {
                s.composite.at(y, x, c) = perturbed.at(y, x, c);
            }
        }
    }
    return s;
}

double area_fraction(const Image8& mask) {
    if (mask.empty()) {
        return 0.0;
    }
    const auto on = std::count_if(mask.pixels.begin(), mask.pixels.end(),
                                  [](std::uint8_t v) { return v != 0; });
    return static_cast<double>(on) / static_cast<double>(mask.pixels.size());
}

bool area_filter(const Image8& mask, double threshold) { return area_fraction(mask) >= threshold; }

std::uint64_t sample_seed(std::uint64_t master_seed, const std::string& id) {
    return splitmix64(master_seed ^ fnv1a(id));
}

void GenerateOptions::validate() const {
    perturb.validate();
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ConfigError("area threshold must be within [0, 1]");
    }
    if (!(train_ratio >= 0.0 && train_ratio <= 1.0)) {
        throw ConfigError("train split ratio must be within [0, 1]");
    }
    if (size < 0) {
        throw ConfigError("size must be >= 0");
    }
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write manifest " + path.string());
    }
    out << "id,split,seed,b_factor,c_factor,s_factor,area_frac\n";
    auto row = [&](const ManifestEntry& e) {
        out << e.id << ',' << e.split << ',' << e.seed << ',' << format_double(e.factors.brightness)
            << ',' << format_double(e.factors.contrast) << ',' << format_double(e.factors.saturation)
            << ',' << format_double(e.area_fraction) << '\n';
    };
    for (const auto& e : manifest.samples) {
        row(e);
    }
    for (const auto& e : manifest.skipped) {
        row(e);
    }
}

Manifest generate_dataset(const GenerateOptions& options) {
    options.validate();
    const fs::path image_dir = options.source_dir / "images";
    const fs::path mask_dir = options.source_dir / "masks";
    if (!fs::is_directory(image_dir)) {
        throw DataError("missing source directory " + image_dir.string());
    }
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            ids.push_back(entry.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());

    Manifest manifest;
    std::vector<CompositeSample> accepted;
    for (const auto& id : ids) {
        const fs::path mask_path = mask_dir / (id + ".png");
        if (!fs::exists(mask_path)) {
            std::cerr << "warning: no mask for source " << id << ", skipped\n";
            continue;
        }
        Image8 image;
        Image8 mask;
        try {
            image = read_png(image_dir / (id + ".png"), 3);
            mask = read_png(mask_path, 1);
        } catch (const DataError& e) {
            std::cerr << "warning: " << e.what() << ", skipped\n";
            continue;
        }
        if (image.width != mask.width || image.height != mask.height) {
            std::cerr << "warning: image/mask size mismatch for " << id << ", skipped\n";
            continue;
        }
        if (options.size > 0) {
            image = resize_image(image, options.size, options.size, false);
            mask = resize_image(mask, options.size, options.size, true);
        }

        ManifestEntry entry;
        entry.id = id;
        entry.seed = sample_seed(options.perturb.seed, id);
        entry.area_fraction = area_fraction(mask);
        if (!area_filter(mask, options.threshold)) {
            entry.split = "skip";
            manifest.skipped.push_back(entry);
            continue;
        }
        PerturbSpec spec = options.perturb;
        spec.seed = entry.seed;
        entry.factors = draw_factors(spec);
        accepted.push_back(composite(image, apply_perturbation(image, entry.factors), mask, id));
        manifest.samples.push_back(entry);
    }
    if (accepted.empty()) {
        throw EmptyResultError("no source passed the area filter; nothing generated");
    }

    // Seeded Fisher-Yates over the accepted samples; the first n_train go to train.
    const auto n = accepted.size();
    const auto n_train = static_cast<size_t>(std::llround(options.train_ratio * static_cast<double>(n)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(splitmix64(options.perturb.seed ^ 0x5EED5EED5EED5EEDULL));
    for (size_t i = n; i > 1; --i) {
        const auto j = static_cast<size_t>(unit(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (size_t rank = 0; rank < n; ++rank) {
        manifest.samples[order[rank]].split = rank < n_train ? "train" : "test";
    }

    for (size_t i = 0; i < n; ++i) {
        const auto& s = accepted[i];
        const fs::path base = options.out_dir / manifest.samples[i].split;
        write_png(base / "composite" / (s.id + ".png"), s.composite);
        write_png(base / "mask" / (s.id + ".png"), s.mask);
        write_png(base / "target" / (s.id + ".png"), s.target);
    }
    fs::create_directories(options.out_dir);
    write_manifest(options.out_dir / "manifest.csv", manifest);
    return manifest;
}

void write_procedural_sources(const fs::path& dir, const SceneOptions& options) {
    if (options.count < 1 || options.size < 8) {
        throw ConfigError("procedural sources need count >= 1 and size >= 8");
    }
    if (!(options.min_area > 0.0 && options.min_area <= options.max_area && options.max_area < 0.8)) {
        throw ConfigError("procedural object area range must satisfy 0 < min <= max < 0.8");
    }
    const int size = options.size;
    for (int index = 0; index < options.count; ++index) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d", index);
        const std::string id = name;
        std::mt19937_64 rng(sample_seed(options.seed, id));

        std::array<std::array<double, 3>, 3> palette{};
        for (auto& color : palette) {
            for (auto& ch : color) {
                ch = uniform(rng, 40.0, 215.0);
            }
        }
        const double fx = uniform(rng, 0.5, 2.5) * 2.0 * std::numbers::pi / size;
        const double fy = uniform(rng, 0.5, 2.5) * 2.0 * std::numbers::pi / size;
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

        const double area = uniform(rng, options.min_area, options.max_area);
        const double aspect = uniform(rng, 0.7, 1.4);
        const double rx = std::sqrt(area * size * size / (std::numbers::pi * aspect));
        const double ry = std::min(aspect * rx, 0.5 * size);
        const double cx = rx < 0.5 * size ? uniform(rng, rx, size - rx) : 0.5 * size;
        const double cy = ry < 0.5 * size ? uniform(rng, ry, size - ry) : 0.5 * size;
        const double stripe_angle = uniform(rng, 0.0, std::numbers::pi);
        const double stripe_period = uniform(rng, 4.0, 9.0);

        Image8 image(size, size, 3);
        Image8 mask(size, size, 1);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dx = (x + 0.5 - cx) / rx;
                const double dy = (y + 0.5 - cy) / ry;
                const bool inside = dx * dx + dy * dy <= 1.0;
                std::array<double, 3> px{};
                if (inside) {
                    const double u = (x * std::cos(stripe_angle) + y * std::sin(stripe_angle)) / stripe_period;
                    const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u);
                    for (int c = 0; c < 3; ++c) {
                        px[c] = t * palette[1][c] + (1.0 - t) * palette[2][c];
                    }
                    mask.at(y, x) = 255;
                } else {
                    const double t = 0.5 + 0.5 * std::sin(fx * x + fy * y + phase);
                    for (int c = 0; c < 3; ++c) {
                        px[c] = t * palette[0][c] + (1.0 - t) * palette[1][c];
                    }
                }
                for (int c = 0; c < 3; ++c) {
                    const double noise = uniform(rng, -6.0, 6.0);
                    image.at(y, x, c) = static_cast<std::uint8_t>(std::lround(clamp255(px[c] + noise)));
                }
            }
        }
        write_png(dir / "images" / (id + ".png"), image);
        write_png(dir / "masks" / (id + ".png"), mask);
    }
}

} // namespace s2am::datasynth
