#include "s2am/harness.hpp"

#include "s2am/datasynth.hpp"
#include "s2am/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>

namespace s2am::harness {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using attention::Variant;
using config::Json;

namespace {

constexpr const char* kSidecarFormat = "s2am-checkpoint";
constexpr int kSidecarVersion = 1;

std::vector<std::string> list_ids(const fs::path& dir) {
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) {
        return ids;
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            ids.push_back(entry.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<int64_t> epoch_order(int64_t n, std::uint64_t seed, int epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        order[static_cast<size_t>(i)] = i;
    }
    std::mt19937_64 rng(datasynth::sample_seed(seed, "epoch/" + std::to_string(epoch)));
    for (int64_t i = n; i > 1; --i) {
        const auto u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const auto j = std::min<int64_t>(static_cast<int64_t>(u * static_cast<double>(i)), i - 1);
        std::swap(order[static_cast<size_t>(i - 1)], order[static_cast<size_t>(j)]);
    }
    return order;
}

void dump_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
               checkpoint::NamedTensors& out) {
    for (const auto& item : module.named_parameters()) {
        auto it = opt.state().find(item.value().unsafeGetTensorImpl());
        if (it == opt.state().end()) {
            continue;
        }
        const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
        out.emplace_back(prefix + item.key() + ".step", torch::scalar_tensor(st.step(), torch::kInt64));
        out.emplace_back(prefix + item.key() + ".exp_avg", st.exp_avg());
        out.emplace_back(prefix + item.key() + ".exp_avg_sq", st.exp_avg_sq());
    }
}

void restore_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const std::string& prefix,
                  const checkpoint::NamedTensors& tensors) {
    for (const auto& item : module.named_parameters()) {
        const auto base = prefix + item.key();
        if (!checkpoint::contains(tensors, base + ".step")) {
            continue;
        }
        auto st = std::make_unique<torch::optim::AdamParamState>();
        st->step(checkpoint::find(tensors, base + ".step").item<int64_t>());
        st->exp_avg(checkpoint::find(tensors, base + ".exp_avg").to(item.value().options()).clone());
        st->exp_avg_sq(checkpoint::find(tensors, base + ".exp_avg_sq").to(item.value().options()).clone());
        opt.state()[item.value().unsafeGetTensorImpl()] = std::move(st);
    }
}

// Settings that must agree between a checkpoint and a resumed run.
Json resume_signature(const RunConfig& cfg) {
    auto doc = config::to_json(cfg);
    Json sig;
    sig["model"] = doc["model"];
    sig["loss"] = doc["loss"];
    sig["train"] = {{"batch_size", doc["train"]["batch_size"]},
                    {"learning_rate", doc["train"]["learning_rate"]},
                    {"seed", doc["train"]["seed"]}};
    return sig;
}

Json state_json(const TrainState& state) {
    Json metrics = Json::array();
    for (const auto& m : state.metric_history) {
        metrics.push_back({{"epoch", m.epoch},
                           {"mse", m.report.mse},
                           {"ssim", m.report.ssim},
                           {"psnr", m.report.psnr}});
    }
    return {{"epoch", state.epoch},
            {"global_step", state.global_step},
            {"seed", state.master_seed},
            {"metrics", metrics}};
}

TrainState state_from_json(const Json& doc) {
    TrainState state;
    state.epoch = doc.at("epoch").get<int>();
    state.global_step = doc.at("global_step").get<int64_t>();
    state.master_seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& m : doc.at("metrics")) {
        EpochMetrics em;
        em.epoch = m.at("epoch").get<int>();
        em.report.mse = m.at("mse").get<double>();
        em.report.ssim = m.at("ssim").get<double>();
        em.report.psnr = m.at("psnr").get<double>();
        state.metric_history.push_back(em);
    }
    return state;
}

void write_sidecar(const fs::path& checkpoint, const RunConfig& cfg, const TrainState& state,
                   bool has_optimizer) {
    Json doc;
    doc["format"] = kSidecarFormat;
    doc["version"] = kSidecarVersion;
    doc["tensors"] = checkpoint.filename().string();
    doc["config"] = config::to_json(cfg);
    doc["state"] = state_json(state);
    doc["has_optimizer"] = has_optimizer;
    std::ofstream out(sidecar_path(checkpoint), std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write checkpoint metadata for " + checkpoint.string());
    }
    out << doc.dump(2) << '\n';
}

Json read_sidecar(const fs::path& checkpoint) {
    if (!fs::exists(checkpoint)) {
        throw DataError("checkpoint not found: " + checkpoint.string());
    }
    const auto meta = sidecar_path(checkpoint);
    std::ifstream in(meta);
    if (!in) {
        throw DataError("checkpoint metadata not found: " + meta.string());
    }
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse " + meta.string() + ": " + e.what());
    }
    if (doc.value("format", "") != kSidecarFormat) {
        throw DataError(meta.string() + " is not a checkpoint sidecar");
    }
    return doc;
}

fs::path checkpoint_file(const fs::path& stem) {
    auto p = stem;
    p += ".ckpt";
    return p;
}

Image8 slice_image(const torch::Tensor& batch, int64_t i) { return tensor_to_image(batch[i]); }

} // namespace

fs::path sidecar_path(const fs::path& checkpoint) {
    auto p = checkpoint;
    p.replace_extension(".json");
    return p;
}

bool has_split(const fs::path& data_dir, const std::string& split) {
    return !list_ids(data_dir / split / "composite").empty();
}

Dataset load_split(const fs::path& data_dir, const std::string& split) {
    const fs::path root = data_dir / split;
    Dataset data;
    data.ids = list_ids(root / "composite");
    if (data.ids.empty()) {
        throw DataError("no samples in " + (root / "composite").string());
    }
    std::vector<std::string> missing;
    for (const auto& id : data.ids) {
        for (const char* kind : {"mask", "target"}) {
            const auto p = root / kind / (id + ".png");
            if (!fs::exists(p)) {
                missing.push_back(p.string());
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing dataset files:";
        for (const auto& m : missing) {
            msg += "\n  " + m;
        }
        throw DataError(msg);
    }
    for (const auto& id : data.ids) {
        data.composites.push_back(read_png(root / "composite" / (id + ".png"), 3));
        data.masks.push_back(read_png(root / "mask" / (id + ".png"), 1));
        data.targets.push_back(read_png(root / "target" / (id + ".png"), 3));
        const auto& c = data.composites.back();
        if (!c.same_shape(data.targets.back()) || c.width != data.masks.back().width ||
            c.height != data.masks.back().height || !c.same_shape(data.composites.front())) {
            throw DataError("sample " + id + " has inconsistent dimensions");
        }
    }
    return data;
}

Batch make_batch(const Dataset& data, const std::vector<int64_t>& indices, torch::Dtype dtype) {
    std::vector<Image8> comp, mask, target;
    for (auto i : indices) {
        comp.push_back(data.composites.at(static_cast<size_t>(i)));
        mask.push_back(data.masks.at(static_cast<size_t>(i)));
        target.push_back(data.targets.at(static_cast<size_t>(i)));
    }
    return {images_to_tensor(comp, dtype), masks_to_tensor(mask, dtype), images_to_tensor(target, dtype)};
}

torch::Tensor postprocess_masked(const torch::Tensor& pred, const torch::Tensor& input,
                                 const torch::Tensor& mask) {
    if (pred.sizes() != input.sizes() || mask.dim() != 4 || mask.size(1) != 1 ||
        mask.size(0) != pred.size(0) || mask.size(2) != pred.size(2) || mask.size(3) != pred.size(3)) {
        throw ContractError("postprocess_masked shape mismatch");
    }
    return mask * pred + (1.0 - mask) * input;
}

torch::Tensor postprocess_maskfree(const torch::Tensor& pred, const torch::Tensor& input,
                                   const torch::Tensor& m2s) {
    if (pred.sizes() != input.sizes() || m2s.dim() != 4 || m2s.size(1) != 1 ||
        m2s.size(0) != pred.size(0) || 2 * m2s.size(2) != pred.size(2) ||
        2 * m2s.size(3) != pred.size(3)) {
        throw ContractError("postprocess_maskfree expects a map at half the image resolution, got " +
                            c10::str(m2s.sizes()) + " for image " + c10::str(pred.sizes()));
    }
    auto up = F::interpolate(m2s, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{pred.size(2), pred.size(3)})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    return pred * up + input * (1.0 - up);
}

Ablation parse_ablation(const std::string& name) {
    if (name == "none") return Ablation::none;
    if (name == "no_gates") return Ablation::no_gates;
    if (name == "no_gmix") return Ablation::no_gmix;
    if (name == "no_gaussian") return Ablation::no_gaussian;
    if (name == "six_layers") return Ablation::six_layers;
    if (name == "no_learnable") return Ablation::no_learnable;
    throw UsageError("unknown ablation '" + name +
                     "' (expected none, no_gates, no_gmix, no_gaussian, six_layers, no_learnable)");
}

std::string to_string(Ablation ablation) {
    switch (ablation) {
    case Ablation::none: return "none";
    case Ablation::no_gates: return "no_gates";
    case Ablation::no_gmix: return "no_gmix";
    case Ablation::no_gaussian: return "no_gaussian";
    case Ablation::six_layers: return "six_layers";
    case Ablation::no_learnable: return "no_learnable";
    }
    return "none";
}

ModelConfig run_ablation(ModelConfig cfg, Ablation ablation) {
    switch (ablation) {
    case Ablation::none: break;
    case Ablation::no_gates: cfg.use_gates = false; break;
    case Ablation::no_gmix: cfg.use_gmix = false; break;
    case Ablation::no_gaussian: cfg.use_gaussian = false; break;
    case Ablation::six_layers: cfg.attachment_levels = {1, 2, 3, 4, 5, 6}; break;
    case Ablation::no_learnable: cfg.use_learnable = false; break;
    }
    return cfg;
}

bool deterministic_from_env() {
    const char* v = std::getenv("S2AM_DETERMINISTIC");
    return v != nullptr && std::string(v) == "1";
}

void configure_runtime(std::uint64_t seed, bool deterministic) {
    torch::manual_seed(seed);
    if (deterministic) {
        at::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
}

std::unique_ptr<torch::optim::Adam> make_optimizer(std::vector<torch::Tensor> params,
                                                   double learning_rate) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params),
        torch::optim::AdamOptions(learning_rate).betas({0.9, 0.999}).eps(1e-8).weight_decay(0.0));
}

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    torch::manual_seed(cfg_.train.seed);
    generator_ = backbone::build_network(cfg_.model);
    auto adam = [&](std::vector<torch::Tensor> params) {
        return make_optimizer(std::move(params), cfg_.train.learning_rate);
    };
    if (!generator_->parameters().empty()) {
        opt_g_ = adam(generator_->parameters());
    }
    if (cfg_.loss.use_gan) {
        discriminator_ = losses::build_discriminator(cfg_.loss);
        opt_d_ = adam(discriminator_->parameters());
    }
    state_.master_seed = cfg_.train.seed;
}

double Trainer::learning_rate() const {
    if (!opt_g_) {
        return cfg_.train.learning_rate;
    }
    return static_cast<const torch::optim::AdamOptions&>(opt_g_->param_groups().front().options()).lr();
}

torch::Tensor Trainer::discriminator_input(const Batch& batch, const torch::Tensor& image) const {
    return cfg_.loss.conditional_discriminator ? torch::cat({batch.composite, image}, 1) : image;
}

Trainer::Terms Trainer::generator_terms(const Batch& batch) {
    Terms t;
    if (cfg_.model.variant == Variant::masked) {
        t.prediction = generator_->forward_masked(batch.composite, batch.mask).harmonized;
    } else {
        auto out = generator_->forward_maskfree(batch.composite);
        std::vector<torch::Tensor> maps;
        for (const auto& m : out.attention_maps) {
            maps.push_back(m.mask);
        }
        t.prediction = postprocess_maskfree(out.harmonized, batch.composite, maps.front());
        t.attention = losses::attention_loss(maps, batch.mask, cfg_.loss.attention_loss_kind,
                                             cfg_.model.attachment_levels);
    }
    t.pixel = losses::pixel_loss(t.prediction, batch.target);
    t.adversarial_g = torch::zeros({}, t.pixel.options());
    t.adversarial_d = torch::zeros({}, t.pixel.options());
    return t;
}

losses::LossBreakdown Trainer::step(const Batch& batch) {
    if (!opt_g_) {
        throw UsageError("the copy_paste baseline has no parameters to train");
    }
    generator_->train();
    auto terms = generator_terms(batch);

    if (cfg_.loss.use_gan) {
        discriminator_->train();
        auto d_real = discriminator_->forward(discriminator_input(batch, batch.target));
        auto d_fake = discriminator_->forward(discriminator_input(batch, terms.prediction.detach()));
        terms.adversarial_d = losses::lsgan_losses(d_real, d_fake).discriminator;
        opt_d_->zero_grad();
        terms.adversarial_d.backward();
        opt_d_->step();
        terms.adversarial_g = losses::lsgan_generator_loss(
            discriminator_->forward(discriminator_input(batch, terms.prediction)));
    }

    auto total = losses::total_loss<torch::Tensor>(terms.pixel, terms.attention, terms.adversarial_g,
                                                   cfg_.loss, cfg_.model.variant);
    opt_g_->zero_grad();
    total.backward();
    opt_g_->step();

    losses::LossBreakdown parts;
    parts.pixel = terms.pixel.item<double>();
    parts.attention = terms.attention ? terms.attention->item<double>() : 0.0;
    parts.adversarial_g = terms.adversarial_g.item<double>();
    parts.adversarial_d = terms.adversarial_d.item<double>();
    parts.total = total.item<double>();
    return parts;
}

losses::LossBreakdown Trainer::measure(const Batch& batch) {
    torch::NoGradGuard no_grad;
    const bool was_training = generator_->is_training();
    generator_->eval();
    auto terms = generator_terms(batch);
    if (cfg_.loss.use_gan) {
        discriminator_->eval();
        auto d_real = discriminator_->forward(discriminator_input(batch, batch.target));
        auto d_fake = discriminator_->forward(discriminator_input(batch, terms.prediction));
        auto adv = losses::lsgan_losses(d_real, d_fake);
        terms.adversarial_d = adv.discriminator;
        terms.adversarial_g = adv.generator;
    }
    auto total = losses::total_loss<torch::Tensor>(terms.pixel, terms.attention, terms.adversarial_g,
                                                   cfg_.loss, cfg_.model.variant);
    generator_->train(was_training);
    losses::LossBreakdown parts;
    parts.pixel = terms.pixel.item<double>();
    parts.attention = terms.attention ? terms.attention->item<double>() : 0.0;
    parts.adversarial_g = terms.adversarial_g.item<double>();
    parts.adversarial_d = terms.adversarial_d.item<double>();
    parts.total = total.item<double>();
    return parts;
}

void Trainer::save(const fs::path& stem) const {
    const auto path = checkpoint_file(stem);
    auto tensors = checkpoint::module_state(*generator_, "generator.");
    if (discriminator_) {
        auto d = checkpoint::module_state(*discriminator_, "discriminator.");
        tensors.insert(tensors.end(), d.begin(), d.end());
    }
    if (opt_g_) {
        dump_adam(*opt_g_, *generator_, "optim.generator.", tensors);
    }
    if (opt_d_) {
        dump_adam(*opt_d_, *discriminator_, "optim.discriminator.", tensors);
    }
    checkpoint::write_tensors(path, tensors);
    write_sidecar(path, cfg_, state_, opt_g_ != nullptr);
}

void Trainer::load(const fs::path& path) {
    const auto meta = read_sidecar(path);
    const auto stored = config::apply_json(meta.at("config"), cfg_);
    const auto diff = config::differing_keys(resume_signature(stored), resume_signature(cfg_));
    if (!diff.empty()) {
        std::string msg = "checkpoint configuration differs from the requested run:";
        for (const auto& key : diff) {
            msg += " " + key;
        }
        throw ConfigError(msg);
    }
    const auto tensors = checkpoint::read_tensors(path);
    checkpoint::load_module_state(*generator_, tensors, "generator.");
    if (discriminator_) {
        checkpoint::load_module_state(*discriminator_, tensors, "discriminator.");
    }
    if (opt_g_) {
        restore_adam(*opt_g_, *generator_, "optim.generator.", tensors);
    }
    if (opt_d_) {
        restore_adam(*opt_d_, *discriminator_, "optim.discriminator.", tensors);
    }
    state_ = state_from_json(meta.at("state"));
}

void write_loss_csv(std::ostream& out, const std::vector<LossRow>& rows, bool header) {
    if (header) {
        out << "iter,pixel,attention,adv_g,adv_d,total,lr\n";
    }
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      static_cast<long long>(r.step), r.parts.pixel, r.parts.attention,
                      r.parts.adversarial_g, r.parts.adversarial_d, r.parts.total, r.learning_rate);
        out << buf;
    }
}

void write_metrics_csv(std::ostream& out, const EvaluationReport& report) {
    out << "id,mse,ssim,psnr\n";
    char buf[256];
    for (const auto& s : report.samples) {
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.4f\n", s.metrics.mse, s.metrics.ssim, s.metrics.psnr);
        out << s.id << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.4f\n", report.mean.mse, report.mean.ssim, report.mean.psnr);
    out << "mean" << buf;
}

TrainResult train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                  const std::optional<fs::path>& resume,
                  const std::function<void(const LossRow&)>& on_step) {
    cfg.validate();
    if (cfg.model.architecture == backbone::Architecture::copy_paste) {
        throw ConfigError("the copy_paste baseline has no parameters to train");
    }
    configure_runtime(cfg.train.seed, cfg.train.deterministic || deterministic_from_env());

    const auto train_set = load_split(data_dir, "train");
    std::optional<Dataset> test_set;
    if (cfg.train.eval_each_epoch && has_split(data_dir, "test")) {
        test_set = load_split(data_dir, "test");
    }
    cfg.model.validate_resolution(train_set.composites.front().height, train_set.composites.front().width);

    Trainer trainer(cfg);
    if (resume) {
        trainer.load(*resume);
    }

    fs::create_directories(out_dir / "checkpoints");
    {
        std::ofstream echo(out_dir / "config.json", std::ios::trunc);
        echo << config::to_json(cfg).dump(2) << '\n';
    }
    const bool fresh_logs = !resume || !fs::exists(out_dir / "losses.csv");
    std::ofstream loss_log(out_dir / "losses.csv", fresh_logs ? std::ios::trunc : std::ios::app);
    std::ofstream metric_log(out_dir / "metrics.csv", fresh_logs ? std::ios::trunc : std::ios::app);
    if (fresh_logs) {
        metric_log << "epoch,mse,ssim,psnr\n";
    }
    bool header_pending = fresh_logs;

    TrainResult result;
    auto& state = trainer.state();
    const int64_t n = train_set.size();
    const int64_t batch_size = cfg.train.batch_size;
    for (int epoch = state.epoch + 1; epoch <= cfg.train.epochs; ++epoch) {
        const auto order = epoch_order(n, cfg.train.seed, epoch);
        for (int64_t start = 0; start < n; start += batch_size) {
            const auto end = std::min(n, start + batch_size);
            std::vector<int64_t> idx(order.begin() + start, order.begin() + end);
            LossRow row;
            row.parts = trainer.step(make_batch(train_set, idx));
            row.step = ++state.global_step;
            row.epoch = epoch;
            row.learning_rate = trainer.learning_rate();
            write_loss_csv(loss_log, {row}, header_pending);
            header_pending = false;
            if (on_step) {
                on_step(row);
            }
            result.losses.push_back(row);
        }
        loss_log.flush();
        state.epoch = epoch;

        if (test_set) {
            auto report = evaluate(trainer.generator(), *test_set, false, cfg.train.batch_size);
            state.metric_history.push_back({epoch, report.mean});
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.4f\n", epoch, report.mean.mse,
                          report.mean.ssim, report.mean.psnr);
            metric_log << buf << std::flush;
        }

        const int interval = cfg.train.checkpoint_interval;
        if (epoch == cfg.train.epochs || (interval > 0 && epoch % interval == 0)) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d", epoch);
            trainer.save(out_dir / "checkpoints" / name);
            result.last_checkpoint = checkpoint_file(out_dir / "checkpoints" / name);
        }
    }
    result.state = state;
    return result;
}

EvaluationReport evaluate(Harmonizer& net, const Dataset& data, bool keep_outputs, int batch_size) {
    torch::NoGradGuard no_grad;
    const bool was_training = net->is_training();
    net->eval();
    const auto& cfg = net->config();
    EvaluationReport report;
    const int64_t n = data.size();
    for (int64_t start = 0; start < n; start += batch_size) {
        std::vector<int64_t> idx;
        for (int64_t i = start; i < std::min<int64_t>(n, start + batch_size); ++i) {
            idx.push_back(i);
        }
        auto batch = make_batch(data, idx);
        torch::Tensor final_image;
        if (cfg.variant == Variant::masked) {
            auto pred = net->forward_masked(batch.composite, batch.mask).harmonized;
            final_image = postprocess_masked(pred, batch.composite, batch.mask);
        } else {
            auto out = net->forward_maskfree(batch.composite);
            final_image = out.attention_maps.empty()
                              ? out.harmonized
                              : postprocess_maskfree(out.harmonized, batch.composite,
                                                     out.attention_maps.front().mask);
        }
        for (size_t k = 0; k < idx.size(); ++k) {
            const auto i = static_cast<size_t>(idx[k]);
            auto image = slice_image(final_image, static_cast<int64_t>(k));
            report.samples.push_back({data.ids[i], metrics::evaluate_pair(image, data.targets[i])});
            if (keep_outputs) {
                report.outputs.push_back(std::move(image));
            }
        }
    }
    for (const auto& s : report.samples) {
        report.mean.mse += s.metrics.mse;
        report.mean.ssim += s.metrics.ssim;
        report.mean.psnr += s.metrics.psnr;
    }
    if (!report.samples.empty()) {
        const auto count = static_cast<double>(report.samples.size());
        report.mean.mse /= count;
        report.mean.ssim /= count;
        report.mean.psnr /= count;
    }
    net->train(was_training);
    return report;
}

LoadedModel load_model(const fs::path& checkpoint_path) {
    const auto meta = read_sidecar(checkpoint_path);
    LoadedModel loaded;
    loaded.config = config::apply_json(meta.at("config"), config::RunConfig{});
    loaded.config.validate();
    loaded.net = backbone::build_network(loaded.config.model);
    const auto tensors = checkpoint::read_tensors(checkpoint_path);
    checkpoint::load_module_state(*loaded.net, tensors, "generator.");
    loaded.state = state_from_json(meta.at("state"));
    loaded.net->eval();
    return loaded;
}

void save_model(const fs::path& stem, const RunConfig& cfg, Harmonizer& net, const TrainState& state) {
    const auto path = checkpoint_file(stem);
    checkpoint::write_tensors(path, checkpoint::module_state(*net, "generator."));
    write_sidecar(path, cfg, state, false);
}

EvaluationReport evaluate(const fs::path& checkpoint_path, const fs::path& data_dir,
                          const std::string& split, bool keep_outputs) {
    auto loaded = load_model(checkpoint_path);
    const auto data = load_split(data_dir, split);
    return evaluate(loaded.net, data, keep_outputs, loaded.config.train.batch_size);
}

Harmonization harmonize(Harmonizer& net, const Image8& image, const Image8* mask) {
    const auto& cfg = net->config();
    if (image.channels != 3) {
        throw ContractError("harmonize expects an RGB image");
    }
    if (cfg.architecture == backbone::Architecture::unet) {
        const int factor = 1 << cfg.depth;
        if (image.width % factor != 0 || image.height % factor != 0) {
            const int pw = (image.width + factor - 1) / factor * factor;
            const int ph = (image.height + factor - 1) / factor * factor;
            throw ContractError("image is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + "; both sides must be multiples of " +
                                std::to_string(factor) + ", pad to " + std::to_string(pw) + "x" +
                                std::to_string(ph));
        }
    }
    torch::NoGradGuard no_grad;
    net->eval();
    auto input = images_to_tensor(std::span<const Image8>(&image, 1));
    Harmonization result;
    if (cfg.variant == Variant::masked) {
        if (mask == nullptr) {
            throw UsageError("the masked task requires a mask");
        }
        if (mask->width != image.width || mask->height != image.height) {
            throw ContractError("mask and image sizes differ");
        }
        auto m = masks_to_tensor(std::span<const Image8>(mask, 1));
        auto pred = net->forward_masked(input, m).harmonized;
        result.output = tensor_to_image(postprocess_masked(pred, input, m)[0]);
        return result;
    }
    auto out = net->forward_maskfree(input);
    if (out.attention_maps.empty()) {
        result.output = tensor_to_image(out.harmonized[0]);
        return result;
    }
    const auto& m2s = out.attention_maps.front().mask;
    result.output = tensor_to_image(postprocess_maskfree(out.harmonized, input, m2s)[0]);
    auto up = F::interpolate(m2s, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{input.size(2), input.size(3)})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    result.attention = unit_tensor_to_image(up[0]);
    return result;
}

} // namespace s2am::harness
