#include "s2am/config.hpp"

#include "s2am/errors.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace s2am::config {

using attention::Variant;
using backbone::Architecture;
using backbone::Attachment;
using losses::AttentionLossKind;

std::string to_string(Variant v) { return v == Variant::masked ? "masked" : "maskfree"; }

std::string to_string(Attachment a) {
    switch (a) {
    case Attachment::none: return "none";
    case Attachment::s2asc: return "s2asc";
    case Attachment::s2ad: return "s2ad";
    }
    return "none";
}

std::string to_string(Architecture a) { return a == Architecture::unet ? "unet" : "copy_paste"; }

std::string to_string(AttentionLossKind k) { return k == AttentionLossKind::l2 ? "l2" : "bce"; }

Variant parse_variant(const std::string& name) {
    if (name == "masked") return Variant::masked;
    if (name == "maskfree" || name == "mask_free") return Variant::mask_free;
    throw UsageError("unknown task '" + name + "' (expected masked or maskfree)");
}

Attachment parse_attachment(const std::string& name) {
    if (name == "none") return Attachment::none;
    if (name == "s2asc") return Attachment::s2asc;
    if (name == "s2ad") return Attachment::s2ad;
    throw UsageError("unknown attachment '" + name + "' (expected none, s2asc or s2ad)");
}

namespace {

Architecture parse_architecture(const std::string& name) {
    if (name == "unet") return Architecture::unet;
    if (name == "copy_paste") return Architecture::copy_paste;
    throw ConfigError("unknown architecture '" + name + "'");
}

AttentionLossKind parse_loss_kind(const std::string& name) {
    if (name == "l2") return AttentionLossKind::l2;
    if (name == "bce") return AttentionLossKind::bce;
    throw ConfigError("unknown attention loss '" + name + "'");
}

// Field table for one section: key -> setter reading the JSON value.
using Setter = std::function<void(const Json&)>;

void apply_section(const Json& doc, const std::string& section,
                   const std::map<std::string, Setter>& fields) {
    if (!doc.is_object()) {
        throw ConfigError("config section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : doc.items()) {
        auto it = fields.find(key);
        if (it == fields.end()) {
            throw ConfigError("unknown config key '" + section + "." + key + "'");
        }
        try {
            it->second(value);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
        } catch (const UsageError& e) {
            throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
        }
    }
}

template <class T>
Setter set(T& field) {
    return [&field](const Json& v) { field = v.get<T>(); };
}

Json range_json(const datasynth::Range& r) { return Json::array({r.low, r.high}); }

Setter set_range(datasynth::Range& r) {
    return [&r](const Json& v) {
        if (!v.is_array() || v.size() != 2) {
            throw ConfigError("range must be a [low, high] pair");
        }
        r.low = v[0].get<double>();
        r.high = v[1].get<double>();
    };
}

} // namespace

void TrainSettings::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
}

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    train.validate();
    perturb.validate();
}

RunConfig default_run_config(Variant variant) {
    RunConfig cfg;
    cfg.model.variant = variant;
    if (variant == Variant::mask_free) {
        cfg.model.attachment = Attachment::s2ad;
    }
    cfg.loss = losses::default_loss_config(variant);
    return cfg;
}

Json to_json(const RunConfig& cfg) {
    const auto& m = cfg.model;
    const auto& l = cfg.loss;
    const auto& t = cfg.train;
    const auto& p = cfg.perturb;
    Json doc;
    doc["model"] = {
        {"architecture", to_string(m.architecture)},
        {"input_channels", m.input_channels},
        {"base_channels", m.base_channels},
        {"depth", m.depth},
        {"attachment", to_string(m.attachment)},
        {"attachment_levels", m.attachment_levels},
        {"variant", to_string(m.variant)},
        {"reduction", m.reduction},
        {"gaussian_kernel", m.gaussian_kernel},
        {"gaussian_sigma", m.gaussian_sigma},
        {"use_gates", m.use_gates},
        {"use_gmix", m.use_gmix},
        {"use_learnable", m.use_learnable},
        {"use_gaussian", m.use_gaussian},
    };
    doc["loss"] = {
        {"alpha", l.alpha},
        {"beta", l.beta},
        {"attention_loss", to_string(l.attention_loss_kind)},
        {"use_gan", l.use_gan},
        {"conditional_discriminator", l.conditional_discriminator},
        {"discriminator_channels", l.discriminator_channels},
        {"discriminator_layers", l.discriminator_layers},
    };
    doc["train"] = {
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"seed", t.seed},
        {"deterministic", t.deterministic},
        {"checkpoint_interval", t.checkpoint_interval},
        {"eval_each_epoch", t.eval_each_epoch},
    };
    doc["perturb"] = {
        {"brightness", range_json(p.brightness)},
        {"contrast", range_json(p.contrast)},
        {"saturation", range_json(p.saturation)},
        {"seed", p.seed},
    };
    return doc;
}

RunConfig apply_json(const Json& doc, RunConfig cfg) {
    if (!doc.is_object()) {
        throw ConfigError("config document must be an object");
    }
    auto& m = cfg.model;
    auto& l = cfg.loss;
    auto& t = cfg.train;
    auto& p = cfg.perturb;

    const std::map<std::string, Setter> model_fields{
        {"architecture", [&](const Json& v) { m.architecture = parse_architecture(v.get<std::string>()); }},
        {"input_channels", set(m.input_channels)},
        {"base_channels", set(m.base_channels)},
        {"depth", set(m.depth)},
        {"attachment", [&](const Json& v) { m.attachment = parse_attachment(v.get<std::string>()); }},
        {"attachment_levels", set(m.attachment_levels)},
        {"variant", [&](const Json& v) { m.variant = parse_variant(v.get<std::string>()); }},
        {"reduction", set(m.reduction)},
        {"gaussian_kernel", set(m.gaussian_kernel)},
        {"gaussian_sigma", set(m.gaussian_sigma)},
        {"use_gates", set(m.use_gates)},
        {"use_gmix", set(m.use_gmix)},
        {"use_learnable", set(m.use_learnable)},
        {"use_gaussian", set(m.use_gaussian)},
    };
    const std::map<std::string, Setter> loss_fields{
        {"alpha", set(l.alpha)},
        {"beta", set(l.beta)},
        {"attention_loss", [&](const Json& v) { l.attention_loss_kind = parse_loss_kind(v.get<std::string>()); }},
        {"use_gan", set(l.use_gan)},
        {"conditional_discriminator", set(l.conditional_discriminator)},
        {"discriminator_channels", set(l.discriminator_channels)},
        {"discriminator_layers", set(l.discriminator_layers)},
    };
    const std::map<std::string, Setter> train_fields{
        {"epochs", set(t.epochs)},
        {"batch_size", set(t.batch_size)},
        {"learning_rate", set(t.learning_rate)},
        {"seed", set(t.seed)},
        {"deterministic", set(t.deterministic)},
        {"checkpoint_interval", set(t.checkpoint_interval)},
        {"eval_each_epoch", set(t.eval_each_epoch)},
    };
    const std::map<std::string, Setter> perturb_fields{
        {"brightness", set_range(p.brightness)},
        {"contrast", set_range(p.contrast)},
        {"saturation", set_range(p.saturation)},
        {"seed", set(p.seed)},
    };

    for (const auto& [section, value] : doc.items()) {
        if (section == "model") {
            apply_section(value, section, model_fields);
        } else if (section == "loss") {
            apply_section(value, section, loss_fields);
        } else if (section == "train") {
            apply_section(value, section, train_fields);
        } else if (section == "perturb") {
            apply_section(value, section, perturb_fields);
        } else {
            throw ConfigError("unknown config section '" + section + "'");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse config file " + path.string() + ": " + e.what());
    }
    return apply_json(doc, std::move(base));
}

namespace {

void collect_differences(const Json& a, const Json& b, const std::string& prefix,
                         std::vector<std::string>& out) {
    if (a.is_object() && b.is_object()) {
        for (const auto& [key, value] : a.items()) {
            const auto path = prefix.empty() ? key : prefix + "." + key;
            if (!b.contains(key)) {
                out.push_back(path);
            } else {
                collect_differences(value, b.at(key), path, out);
            }
        }
        for (const auto& [key, value] : b.items()) {
            if (!a.contains(key)) {
                out.push_back(prefix.empty() ? key : prefix + "." + key);
            }
        }
        return;
    }
    if (a != b) {
        out.push_back(prefix);
    }
}

} // namespace

std::vector<std::string> differing_keys(const Json& a, const Json& b) {
    std::vector<std::string> out;
    collect_differences(a, b, "", out);
    return out;
}

} // namespace s2am::config
