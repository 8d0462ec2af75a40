#include "aftrans/config.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "aftrans/region.hpp"

namespace aftrans {

using nlohmann::json;

void ModelConfig::validate() const {
    auto fail = [](const std::string& path, const std::string& why) {
        throw ConfigError("model." + path + ": " + why);
    };
    if (patch_size == 0) fail("patch_size", "must be positive");
    if (stride == 0) fail("stride", "must be >= 1");
    if (channels == 0) fail("channels", "must be positive");
    if (patch_size > image_size_local)
        fail("image_size_local", "must be >= patch_size");
    if (image_size_local > image_size_global)
        fail("image_size_global", "must be >= image_size_local");
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
        fail("embed_dim", "must be positive and divisible by num_heads");
    if (num_layers == 0) fail("num_layers", "must be >= 1");
    if (mlp_ratio <= 0) fail("mlp_ratio", "must be positive");
    if (num_classes < 2) fail("num_classes", "must be >= 2");
    if (lambda_thresh <= 0.0 || lambda_thresh > 1.0)
        fail("lambda_thresh", "must be in (0,1]");
    if (reduction_ratio == 0) fail("reduction_ratio", "must be positive");
    if (fusion_mode == FusionMode::single_layer && single_layer_index >= num_layers)
        fail("fusion_mode", "single-layer index out of range");
    if (tokens_per_side(image_size_local) < 1)
        fail("image_size_local", "yields no patch tokens");
}

void RunConfig::validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("epochs: must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (base_lr <= 0) throw ConfigError("base_lr: must be positive");
    if (dataset.synthetic) {
        if (dataset.synth.num_classes < 2)
            throw ConfigError("dataset.synthetic.num_classes: must be >= 2");
        if (dataset.synth.per_class < 1)
            throw ConfigError("dataset.synthetic.per_class: must be >= 1");
        if (dataset.synth.num_classes != model.num_classes)
            throw ConfigError("dataset.synthetic.num_classes: must equal model.num_classes");
        if (2 * model.patch_size > model.image_size_global)
            throw ConfigError("model.patch_size: synthetic glyph (2P x 2P) larger than image");
    } else if (dataset.folder.empty()) {
        throw ConfigError("dataset.folder: must be a non-empty path");
    }
}

namespace {

template <typename V>
void read_field(const json& j, const char* key, V& out, const std::string& prefix) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError(prefix + key + ": wrong type");
    }
}

void read_model(const json& j, ModelConfig& m) {
    read_field(j, "image_size_global", m.image_size_global, "model.");
    read_field(j, "image_size_local", m.image_size_local, "model.");
    read_field(j, "patch_size", m.patch_size, "model.");
    read_field(j, "stride", m.stride, "model.");
    read_field(j, "channels", m.channels, "model.");
    read_field(j, "embed_dim", m.embed_dim, "model.");
    read_field(j, "num_layers", m.num_layers, "model.");
    read_field(j, "num_heads", m.num_heads, "model.");
    read_field(j, "mlp_ratio", m.mlp_ratio, "model.");
    read_field(j, "num_classes", m.num_classes, "model.");
    read_field(j, "lambda_thresh", m.lambda_thresh, "model.");
    read_field(j, "alpha", m.alpha, "model.");
    read_field(j, "beta", m.beta, "model.");
    read_field(j, "reduction_ratio", m.reduction_ratio, "model.");
    if (j.contains("fusion_mode")) {
        if (!j.at("fusion_mode").is_string())
            throw ConfigError("model.fusion_mode: must be a string");
        set_fusion_mode(m, j.at("fusion_mode").get<std::string>());
    }
    if (j.contains("box_mode")) {
        if (!j.at("box_mode").is_string())
            throw ConfigError("model.box_mode: must be a string");
        set_box_mode(m, j.at("box_mode").get<std::string>());
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig rc;
    if (j.contains("model")) read_model(j.at("model"), rc.model);
    read_field(j, "seed", rc.seed, "");
    read_field(j, "epochs", rc.epochs, "");
    read_field(j, "batch_size", rc.batch_size, "");
    read_field(j, "base_lr", rc.base_lr, "");
    read_field(j, "warmup_steps", rc.warmup_steps, "");
    read_field(j, "stop_accuracy", rc.stop_accuracy, "");
    read_field(j, "out_dir", rc.out_dir, "");
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("synthetic")) {
            rc.dataset.synthetic = true;
            const json& s = d.at("synthetic");
            read_field(s, "seed", rc.dataset.synth.seed, "dataset.synthetic.");
            read_field(s, "num_classes", rc.dataset.synth.num_classes, "dataset.synthetic.");
            read_field(s, "per_class", rc.dataset.synth.per_class, "dataset.synthetic.");
            // Keep model.num_classes in lockstep unless the model block pinned it.
            if (!j.contains("model") || !j.at("model").contains("num_classes"))
                rc.model.num_classes = rc.dataset.synth.num_classes;
        } else if (d.contains("folder")) {
            rc.dataset.synthetic = false;
            read_field(d, "folder", rc.dataset.folder, "dataset.");
        } else {
            throw ConfigError("dataset: needs either \"synthetic\" or \"folder\"");
        }
    }
    rc.validate();
    return rc;
}

std::string fusion_mode_name(const ModelConfig& cfg) {
    switch (cfg.fusion_mode) {
        case FusionMode::fused: return "fused";
        case FusionMode::no_gate: return "no-gate";
        case FusionMode::single_layer:
            return "single:" + std::to_string(cfg.single_layer_index);
    }
    return "fused";
}

std::string box_mode_name(BoxMode mode) {
    return mode == BoxMode::lcc ? "lcc" : "extreme";
}

void set_fusion_mode(ModelConfig& cfg, const std::string& text) {
    if (text == "fused") {
        cfg.fusion_mode = FusionMode::fused;
    } else if (text == "no-gate" || text == "no_gate") {
        cfg.fusion_mode = FusionMode::no_gate;
    } else if (text.rfind("single:", 0) == 0) {
        cfg.fusion_mode = FusionMode::single_layer;
        try {
            cfg.single_layer_index = std::stoul(text.substr(7));
        } catch (const std::exception&) {
            throw ConfigError("fusion_mode: expected single:<layer-index>");
        }
    } else {
        throw ConfigError("fusion_mode: unknown mode \"" + text + "\"");
    }
}

void set_box_mode(ModelConfig& cfg, const std::string& text) {
    if (text == "lcc")
        cfg.box_mode = BoxMode::lcc;
    else if (text == "extreme" || text == "extreme_values")
        cfg.box_mode = BoxMode::extreme_values;
    else
        throw ConfigError("box_mode: unknown mode \"" + text + "\"");
}

DatasetSource parse_dataset_arg(const std::string& text) {
    DatasetSource src;
    if (text.rfind("synthetic", 0) != 0) {
        src.synthetic = false;
        src.folder = text;
        return src;
    }
    src.synthetic = true;
    if (text == "synthetic") return src;
    if (text[9] != ':')
        throw ConfigError("dataset: expected synthetic:key=value,...");
    std::stringstream ss(text.substr(10));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("dataset: bad synthetic option \"" + item + "\"");
        const std::string key = item.substr(0, eq);
        std::size_t value = 0;
        try {
            value = std::stoul(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("dataset: bad value in \"" + item + "\"");
        }
        if (key == "seed") src.synth.seed = value;
        else if (key == "classes" || key == "num_classes") src.synth.num_classes = value;
        else if (key == "per_class") src.synth.per_class = value;
        else throw ConfigError("dataset: unknown synthetic option \"" + key + "\"");
    }
    return src;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["image_size_global"] = cfg.image_size_global;
    j["image_size_local"] = cfg.image_size_local;
    j["patch_size"] = cfg.patch_size;
    j["stride"] = cfg.stride;
    j["channels"] = cfg.channels;
    j["embed_dim"] = cfg.embed_dim;
    j["num_layers"] = cfg.num_layers;
    j["num_heads"] = cfg.num_heads;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["num_classes"] = cfg.num_classes;
    j["lambda_thresh"] = cfg.lambda_thresh;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["reduction_ratio"] = cfg.reduction_ratio;
    j["fusion_mode"] = fusion_mode_name(cfg);
    j["box_mode"] = box_mode_name(cfg.box_mode);
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig m;
    read_model(j, m);
    m.validate();
    return m;
}

}  // namespace aftrans
