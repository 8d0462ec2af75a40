#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aftrans {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FusionMode { fused, single_layer, no_gate };
enum class BoxMode { lcc, extreme_values };

struct ModelConfig {
    std::size_t image_size_global = 64;
    std::size_t image_size_local = 32;
    std::size_t patch_size = 8;
    std::size_t stride = 6;
    std::size_t channels = 3;
    std::size_t embed_dim = 64;
    std::size_t num_layers = 6;
    std::size_t num_heads = 4;
    double mlp_ratio = 4.0;
    std::size_t num_classes = 4;
    double lambda_thresh = 0.4;
    double alpha = 1.0;
    double beta = 1.0;
    std::size_t reduction_ratio = 4;
    FusionMode fusion_mode = FusionMode::fused;
    std::size_t single_layer_index = 0;  // used when fusion_mode == single_layer
    BoxMode box_mode = BoxMode::lcc;

    std::size_t tokens_per_side(std::size_t image_size) const {
        return (image_size - patch_size) / stride + 1;
    }
    std::size_t num_patches(std::size_t image_size) const {
        const std::size_t g = tokens_per_side(image_size);
        return g * g;
    }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t mlp_hidden() const {
        return static_cast<std::size_t>(static_cast<double>(embed_dim) * mlp_ratio);
    }
    std::size_t gate_hidden() const {
        const std::size_t h = num_layers / reduction_ratio;
        return h > 0 ? h : 1;
    }

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct SyntheticSpec {
    std::size_t seed = 7;
    std::size_t num_classes = 4;
    std::size_t per_class = 64;
};

struct DatasetSource {
    bool synthetic = true;
    SyntheticSpec synth;
    std::string folder;
};

struct RunConfig {
    ModelConfig model;
    std::size_t seed = 42;
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double base_lr = 0.01;
    std::size_t warmup_steps = 100;
    double stop_accuracy = 2.0;  // > 1 disables early stopping
    DatasetSource dataset;
    std::string out_dir = "out";

    void validate() const;
};

/// Parse a run config from JSON text; missing fields take the desk-scale
/// defaults. Throws ConfigError with a field path on bad input.
RunConfig parse_run_config(const std::string& json_text);

std::string fusion_mode_name(const ModelConfig& cfg);
std::string box_mode_name(BoxMode mode);

/// Parse "fused" | "single:<i>" | "no-gate" into the config fields.
void set_fusion_mode(ModelConfig& cfg, const std::string& text);
/// Parse "lcc" | "extreme".
void set_box_mode(ModelConfig& cfg, const std::string& text);

/// Parse a dataset argument: either a folder path or
/// "synthetic:classes=4,per_class=64,seed=7".
DatasetSource parse_dataset_arg(const std::string& text);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace aftrans
