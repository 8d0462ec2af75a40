#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aftrans/config.hpp"
#include "aftrans/region.hpp"
#include "aftrans/tensor.hpp"
#include "aftrans/vit.hpp"

namespace aftrans {

/// Gate MLP (one hidden layer, ReLU, sigmoid output) over the pooled
/// per-layer attention descriptor. Zero-initialized, so every gate starts at
/// exactly 0.5. The whole SACM path is gradient-free.
template <typename T>
struct GateParams {
    Tensor<T> w1;  // [hidden, L]
    Tensor<T> b1;  // [hidden]
    Tensor<T> w2;  // [L, hidden]
    Tensor<T> b2;  // [L]

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        return {{"gate.w1", &w1}, {"gate.b1", &b1}, {"gate.w2", &w2}, {"gate.b2", &b2}};
    }
};

template <typename T>
GateParams<T> init_gate_params(const ModelConfig& cfg) {
    const std::size_t l = cfg.num_layers;
    const std::size_t hidden = cfg.gate_hidden();
    GateParams<T> p;
    p.w1 = Tensor<T>::zeros({hidden, l});
    p.b1 = Tensor<T>::zeros({hidden});
    p.w2 = Tensor<T>::zeros({l, hidden});
    p.b2 = Tensor<T>::zeros({l});
    return p;
}

/// SACM output: per-layer Hadamard-fused maps, layer gates, the gated-sum
/// fused map, and its class row (row 0 over patch columns).
template <typename T>
struct FusedAttentionMap {
    std::vector<Tensor<T>> layer_maps;  // L matrices [(N+1) x (N+1)]
    std::vector<double> gates;          // length L
    Tensor<T> fused;                    // [(N+1) x (N+1)]
    std::vector<double> class_row;      // length N
};

/// Per-layer Hadamard product across all K heads.
template <typename T>
std::vector<Tensor<T>> fuse_heads(const AttentionStack<T>& stack) {
    std::vector<Tensor<T>> out;
    out.reserve(stack.num_layers);
    for (std::size_t li = 0; li < stack.num_layers; ++li) {
        Tensor<T> acc = stack.at(li, 0).detached_copy();
        for (std::size_t h = 1; h < stack.num_heads; ++h) {
            const auto& m = stack.at(li, h);
            for (std::size_t i = 0; i < acc.numel(); ++i)
                (*acc.data)[i] *= (*m.data)[i];
        }
        out.push_back(std::move(acc));
    }
    return out;
}

/// Pool each layer map to a scalar, then sigmoid(W2 relu(W1 pooled + b1) + b2).
template <typename T>
std::vector<double> compute_gates(const std::vector<Tensor<T>>& layer_maps,
                                  const GateParams<T>& params) {
    const std::size_t l = layer_maps.size();
    if (params.w1.cols() != l || params.w2.rows() != l)
        throw ShapeError("compute_gates: gate parameters sized for a different layer count");
    const std::size_t hidden = params.w1.rows();

    std::vector<double> pooled(l);
    for (std::size_t i = 0; i < l; ++i) {
        double s = 0;
        for (T v : *layer_maps[i].data) s += static_cast<double>(v);
        pooled[i] = s / static_cast<double>(layer_maps[i].numel());
    }
    std::vector<double> h(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        double s = static_cast<double>((*params.b1.data)[i]);
        for (std::size_t j = 0; j < l; ++j)
            s += static_cast<double>(params.w1.at(i, j)) * pooled[j];
        h[i] = s > 0 ? s : 0;
    }
    std::vector<double> gates(l);
    for (std::size_t i = 0; i < l; ++i) {
        double s = static_cast<double>((*params.b2.data)[i]);
        for (std::size_t j = 0; j < hidden; ++j)
            s += static_cast<double>(params.w2.at(i, j)) * h[j];
        gates[i] = 1.0 / (1.0 + std::exp(-s));
    }
    return gates;
}

/// Gated sum over layers: A_F = sum_i gates[i] * A_i.
template <typename T>
Tensor<T> fuse_layers(const std::vector<Tensor<T>>& layer_maps,
                      const std::vector<double>& gates) {
    if (layer_maps.size() != gates.size())
        throw ShapeError("fuse_layers: layer/gate counts disagree");
    Tensor<T> fused = Tensor<T>::zeros(layer_maps[0].shape);
    for (std::size_t i = 0; i < layer_maps.size(); ++i)
        for (std::size_t j = 0; j < fused.numel(); ++j)
            (*fused.data)[j] += static_cast<T>(gates[i]) * (*layer_maps[i].data)[j];
    return fused;
}

/// Full SACM pipeline on a global-branch attention stack: head fusion, layer
/// gating per fusion_mode, token selection, and box construction per box_mode.
template <typename T>
std::pair<RegionBox, FusedAttentionMap<T>> propose_region(const AttentionStack<T>& attn,
                                                          const GateParams<T>& params,
                                                          const ModelConfig& cfg) {
    FusedAttentionMap<T> fam;
    fam.layer_maps = fuse_heads(attn);

    switch (cfg.fusion_mode) {
        case FusionMode::fused:
            fam.gates = compute_gates(fam.layer_maps, params);
            break;
        case FusionMode::no_gate:
            fam.gates.assign(cfg.num_layers, 1.0);
            break;
        case FusionMode::single_layer:
            fam.gates.assign(cfg.num_layers, 0.0);
            fam.gates[cfg.single_layer_index] = 1.0;
            break;
    }
    fam.fused = fuse_layers(fam.layer_maps, fam.gates);

    const std::size_t g = cfg.tokens_per_side(cfg.image_size_global);
    const std::size_t n = g * g;
    fam.class_row.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        fam.class_row[i] = static_cast<double>(fam.fused.at(0, 1 + i));

    const auto grid = select_tokens(fam.class_row, g, cfg.lambda_thresh);

    std::vector<std::size_t> patches;
    if (cfg.box_mode == BoxMode::lcc) {
        patches = largest_connected_component(grid, g);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            if (grid[i]) patches.push_back(i);
    }

    const std::size_t h = cfg.image_size_global, w = cfg.image_size_global;
    RegionBox box = region_to_box(patches, g, cfg.patch_size, cfg.stride, h, w);
    if (box.height() < static_cast<long>(cfg.patch_size) ||
        box.width() < static_cast<long>(cfg.patch_size)) {
        auto fallback = RegionBox::full_image(h, w);
        fallback.selected_patches = box.selected_patches;
        fallback.component_size = box.component_size;
        box = fallback;
    }
    return {box, std::move(fam)};
}

}  // namespace aftrans
