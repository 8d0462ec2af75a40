#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aftrans/config.hpp"
#include "aftrans/ops.hpp"
#include "aftrans/tensor.hpp"

namespace aftrans {

enum class Branch { global, local };

/// Post-softmax attention matrices captured during one forward pass.
/// Captured copies are detached: nothing downstream of the stack carries
/// gradient back into the encoder.
template <typename T>
struct AttentionStack {
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t extent = 0;  // N+1
    std::vector<std::vector<Tensor<T>>> maps;  // [layer][head], each [extent x extent]

    const Tensor<T>& at(std::size_t layer, std::size_t head) const {
        return maps[layer][head];
    }
};

template <typename T>
struct LayerParams {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

/// Shared-encoder parameter set. Transformer layers and the classifier are
/// one storage used by both branches; class tokens and position embeddings
/// exist per branch.
template <typename T>
struct EncoderParams {
    Tensor<T> patch_projection;  // [C*P*P, D]
    Tensor<T> patch_bias;        // [D]
    Tensor<T> class_token_global, class_token_local;  // [1, D]
    Tensor<T> pos_embed_global, pos_embed_local;      // [N_branch+1, D]
    std::vector<LayerParams<T>> layers;
    Tensor<T> final_gain, final_bias;  // norm before the classifier
    Tensor<T> cls_weight;              // [D, num_classes]
    Tensor<T> cls_bias;                // [num_classes]

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        std::vector<std::pair<std::string, Tensor<T>*>> out = {
            {"patch_projection", &patch_projection},
            {"patch_bias", &patch_bias},
            {"class_token_global", &class_token_global},
            {"class_token_local", &class_token_local},
            {"pos_embed_global", &pos_embed_global},
            {"pos_embed_local", &pos_embed_local},
        };
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = layers[i];
            const std::string p = "layer" + std::to_string(i) + ".";
            out.emplace_back(p + "ln1_gain", &l.ln1_gain);
            out.emplace_back(p + "ln1_bias", &l.ln1_bias);
            out.emplace_back(p + "wq", &l.wq);
            out.emplace_back(p + "bq", &l.bq);
            out.emplace_back(p + "wk", &l.wk);
            out.emplace_back(p + "bk", &l.bk);
            out.emplace_back(p + "wv", &l.wv);
            out.emplace_back(p + "bv", &l.bv);
            out.emplace_back(p + "wo", &l.wo);
            out.emplace_back(p + "bo", &l.bo);
            out.emplace_back(p + "ln2_gain", &l.ln2_gain);
            out.emplace_back(p + "ln2_bias", &l.ln2_bias);
            out.emplace_back(p + "mlp_w1", &l.mlp_w1);
            out.emplace_back(p + "mlp_b1", &l.mlp_b1);
            out.emplace_back(p + "mlp_w2", &l.mlp_w2);
            out.emplace_back(p + "mlp_b2", &l.mlp_b2);
        }
        out.emplace_back("final_gain", &final_gain);
        out.emplace_back("final_bias", &final_bias);
        out.emplace_back("cls_weight", &cls_weight);
        out.emplace_back("cls_bias", &cls_bias);
        return out;
    }
};

namespace init {

/// Truncated normal: rejection-sample |x| <= 2*sigma.
template <typename T>
void trunc_normal(Tensor<T>& t, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : *t.data) {
        double x;
        do {
            x = dist(rng);
        } while (std::abs(x) > 2.0 * sigma);
        v = static_cast<T>(x);
    }
}

}  // namespace init

/// Weights truncated-normal with Xavier scale sqrt(2/(fan_in+fan_out));
/// biases, class tokens, and position embeddings zero; norm gains one.
template <typename T>
EncoderParams<T> init_encoder_params(const ModelConfig& cfg, std::mt19937_64& rng) {
    const std::size_t d = cfg.embed_dim;
    const std::size_t pdim = cfg.channels * cfg.patch_size * cfg.patch_size;
    const std::size_t ng = cfg.num_patches(cfg.image_size_global);
    const std::size_t nl = cfg.num_patches(cfg.image_size_local);
    const std::size_t hidden = cfg.mlp_hidden();
    auto xavier = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    };

    EncoderParams<T> p;
    p.patch_projection = Tensor<T>::zeros({pdim, d}, true);
    init::trunc_normal(p.patch_projection, xavier(pdim, d), rng);
    p.patch_bias = Tensor<T>::zeros({d}, true);
    p.class_token_global = Tensor<T>::zeros({1, d}, true);
    p.class_token_local = Tensor<T>::zeros({1, d}, true);
    p.pos_embed_global = Tensor<T>::zeros({ng + 1, d}, true);
    p.pos_embed_local = Tensor<T>::zeros({nl + 1, d}, true);

    p.layers.resize(cfg.num_layers);
    for (auto& l : p.layers) {
        l.ln1_gain = Tensor<T>::zeros({d}, true);
        std::fill(l.ln1_gain.data->begin(), l.ln1_gain.data->end(), T(1));
        l.ln1_bias = Tensor<T>::zeros({d}, true);
        for (Tensor<T>* w : {&l.wq, &l.wk, &l.wv, &l.wo}) {
            *w = Tensor<T>::zeros({d, d}, true);
            init::trunc_normal(*w, xavier(d, d), rng);
        }
        l.bq = Tensor<T>::zeros({d}, true);
        l.bk = Tensor<T>::zeros({d}, true);
        l.bv = Tensor<T>::zeros({d}, true);
        l.bo = Tensor<T>::zeros({d}, true);
        l.ln2_gain = Tensor<T>::zeros({d}, true);
        std::fill(l.ln2_gain.data->begin(), l.ln2_gain.data->end(), T(1));
        l.ln2_bias = Tensor<T>::zeros({d}, true);
        l.mlp_w1 = Tensor<T>::zeros({d, hidden}, true);
        init::trunc_normal(l.mlp_w1, xavier(d, hidden), rng);
        l.mlp_b1 = Tensor<T>::zeros({hidden}, true);
        l.mlp_w2 = Tensor<T>::zeros({hidden, d}, true);
        init::trunc_normal(l.mlp_w2, xavier(hidden, d), rng);
        l.mlp_b2 = Tensor<T>::zeros({d}, true);
    }

    p.final_gain = Tensor<T>::zeros({d}, true);
    std::fill(p.final_gain.data->begin(), p.final_gain.data->end(), T(1));
    p.final_bias = Tensor<T>::zeros({d}, true);
    p.cls_weight = Tensor<T>::zeros({d, cfg.num_classes}, true);
    init::trunc_normal(p.cls_weight, xavier(d, cfg.num_classes), rng);
    p.cls_bias = Tensor<T>::zeros({cfg.num_classes}, true);
    return p;
}

/// Overlapping sliding-window patchification: window (r,c) covers pixels
/// [r*S, r*S+P) x [c*S, c*S+P), windows in row-major order. Output rows are
/// channel-major flattened windows. Value-only.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch_size, std::size_t stride) {
    if (image.rank() != 3) throw ShapeError("patchify: image must be [C,H,W]");
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h != w) throw ShapeError("patchify: image must be square");
    if (patch_size > h) throw ValueError("patchify: patch larger than image");
    const std::size_t g = (h - patch_size) / stride + 1;
    const std::size_t n = g * g;
    const std::size_t pdim = c * patch_size * patch_size;

    auto out = Tensor<T>::zeros({n, pdim});
    for (std::size_t wr = 0; wr < g; ++wr)
        for (std::size_t wc = 0; wc < g; ++wc) {
            T* dst = out.data->data() + (wr * g + wc) * pdim;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t py = 0; py < patch_size; ++py) {
                    const T* src = image.data->data() + ch * h * w +
                                   (wr * stride + py) * w + wc * stride;
                    std::copy(src, src + patch_size,
                              dst + ch * patch_size * patch_size + py * patch_size);
                }
        }
    return out;
}

/// Project patches, prepend the branch class token, add the branch position
/// embedding. Returns [N+1, D].
template <typename T>
Tensor<T> embed(const Tensor<T>& patches, const EncoderParams<T>& params, Branch branch) {
    const Tensor<T>& cls = branch == Branch::global ? params.class_token_global
                                                    : params.class_token_local;
    const Tensor<T>& pos = branch == Branch::global ? params.pos_embed_global
                                                    : params.pos_embed_local;
    if (patches.rows() + 1 != pos.rows())
        throw ConfigError("embed: patch count does not match the branch position embedding");
    auto projected = add_rowwise(matmul(patches, params.patch_projection), params.patch_bias);
    auto tokens = concat_rows<T>({cls, projected});
    return add(tokens, pos);
}

/// L pre-norm transformer layers with per-head scaled dot-product attention
/// (scale 1/sqrt(D/K)). Post-softmax attention is captured per layer and head
/// as detached values.
template <typename T>
Tensor<T> encoder_forward(Tensor<T> tokens, const EncoderParams<T>& params,
                          const ModelConfig& cfg, AttentionStack<T>* capture = nullptr) {
    const std::size_t dh = cfg.head_dim();
    const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const T eps = static_cast<T>(1e-6);

    if (capture) {
        capture->num_layers = cfg.num_layers;
        capture->num_heads = cfg.num_heads;
        capture->extent = tokens.rows();
        capture->maps.assign(cfg.num_layers, {});
    }

    for (std::size_t li = 0; li < cfg.num_layers; ++li) {
        const auto& l = params.layers[li];
        auto normed = layer_norm(tokens, l.ln1_gain, l.ln1_bias, eps);
        auto q = add_rowwise(matmul(normed, l.wq), l.bq);
        auto k = add_rowwise(matmul(normed, l.wk), l.bk);
        auto v = add_rowwise(matmul(normed, l.wv), l.bv);

        std::vector<Tensor<T>> head_outputs;
        head_outputs.reserve(cfg.num_heads);
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            auto qh = slice_cols(q, h * dh, dh);
            auto kh = slice_cols(k, h * dh, dh);
            auto vh = slice_cols(v, h * dh, dh);
            auto scores = scale(matmul(qh, transpose(kh)), scale_factor);
            auto attn = softmax(scores, 1);
            if (capture) capture->maps[li].push_back(attn.detached_copy());
            head_outputs.push_back(matmul(attn, vh));
        }
        auto msa = add_rowwise(matmul(concat_cols(head_outputs), l.wo), l.bo);
        tokens = add(tokens, msa);

        auto normed2 = layer_norm(tokens, l.ln2_gain, l.ln2_bias, eps);
        auto hidden = gelu(add_rowwise(matmul(normed2, l.mlp_w1), l.mlp_b1));
        auto mlp_out = add_rowwise(matmul(hidden, l.mlp_w2), l.mlp_b2);
        tokens = add(tokens, mlp_out);
    }
    return tokens;
}

/// Final norm on the class-token row, then the linear head. Returns [1, C].
template <typename T>
Tensor<T> classify(const Tensor<T>& features, const EncoderParams<T>& params) {
    auto cls_row = slice_rows(features, 0, 1);
    auto normed = layer_norm(cls_row, params.final_gain, params.final_bias,
                             static_cast<T>(1e-6));
    return add_rowwise(matmul(normed, params.cls_weight), params.cls_bias);
}

/// Full single-branch forward: image -> logits (+ optional attention capture).
template <typename T>
Tensor<T> branch_forward(const Tensor<T>& image, const EncoderParams<T>& params,
                         const ModelConfig& cfg, Branch branch,
                         AttentionStack<T>* capture = nullptr) {
    auto patches = patchify(image, cfg.patch_size, cfg.stride);
    auto tokens = embed(patches, params, branch);
    auto features = encoder_forward(tokens, params, cfg, capture);
    return classify(features, params);
}

template <typename T>
std::size_t argmax_class(const Tensor<T>& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.numel(); ++i)
        if ((*logits.data)[i] > (*logits.data)[best]) best = i;  // ties to lowest index
    return best;
}

}  // namespace aftrans
