#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aftrans/config.hpp"
#include "aftrans/image.hpp"
#include "aftrans/optimizer.hpp"
#include "aftrans/ppm.hpp"
#include "aftrans/region.hpp"
#include "aftrans/sacm.hpp"
#include "aftrans/tensor.hpp"
#include "aftrans/vit.hpp"

namespace aftrans {

template <typename T>
struct Sample {
    Tensor<T> image;  // [C, H, W], values in [0,1]
    std::size_t label = 0;
    std::optional<RegionBox> glyph_box;  // synthetic ground truth
};

template <typename T>
struct Model {
    ModelConfig cfg;
    EncoderParams<T> encoder;
    GateParams<T> gates;

    static Model init(const ModelConfig& cfg, std::size_t seed) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        Model m;
        m.cfg = cfg;
        m.encoder = init_encoder_params<T>(cfg, rng);
        m.gates = init_gate_params<T>(cfg);
        return m;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        auto out = encoder.named_params();
        for (auto& p : gates.named_params()) out.push_back(p);
        return out;
    }

    // Gate parameters are gradient-free; only encoder tensors train.
    std::vector<Tensor<T>*> trainable_params() {
        std::vector<Tensor<T>*> out;
        for (auto& [name, t] : encoder.named_params()) out.push_back(t);
        return out;
    }

    void zero_grads() {
        for (auto* t : trainable_params()) t->zero_grad();
    }
};

struct StepReport {
    double loss_global = 0;
    double loss_local = 0;
    double loss_total = 0;
    std::vector<RegionBox> region_boxes;  // one per sample in the batch
    std::vector<double> gates;            // from the last sample's proposal
    double lr = 0;
    std::size_t correct_global = 0;  // argmax(global logits) == label
};

/// One optimization step of the two-branch pipeline: global forward with
/// attention capture, region proposal, crop + resize, local forward, then
/// Loss = alpha*Loss_g + beta*Loss_l, one backward, one SGD update.
template <typename T>
StepReport train_step(Model<T>& model, const std::vector<Sample<T>>& batch,
                      SgdOptimizer<T>& opt) {
    if (batch.empty()) throw ValueError("train_step: empty batch");
    const ModelConfig& cfg = model.cfg;
    StepReport report;

    Tensor<T> sum_global, sum_local;
    bool first = true;
    for (const auto& sample : batch) {
        AttentionStack<T> stack;
        auto global_logits = branch_forward(sample.image, model.encoder, cfg,
                                            Branch::global, &stack);
        auto loss_g = cross_entropy(global_logits, {sample.label});
        if (argmax_class(global_logits) == sample.label) ++report.correct_global;

        auto [box, fam] = propose_region(stack, model.gates, cfg);
        report.region_boxes.push_back(box);
        report.gates = fam.gates;

        auto local_image = bilinear_resize(crop(sample.image, box),
                                           cfg.image_size_local, cfg.image_size_local);
        auto local_logits = branch_forward(local_image, model.encoder, cfg, Branch::local);
        auto loss_l = cross_entropy(local_logits, {sample.label});

        if (first) {
            sum_global = loss_g;
            sum_local = loss_l;
            first = false;
        } else {
            sum_global = add(sum_global, loss_g);
            sum_local = add(sum_local, loss_l);
        }
    }
    const T inv_b = static_cast<T>(1.0 / static_cast<double>(batch.size()));
    auto loss_global = scale(sum_global, inv_b);
    auto loss_local = scale(sum_local, inv_b);
    auto loss_total = add(scale(loss_global, static_cast<T>(cfg.alpha)),
                          scale(loss_local, static_cast<T>(cfg.beta)));

    report.loss_global = static_cast<double>((*loss_global.data)[0]);
    report.loss_local = static_cast<double>((*loss_local.data)[0]);
    report.loss_total = static_cast<double>((*loss_total.data)[0]);
    if (!loss_total.all_finite() || !loss_global.all_finite() || !loss_local.all_finite())
        throw NumericError("train_step: non-finite loss");

    model.zero_grads();
    backward(loss_total);
    auto params = model.trainable_params();
    report.lr = opt.step(params);
    return report;
}

template <typename T>
struct InferResult {
    std::size_t predicted = 0;  // argmax of global logits, ties to lowest index
    Tensor<T> global_logits;    // [1, C]
    Tensor<T> local_logits;     // [1, C]
    RegionBox box;
    std::size_t pred_local = 0;
    std::size_t pred_sum = 0;
};

template <typename T>
InferResult<T> infer(const Model<T>& model, const Tensor<T>& image) {
    const ModelConfig& cfg = model.cfg;
    InferResult<T> r;
    AttentionStack<T> stack;
    r.global_logits = branch_forward(image, model.encoder, cfg, Branch::global, &stack);
    auto [box, fam] = propose_region(stack, model.gates, cfg);
    r.box = box;
    auto local_image = bilinear_resize(crop(image, box),
                                       cfg.image_size_local, cfg.image_size_local);
    r.local_logits = branch_forward(local_image, model.encoder, cfg, Branch::local);

    r.predicted = argmax_class(r.global_logits);
    r.pred_local = argmax_class(r.local_logits);
    Tensor<T> summed = Tensor<T>::zeros(r.global_logits.shape);
    for (std::size_t i = 0; i < summed.numel(); ++i)
        (*summed.data)[i] = (*r.global_logits.data)[i] + (*r.local_logits.data)[i];
    r.pred_sum = argmax_class(summed);
    return r;
}

struct EvalMetrics {
    double acc_global = 0;
    double acc_local = 0;
    double acc_sum = 0;
    bool has_localization = false;
    double mean_iou = 0;
    double hit_rate = 0;  // fraction with IoU > 0.25
    std::size_t count = 0;
};

template <typename T>
EvalMetrics evaluate(const Model<T>& model, const std::vector<Sample<T>>& samples) {
    if (samples.empty()) throw ValueError("evaluate: empty sample list");
    EvalMetrics m;
    m.count = samples.size();
    std::size_t loc_count = 0;
    for (const auto& s : samples) {
        auto r = infer(model, s.image);
        if (r.predicted == s.label) m.acc_global += 1;
        if (r.pred_local == s.label) m.acc_local += 1;
        if (r.pred_sum == s.label) m.acc_sum += 1;
        if (s.glyph_box) {
            const double iou = box_iou(r.box, *s.glyph_box);
            m.mean_iou += iou;
            if (iou > 0.25) m.hit_rate += 1;
            ++loc_count;
        }
    }
    const double n = static_cast<double>(samples.size());
    m.acc_global /= n;
    m.acc_local /= n;
    m.acc_sum /= n;
    if (loc_count > 0) {
        m.has_localization = true;
        m.mean_iou /= static_cast<double>(loc_count);
        m.hit_rate /= static_cast<double>(loc_count);
    }
    return m;
}

/// Deterministic 2P x 2P binary glyph for a class index. The first four are
/// cross, hollow square, diagonal stripe, ring; further classes get seeded
/// pseudo-random patterns.
inline std::vector<bool> glyph_pattern(std::size_t class_idx, std::size_t size) {
    std::vector<bool> g(size * size, false);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    const std::size_t thick = std::max<std::size_t>(1, size / 4);
    switch (class_idx) {
        case 0:  // cross
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    if (std::abs(y - c) < thick || std::abs(x - c) < thick)
                        g[y * size + x] = true;
            break;
        case 1:  // hollow square
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    if (y < thick || x < thick || y >= size - thick || x >= size - thick)
                        g[y * size + x] = true;
            break;
        case 2:  // diagonal stripe
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    if (std::abs(static_cast<long>(y) - static_cast<long>(x)) <
                        static_cast<long>(thick) + 1)
                        g[y * size + x] = true;
            break;
        case 3:  // ring
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x) {
                    const double r = std::hypot(y - c, x - c);
                    if (r <= c && r >= c - 2.0 * thick) g[y * size + x] = true;
                }
            break;
        default: {
            std::mt19937_64 rng(0x9e3779b9ULL + class_idx);
            std::bernoulli_distribution coin(0.5);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = coin(rng);
            break;
        }
    }
    return g;
}

/// Uniform-noise backgrounds (amplitude 0.3) with one full-intensity class
/// glyph stamped in a random 2P x 2P region. Pure function of the seed.
template <typename T>
std::vector<Sample<T>> generate_synthetic_dataset(std::size_t seed, std::size_t num_classes,
                                                  std::size_t per_class,
                                                  const ModelConfig& cfg) {
    if (num_classes < 2)
        throw ConfigError("synthetic dataset: num_classes must be >= 2");
    const std::size_t hw = cfg.image_size_global;
    const std::size_t gs = 2 * cfg.patch_size;
    if (gs > hw) throw ConfigError("synthetic dataset: glyph larger than image");
    const std::size_t ch = cfg.channels;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.3);
    std::uniform_int_distribution<std::size_t> pos(0, hw - gs);

    std::vector<Sample<T>> samples;
    samples.reserve(num_classes * per_class);
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
        const auto glyph = glyph_pattern(cls, gs);
        for (std::size_t i = 0; i < per_class; ++i) {
            Sample<T> s;
            s.label = cls;
            s.image = Tensor<T>::zeros({ch, hw, hw});
            for (auto& v : *s.image.data) v = static_cast<T>(noise(rng));
            const std::size_t r0 = pos(rng), c0 = pos(rng);
            for (std::size_t y = 0; y < gs; ++y)
                for (std::size_t x = 0; x < gs; ++x)
                    if (glyph[y * gs + x])
                        for (std::size_t cc = 0; cc < ch; ++cc)
                            (*s.image.data)[cc * hw * hw + (r0 + y) * hw + c0 + x] = T(1);
            RegionBox gb;
            gb.row_min = static_cast<long>(r0);
            gb.col_min = static_cast<long>(c0);
            gb.row_max = static_cast<long>(r0 + gs);
            gb.col_max = static_cast<long>(c0 + gs);
            s.glyph_box = gb;
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

template <typename T>
Tensor<T> tensor_from_ppm(const PpmImage& img) {
    auto t = Tensor<T>::zeros({3, img.height, img.width});
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                (*t.data)[c * img.height * img.width + y * img.width + x] =
                    static_cast<T>(img.at(y, x, c) / 255.0);
    return t;
}

template <typename T>
PpmImage ppm_from_tensor(const Tensor<T>& t) {
    if (t.rank() != 3 || t.shape[0] != 3)
        throw ShapeError("ppm_from_tensor: expected [3,H,W]");
    PpmImage img;
    img.height = t.shape[1];
    img.width = t.shape[2];
    img.data.resize(img.width * img.height * 3);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = static_cast<double>(
                    (*t.data)[c * img.height * img.width + y * img.width + x]);
                v = std::clamp(v, 0.0, 1.0);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

struct FolderLoadInfo {
    std::vector<std::string> class_names;  // after compaction, label order
    std::vector<std::string> warnings;     // skipped empty classes etc.
};

/// Loads root/<class_name>/*.ppm, labels by lexicographic subdirectory order,
/// images resized to the global branch size. Empty class directories are
/// skipped with a warning and the remaining labels compacted.
template <typename T>
std::vector<Sample<T>> load_image_folder(const std::string& path, const ModelConfig& cfg,
                                         FolderLoadInfo* info = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path))
        throw ValueError("dataset: not a directory: " + path);
    if (cfg.channels != 3)
        throw ConfigError("dataset: PPM folders require model.channels == 3");

    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());

    std::vector<Sample<T>> samples;
    std::size_t label = 0;
    for (const auto& cls : class_dirs) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(path) / cls))
            if (e.is_regular_file() && e.path().extension() == ".ppm")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            if (info)
                info->warnings.push_back("class directory '" + cls +
                                         "' is empty; skipped (labels compacted)");
            continue;
        }
        for (const auto& f : files) {
            Sample<T> s;
            s.label = label;
            auto raw = tensor_from_ppm<T>(read_ppm(f));
            s.image = bilinear_resize(raw, cfg.image_size_global, cfg.image_size_global);
            samples.push_back(std::move(s));
        }
        if (info) info->class_names.push_back(cls);
        ++label;
    }
    return samples;
}

}  // namespace aftrans
