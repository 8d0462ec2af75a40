#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aftrans/checkpoint.hpp"
#include "aftrans/config.hpp"
#include "aftrans/pipeline.hpp"
#include "aftrans/trainer.hpp"
#include "aftrans/visualize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using Scalar = float;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw aftrans::ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<aftrans::Sample<Scalar>> load_dataset(const aftrans::DatasetSource& src,
                                                  const aftrans::ModelConfig& cfg,
                                                  aftrans::FolderLoadInfo* info = nullptr) {
    if (src.synthetic) {
        if (src.synth.num_classes != cfg.num_classes)
            throw aftrans::ConfigError("dataset: synthetic class count " +
                                       std::to_string(src.synth.num_classes) +
                                       " does not match model num_classes " +
                                       std::to_string(cfg.num_classes));
        return aftrans::generate_synthetic_dataset<Scalar>(src.synth.seed,
                                                           src.synth.num_classes,
                                                           src.synth.per_class, cfg);
    }
    auto samples = aftrans::load_image_folder<Scalar>(src.folder, cfg, info);
    if (samples.empty())
        throw aftrans::ConfigError("dataset: no samples found in " + src.folder);
    return samples;
}

json box_to_json(const aftrans::RegionBox& box) {
    json j;
    j["row_min"] = box.row_min;
    j["col_min"] = box.col_min;
    j["row_max"] = box.row_max;
    j["col_max"] = box.col_max;
    j["component_size"] = box.component_size;
    return j;
}

int cmd_train(const std::string& config_path) {
    const auto run = aftrans::parse_run_config(read_file(config_path));

    fs::create_directories(run.out_dir);
    auto dataset = load_dataset(run.dataset, run.model);
    auto model = aftrans::Model<Scalar>::init(run.model, run.seed);
    aftrans::SgdOptimizer<Scalar> opt(
        run.base_lr, run.warmup_steps,
        aftrans::planned_total_steps(dataset.size(), run.batch_size, run.epochs), 0.9);

    std::ofstream metrics(fs::path(run.out_dir) / "metrics.jsonl");
    if (!metrics)
        throw aftrans::ConfigError("out_dir: cannot write metrics in " + run.out_dir);

    aftrans::train_model<Scalar>(model, dataset, run, opt,
                                 [&](const aftrans::EpochMetrics& em) {
                                     json j;
                                     j["epoch"] = em.epoch;
                                     j["loss_global"] = em.loss_global;
                                     j["loss_local"] = em.loss_local;
                                     j["loss_total"] = em.loss_total;
                                     j["train_accuracy"] = em.train_accuracy;
                                     j["lr"] = em.lr;
                                     metrics << j.dump() << "\n";
                                     metrics.flush();
                                 },
                                 run.stop_accuracy);

    const std::string ckpt_path = (fs::path(run.out_dir) / "model.aftk").string();
    aftrans::save_checkpoint(model, &opt, ckpt_path);
    std::cout << "checkpoint written to " << ckpt_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_arg,
             const std::string& fusion_mode, const std::string& box_mode) {
    auto loaded = aftrans::load_checkpoint<Scalar>(ckpt_path);
    if (!fusion_mode.empty()) aftrans::set_fusion_mode(loaded.model.cfg, fusion_mode);
    if (!box_mode.empty()) aftrans::set_box_mode(loaded.model.cfg, box_mode);
    loaded.model.cfg.validate();
    auto src = aftrans::parse_dataset_arg(dataset_arg);
    if (src.synthetic && src.synth.num_classes != loaded.model.cfg.num_classes)
        src.synth.num_classes = loaded.model.cfg.num_classes;
    auto samples = load_dataset(src, loaded.model.cfg);

    auto m = aftrans::evaluate(loaded.model, samples);
    json j;
    j["acc_global"] = m.acc_global;
    j["acc_local"] = m.acc_local;
    j["acc_sum"] = m.acc_sum;
    j["count"] = m.count;
    if (m.has_localization) {
        j["mean_iou"] = m.mean_iou;
        j["hit_rate"] = m.hit_rate;
    }
    j["fusion_mode"] = aftrans::fusion_mode_name(loaded.model.cfg);
    j["box_mode"] = aftrans::box_mode_name(loaded.model.cfg.box_mode);
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_sweep_lambda(const std::string& ckpt_path, const std::string& dataset_arg,
                     std::vector<double> values) {
    if (values.empty()) values = {0.1, 0.2, 0.3, 0.4, 0.5};
    for (double v : values)
        if (v <= 0.0 || v > 1.0)
            throw aftrans::ConfigError("lambda: value " + std::to_string(v) +
                                       " outside (0,1]");

    auto loaded = aftrans::load_checkpoint<Scalar>(ckpt_path);
    auto src = aftrans::parse_dataset_arg(dataset_arg);
    if (src.synthetic && src.synth.num_classes != loaded.model.cfg.num_classes)
        src.synth.num_classes = loaded.model.cfg.num_classes;
    auto samples = load_dataset(src, loaded.model.cfg);

    const std::size_t n = loaded.model.cfg.num_patches(loaded.model.cfg.image_size_global);
    std::cout << "lambda   m  mean_box_area  acc_global  acc_local  acc_sum\n";
    json rows = json::array();
    for (double lambda : values) {
        aftrans::Model<Scalar> model = loaded.model;
        model.cfg.lambda_thresh = lambda;

        double area = 0;
        std::size_t cg = 0, cl = 0, cs = 0;
        for (const auto& s : samples) {
            auto r = aftrans::infer(model, s.image);
            area += static_cast<double>(r.box.height() * r.box.width());
            if (r.predicted == s.label) ++cg;
            if (r.pred_local == s.label) ++cl;
            if (r.pred_sum == s.label) ++cs;
        }
        const double cnt = static_cast<double>(samples.size());
        json row;
        row["lambda"] = lambda;
        row["m"] = aftrans::selection_count(n, lambda);
        row["mean_box_area"] = area / cnt;
        row["acc_global"] = cg / cnt;
        row["acc_local"] = cl / cnt;
        row["acc_sum"] = cs / cnt;
        rows.push_back(row);
        std::printf("%6.2f %4zu %14.1f %11.4f %10.4f %8.4f\n", lambda,
                    aftrans::selection_count(n, lambda), area / cnt, cg / cnt, cl / cnt,
                    cs / cnt);
    }
    std::cout << rows.dump() << "\n";
    return kExitOk;
}

int cmd_visualize(const std::string& ckpt_path, const std::string& image_path,
                  const std::string& out_prefix, const std::string& fusion_mode,
                  const std::string& box_mode) {
    auto loaded = aftrans::load_checkpoint<Scalar>(ckpt_path);
    auto& model = loaded.model;
    if (!fusion_mode.empty()) aftrans::set_fusion_mode(model.cfg, fusion_mode);
    if (!box_mode.empty()) aftrans::set_box_mode(model.cfg, box_mode);
    model.cfg.validate();

    auto raw = aftrans::tensor_from_ppm<Scalar>(aftrans::read_ppm(image_path));
    auto image = aftrans::bilinear_resize(raw, model.cfg.image_size_global,
                                          model.cfg.image_size_global);

    aftrans::AttentionStack<Scalar> stack;
    auto global_logits =
        aftrans::branch_forward(image, model.encoder, model.cfg, aftrans::Branch::global, &stack);
    auto [box, fam] = aftrans::propose_region(stack, model.gates, model.cfg);
    auto local_image = aftrans::bilinear_resize(aftrans::crop(image, box),
                                                model.cfg.image_size_local,
                                                model.cfg.image_size_local);
    auto local_logits =
        aftrans::branch_forward(local_image, model.encoder, model.cfg, aftrans::Branch::local);

    const auto base = aftrans::ppm_from_tensor(image);
    const std::size_t g = model.cfg.tokens_per_side(model.cfg.image_size_global);
    const auto heat = aftrans::render_heatmap(fam.class_row, g, model.cfg.patch_size,
                                              model.cfg.stride, model.cfg.image_size_global);
    aftrans::write_ppm(out_prefix + "_heatmap.ppm", aftrans::overlay_heatmap(base, heat));
    aftrans::write_ppm(out_prefix + "_box.ppm", aftrans::draw_box(base, box));

    json report;
    report["gates"] = fam.gates;
    report["box"] = box_to_json(box);
    report["selected_patches"] = box.selected_patches;
    report["logits_global"] = *global_logits.data;
    report["logits_local"] = *local_logits.data;
    report["predicted"] = aftrans::argmax_class(global_logits);
    report["fusion_mode"] = aftrans::fusion_mode_name(model.cfg);
    report["box_mode"] = aftrans::box_mode_name(model.cfg.box_mode);
    std::ofstream rf(out_prefix + "_report.json");
    if (!rf) throw aftrans::ConfigError("cannot write " + out_prefix + "_report.json");
    rf << report.dump(2) << "\n";
    std::cout << "wrote " << out_prefix << "_{heatmap,box}.ppm and report\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AFTrans: two-branch fine-grained recognition with attention-fused "
                 "region proposal"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, dataset_arg, image_path, out_prefix;
    std::string fusion_mode, box_mode;
    std::vector<double> lambda_values;

    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("-c,--config", config_path, "JSON run config")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("-m,--model", ckpt_path, "checkpoint file")->required();
    eval->add_option("-d,--dataset", dataset_arg, "folder or synthetic:<spec>")->required();
    eval->add_option("--fusion-mode", fusion_mode, "fused | single:<i> | no-gate");
    eval->add_option("--box-mode", box_mode, "lcc | extreme");

    auto* sweep = app.add_subcommand("sweep-lambda", "token-keep-fraction sweep");
    sweep->add_option("-m,--model", ckpt_path, "checkpoint file")->required();
    sweep->add_option("-d,--dataset", dataset_arg, "folder or synthetic:<spec>")->required();
    sweep->add_option("--values", lambda_values, "lambda grid (default 0.1..0.5)");

    auto* vis = app.add_subcommand("visualize", "emit heatmap, box, and report");
    vis->add_option("-m,--model", ckpt_path, "checkpoint file")->required();
    vis->add_option("-i,--image", image_path, "input PPM image")->required();
    vis->add_option("-o,--output", out_prefix, "output file prefix")->required();
    vis->add_option("--fusion-mode", fusion_mode, "fused | single:<i> | no-gate");
    vis->add_option("--box-mode", box_mode, "lcc | extreme");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitInput : kExitOk;
    }

    try {
        if (train->parsed()) return cmd_train(config_path);
        if (eval->parsed()) return cmd_eval(ckpt_path, dataset_arg, fusion_mode, box_mode);
        if (sweep->parsed()) return cmd_sweep_lambda(ckpt_path, dataset_arg, lambda_values);
        if (vis->parsed())
            return cmd_visualize(ckpt_path, image_path, out_prefix, fusion_mode, box_mode);
    } catch (const aftrans::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
