#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aftrans/ppm.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kBin = AFTRANS_BIN;

int run_cli(const std::string& args, const std::string& stdout_file = "") {
    std::string cmd = kBin + " " + args;
    if (!stdout_file.empty()) cmd += " > " + stdout_file;
    cmd += " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("aftrans_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string tiny_config(const fs::path& out_dir, double lambda = 0.4,
                        std::size_t epochs = 1, std::size_t seed = 5) {
    json j;
    j["model"] = {{"image_size_global", 32}, {"image_size_local", 16},
                  {"patch_size", 8},         {"stride", 8},
                  {"embed_dim", 16},         {"num_layers", 2},
                  {"num_heads", 2},          {"mlp_ratio", 2.0},
                  {"num_classes", 2},        {"lambda_thresh", lambda}};
    j["epochs"] = epochs;
    j["batch_size"] = 2;
    j["base_lr"] = 0.01;
    j["warmup_steps"] = 2;
    j["seed"] = seed;
    j["dataset"] = {{"synthetic", {{"num_classes", 2}, {"per_class", 2}, {"seed", 3}}}};
    j["out_dir"] = out_dir.string();
    return j.dump();
}

std::string write_config(const fs::path& dir, const std::string& text) {
    const auto path = dir / "run.json";
    std::ofstream(path) << text;
    return path.string();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("cli train: writes one metrics line per epoch and a checkpoint") {
    auto dir = temp_dir("train");
    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out, 0.4, 2));
    CHECK(run_cli("train -c " + cfg) == 0);
    REQUIRE(fs::exists(out / "model.aftk"));
    auto lines = read_lines((out / "metrics.jsonl").string());
    REQUIRE(lines.size() == 2);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto j = json::parse(lines[i]);
        CHECK(j.at("epoch").get<std::size_t>() == i);
        CHECK(j.contains("loss_global"));
        CHECK(j.contains("loss_local"));
        CHECK(j.contains("loss_total"));
        CHECK(j.contains("train_accuracy"));
        CHECK(j.contains("lr"));
        CHECK(j.at("loss_total").get<double>() > 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli train: identical seeds produce byte-identical checkpoints") {
    auto dir = temp_dir("determinism");
    auto cfg1 = dir / "a.json";
    auto cfg2 = dir / "b.json";
    std::ofstream(cfg1) << tiny_config(dir / "out_a");
    std::ofstream(cfg2) << tiny_config(dir / "out_b");
    REQUIRE(run_cli("train -c " + cfg1.string()) == 0);
    REQUIRE(run_cli("train -c " + cfg2.string()) == 0);
    CHECK(file_bytes(dir / "out_a" / "model.aftk") ==
          file_bytes(dir / "out_b" / "model.aftk"));

    // A different seed must change the weights.
    auto cfg3 = dir / "c.json";
    std::ofstream(cfg3) << tiny_config(dir / "out_c", 0.4, 1, 6);
    REQUIRE(run_cli("train -c " + cfg3.string()) == 0);
    CHECK(file_bytes(dir / "out_a" / "model.aftk") !=
          file_bytes(dir / "out_c" / "model.aftk"));
    fs::remove_all(dir);
}

TEST_CASE("cli train: invalid config is rejected before any output appears") {
    auto dir = temp_dir("badcfg");
    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out, 0.0));  // lambda outside (0,1]
    CHECK(run_cli("train -c " + cfg) == 2);
    CHECK_FALSE(fs::exists(out));

    auto missing = (dir / "nope.json").string();
    CHECK(run_cli("train -c " + missing) == 2);

    std::ofstream(dir / "garbage.json") << "{not json";
    CHECK(run_cli("train -c " + (dir / "garbage.json").string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli eval: reports the metrics schema on synthetic data") {
    auto dir = temp_dir("eval");
    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out));
    REQUIRE(run_cli("train -c " + cfg) == 0);
    const auto ckpt = (out / "model.aftk").string();
    const auto stdout_file = (dir / "eval.json").string();
    CHECK(run_cli("eval -m " + ckpt + " -d synthetic:classes=2,per_class=3,seed=9",
                  stdout_file) == 0);
    auto lines = read_lines(stdout_file);
    REQUIRE(lines.size() == 1);
    auto j = json::parse(lines[0]);
    for (const char* key :
         {"acc_global", "acc_local", "acc_sum", "count", "mean_iou", "hit_rate"})
        CHECK(j.contains(key));
    CHECK(j.at("count").get<std::size_t>() == 6);
    CHECK(j.at("acc_global").get<double>() >= 0.0);
    CHECK(j.at("acc_global").get<double>() <= 1.0);
    fs::remove_all(dir);
}

TEST_CASE("cli eval: missing checkpoint and empty folder both exit 2") {
    auto dir = temp_dir("evalbad");
    CHECK(run_cli("eval -m " + (dir / "absent.aftk").string() + " -d synthetic") == 2);

    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out));
    REQUIRE(run_cli("train -c " + cfg) == 0);
    auto empty = dir / "empty_dataset";
    fs::create_directories(empty);
    CHECK(run_cli("eval -m " + (out / "model.aftk").string() + " -d " + empty.string()) ==
          2);
    fs::remove_all(dir);
}

TEST_CASE("cli sweep-lambda: default grid emits five rows with the selection law") {
    auto dir = temp_dir("sweep");
    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out));
    REQUIRE(run_cli("train -c " + cfg) == 0);
    const auto stdout_file = (dir / "sweep.txt").string();
    CHECK(run_cli("sweep-lambda -m " + (out / "model.aftk").string() +
                      " -d synthetic:classes=2,per_class=2,seed=4",
                  stdout_file) == 0);
    auto lines = read_lines(stdout_file);
    REQUIRE(!lines.empty());
    auto rows = json::parse(lines.back());
    REQUIRE(rows.is_array());
    REQUIRE(rows.size() == 5);
    // Global branch: 32 px, patch 8, stride 8 -> 4x4 = 16 patch tokens.
    const std::vector<std::size_t> expect_m = {2, 4, 5, 7, 8};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(rows[i].at("lambda").get<double>() ==
              doctest::Approx(0.1 * static_cast<double>(i + 1)));
        CHECK(rows[i].at("m").get<std::size_t>() == expect_m[i]);
        CHECK(rows[i].at("mean_box_area").get<double>() > 0);
    }
    // Out-of-range lambda is rejected.
    CHECK(run_cli("sweep-lambda -m " + (out / "model.aftk").string() +
                  " -d synthetic --values 1.5") == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli visualize: emits heatmap, box overlay, and a JSON report") {
    auto dir = temp_dir("vis");
    auto out = dir / "out";
    auto cfg = write_config(dir, tiny_config(out));
    REQUIRE(run_cli("train -c " + cfg) == 0);

    // Any RGB PPM works as input; gradient keeps it non-degenerate.
    aftrans::PpmImage img;
    img.width = 32;
    img.height = 32;
    img.data.resize(32 * 32 * 3);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<std::uint8_t>((i * 7) % 256);
    const auto input = (dir / "input.ppm").string();
    aftrans::write_ppm(input, img);

    const auto prefix = (dir / "result").string();
    CHECK(run_cli("visualize -m " + (out / "model.aftk").string() + " -i " + input +
                  " -o " + prefix) == 0);
    CHECK(fs::exists(prefix + "_heatmap.ppm"));
    CHECK(fs::exists(prefix + "_box.ppm"));
    REQUIRE(fs::exists(prefix + "_report.json"));

    std::ifstream rf(prefix + "_report.json");
    json report = json::parse(rf);
    REQUIRE(report.at("gates").is_array());
    CHECK(report.at("gates").size() == 2);  // num_layers
    for (const auto& gate : report.at("gates")) {
        CHECK(gate.get<double>() > 0.0);
        CHECK(gate.get<double>() < 1.0);
    }
    const auto& box = report.at("box");
    CHECK(box.at("row_max").get<long>() > box.at("row_min").get<long>());
    CHECK(box.at("col_max").get<long>() > box.at("col_min").get<long>());
    CHECK(report.contains("selected_patches"));
    CHECK(report.contains("logits_global"));
    CHECK(report.contains("predicted"));

    // Both overlays decode as valid PPMs of the global branch size.
    auto heat = aftrans::read_ppm(prefix + "_heatmap.ppm");
    CHECK(heat.width == 32);
    CHECK(heat.height == 32);

    // Mode overrides are accepted and recorded.
    const auto prefix2 = (dir / "result_ng").string();
    CHECK(run_cli("visualize -m " + (out / "model.aftk").string() + " -i " + input +
                  " -o " + prefix2 + " --fusion-mode no-gate --box-mode extreme") == 0);
    std::ifstream rf2(prefix2 + "_report.json");
    json report2 = json::parse(rf2);
    CHECK(report2.at("fusion_mode").get<std::string>() == "no-gate");
    CHECK(report2.at("box_mode").get<std::string>() == "extreme");

    // Unknown mode strings exit 2 without leaving partial outputs.
    const auto prefix3 = (dir / "result_bad").string();
    CHECK(run_cli("visualize -m " + (out / "model.aftk").string() + " -i " + input +
                  " -o " + prefix3 + " --fusion-mode bogus") == 2);
    CHECK_FALSE(fs::exists(prefix3 + "_report.json"));
    fs::remove_all(dir);
}

TEST_CASE("cli: argument errors from the parser exit 2") {
    CHECK(run_cli("") == 2);                    // subcommand required
    CHECK(run_cli("train") == 2);               // missing --config
    CHECK(run_cli("no-such-subcommand") == 2);  // unknown subcommand
}
