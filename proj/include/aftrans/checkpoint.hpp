#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aftrans/config.hpp"
#include "aftrans/optimizer.hpp"
#include "aftrans/pipeline.hpp"

namespace aftrans {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts unsupported");

struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace ckpt {

constexpr char kMagic[4] = {'A', 'F', 'T', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
const char* scalar_kind_name() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    else return "f64";
}

}  // namespace ckpt

/// Layout: magic "AFTK", u32 version, u64 JSON header length, JSON header
/// (config + manifest + optimizer record), then raw little-endian scalars in
/// manifest order.
template <typename T>
void save_checkpoint(Model<T>& model, const SgdOptimizer<T>* opt, const std::string& path) {
    using nlohmann::json;
    const char* kind = ckpt::scalar_kind_name<T>();

    json manifest = json::array();
    std::vector<const std::vector<T>*> buffers;
    std::uint64_t offset = 0;

    auto add_entry = [&](const std::string& name, const std::vector<std::size_t>& shape,
                         const std::vector<T>& data) {
        json e;
        e["name"] = name;
        e["shape"] = shape;
        e["scalar_kind"] = kind;
        e["offset"] = offset;
        manifest.push_back(e);
        buffers.push_back(&data);
        offset += data.size() * sizeof(T);
    };

    for (auto& [name, t] : model.named_params())
        add_entry(name, t->shape, *t->data);

    json header;
    header["config"] = nlohmann::json::parse(model_config_to_json(model.cfg));
    header["scalar_kind"] = kind;
    header["step_index"] = opt ? opt->step_index : 0;
    if (opt) {
        json o;
        o["base_lr"] = opt->base_lr;
        o["warmup_steps"] = opt->warmup_steps;
        o["total_steps"] = opt->total_steps;
        o["momentum"] = opt->momentum;
        header["optimizer"] = o;
        const auto trainable = model.trainable_params();
        if (!opt->velocity.empty()) {
            auto named = model.encoder.named_params();
            for (std::size_t i = 0; i < opt->velocity.size() && i < named.size(); ++i)
                add_entry("opt.velocity." + named[i].first, named[i].second->shape,
                          opt->velocity[i]);
        }
    }
    header["manifest"] = manifest;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("checkpoint: cannot write " + path);
    out.write(ckpt::kMagic, 4);
    const std::uint32_t version = ckpt::kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = header_text.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto* buf : buffers)
        out.write(reinterpret_cast<const char*>(buf->data()),
                  static_cast<std::streamsize>(buf->size() * sizeof(T)));
    if (!out) throw ValueError("checkpoint: write failed for " + path);
}

template <typename T>
struct LoadedCheckpoint {
    Model<T> model;
    std::optional<SgdOptimizer<T>> optimizer;
    std::size_t step_index = 0;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    using nlohmann::json;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("checkpoint: cannot open " + path);

    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t hlen = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw IntegrityError("checkpoint: bad magic in " + path);
    if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
        version != ckpt::kVersion)
        throw IntegrityError("checkpoint: unsupported format version");
    if (!in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen)))
        throw IntegrityError("checkpoint: truncated header length");
    std::string header_text(hlen, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(hlen)))
        throw IntegrityError("checkpoint: truncated JSON header");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::parse_error&) {
        throw IntegrityError("checkpoint: corrupt JSON header");
    }

    const std::string kind = header.value("scalar_kind", "");
    if (kind != ckpt::scalar_kind_name<T>())
        throw IntegrityError("checkpoint: scalar kind '" + kind +
                             "' does not match the requested loader");

    ModelConfig cfg;
    try {
        cfg = model_config_from_json(header.at("config").dump());
    } catch (const std::exception& e) {
        throw IntegrityError(std::string("checkpoint: bad embedded config: ") + e.what());
    }

    // Read the payload up front: a shape mismatch must not leave partial state.
    std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());

    LoadedCheckpoint<T> result{Model<T>::init(cfg, 0), std::nullopt, 0};
    result.step_index = header.value("step_index", std::size_t{0});

    std::optional<SgdOptimizer<T>> opt;
    std::vector<std::vector<T>> velocities;
    if (header.contains("optimizer")) {
        const auto& o = header.at("optimizer");
        opt = SgdOptimizer<T>(o.at("base_lr").get<double>(),
                              o.at("warmup_steps").get<std::size_t>(),
                              o.at("total_steps").get<std::size_t>(),
                              o.at("momentum").get<double>());
        opt->step_index = result.step_index;
    }

    auto named = result.model.named_params();
    auto find_param = [&](const std::string& name) -> Tensor<T>* {
        for (auto& [n, t] : named)
            if (n == name) return t;
        return nullptr;
    };

    std::uint64_t expected_offset = 0;
    std::size_t model_entries = 0;
    auto encoder_named = result.model.encoder.named_params();
    velocities.assign(encoder_named.size(), {});

    for (const auto& e : header.at("manifest")) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
        if (e.at("scalar_kind").get<std::string>() != kind)
            throw IntegrityError("checkpoint: mixed scalar kinds in manifest");
        if (offset != expected_offset)
            throw IntegrityError("checkpoint: manifest offsets are not contiguous");
        const std::size_t count = Tensor<T>::count(shape);
        const std::uint64_t bytes = count * sizeof(T);
        if (offset + bytes > payload.size())
            throw IntegrityError("checkpoint: truncated payload");
        expected_offset = offset + bytes;

        if (name.rfind("opt.velocity.", 0) == 0) {
            if (!opt) throw IntegrityError("checkpoint: velocity entry without optimizer record");
            const std::string pname = name.substr(13);
            bool found = false;
            for (std::size_t i = 0; i < encoder_named.size(); ++i) {
                if (encoder_named[i].first != pname) continue;
                if (encoder_named[i].second->shape != shape)
                    throw IntegrityError("checkpoint: velocity shape mismatch for " + pname);
                velocities[i].resize(count);
                std::memcpy(velocities[i].data(), payload.data() + offset, bytes);
                found = true;
                break;
            }
            if (!found)
                throw IntegrityError("checkpoint: velocity for unknown parameter " + pname);
            continue;
        }

        Tensor<T>* t = find_param(name);
        if (!t) throw IntegrityError("checkpoint: unknown parameter " + name);
        if (t->shape != shape)
            throw IntegrityError("checkpoint: shape mismatch for parameter " + name);
        std::memcpy(t->data->data(), payload.data() + offset, bytes);
        ++model_entries;
    }
    if (expected_offset != payload.size())
        throw IntegrityError("checkpoint: payload length disagrees with manifest");
    if (model_entries != named.size())
        throw IntegrityError("checkpoint: manifest is missing model parameters");

    if (opt) {
        bool any = false;
        for (auto& v : velocities) any = any || !v.empty();
        if (any) {
            for (std::size_t i = 0; i < velocities.size(); ++i)
                if (velocities[i].empty())
                    velocities[i].assign(encoder_named[i].second->numel(), T(0));
            opt->velocity = std::move(velocities);
        }
        result.optimizer = std::move(opt);
    }
    return result;
}

}  // namespace aftrans
