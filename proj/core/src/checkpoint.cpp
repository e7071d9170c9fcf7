#include "vtg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vtg {

namespace {

std::string blob_name(size_t index, const std::string& param) {
    std::string s = param;
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%04zu_", index);
    return std::string(buf) + s + ".bin";
}

void write_f32_le(std::ofstream& out, const float* data, int64_t count) {
    for (int64_t i = 0; i < count; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                              static_cast<unsigned char>((bits >> 8) & 0xff),
                              static_cast<unsigned char>((bits >> 16) & 0xff),
                              static_cast<unsigned char>((bits >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
}

void read_f32_le(std::ifstream& in, float* data, int64_t count) {
    for (int64_t i = 0; i < count; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        const uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                              (static_cast<uint32_t>(b[2]) << 16) |
                              (static_cast<uint32_t>(b[3]) << 24);
        std::memcpy(&data[i], &bits, 4);
    }
}

}  // namespace

void save_named_tensors(const std::string& dir,
                        const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                        const CheckpointMeta& meta) {
    fs::create_directories(dir);
    json manifest;
    manifest["kind"] = meta.kind;
    manifest["fields"] = meta.fields;
    json list = json::array();
    for (size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, t] = tensors[i];
        const std::string file = blob_name(i, name);
        json entry;
        entry["name"] = name;
        entry["shape"] = t->shape();
        entry["dtype"] = "f32";
        entry["file"] = file;
        list.push_back(entry);
        std::ofstream out(fs::path(dir) / file, std::ios::binary);
        if (!out) fail("checkpoint: cannot write " + (fs::path(dir) / file).string());
        write_f32_le(out, t->data(), t->size());
    }
    manifest["tensors"] = list;
    std::ofstream mout(fs::path(dir) / "manifest.json");
    if (!mout) fail("checkpoint: cannot write manifest in " + dir);
    mout << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_named_tensors(const std::string& dir) {
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) fail("checkpoint: missing manifest.json in " + dir);
    json manifest;
    min >> manifest;
    LoadedCheckpoint out;
    out.meta.kind = manifest.value("kind", "");
    if (manifest.contains("fields"))
        for (auto& [k, v] : manifest["fields"].items()) out.meta.fields[k] = v.get<std::string>();
    for (const auto& entry : manifest["tensors"]) {
        const std::string name = entry["name"].get<std::string>();
        const std::vector<int> shape = entry["shape"].get<std::vector<int>>();
        if (entry["dtype"].get<std::string>() != "f32")
            fail("checkpoint: unsupported dtype for " + name);
        Tensor t(shape);
        std::ifstream in(fs::path(dir) / entry["file"].get<std::string>(), std::ios::binary);
        if (!in) fail("checkpoint: missing blob for " + name);
        read_f32_le(in, t.data(), t.size());
        if (!in) fail("checkpoint: truncated blob for " + name);
        out.order.push_back(name);
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

uint64_t checkpoint_content_hash(const std::string& dir) {
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) fail("checkpoint: missing manifest.json in " + dir);
    json manifest;
    min >> manifest;
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& entry : manifest["tensors"]) {
        const std::string file = entry["file"].get<std::string>();
        std::ifstream in(fs::path(dir) / file, std::ios::binary);
        if (!in) fail("checkpoint: missing blob " + file);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        h = fnv1a64(bytes.data(), bytes.size(), h);
    }
    return h;
}

namespace {

std::map<std::string, std::string> config_fields(const DenoiserConfig& cfg) {
    std::map<std::string, std::string> f;
    f["latent_channels"] = std::to_string(cfg.latent_channels);
    f["base_width"] = std::to_string(cfg.base_width);
    f["levels"] = std::to_string(cfg.levels);
    f["attention_heads"] = std::to_string(cfg.attention_heads);
    f["frame_count"] = std::to_string(cfg.frame_count);
    f["text_embed_dim"] = std::to_string(cfg.text_embed_dim);
    f["norm_groups"] = std::to_string(cfg.norm_groups);
    std::string targets;
    for (const auto& t : cfg.lora_targets) targets += (targets.empty() ? "" : ",") + t;
    f["lora_targets"] = targets;
    return f;
}

DenoiserConfig config_from_fields(const std::map<std::string, std::string>& f) {
    DenoiserConfig cfg;
    auto geti = [&](const char* k) {
        auto it = f.find(k);
        if (it == f.end()) fail(std::string("checkpoint: missing config field ") + k);
        return std::stoi(it->second);
    };
    cfg.latent_channels = geti("latent_channels");
    cfg.base_width = geti("base_width");
    cfg.levels = geti("levels");
    cfg.attention_heads = geti("attention_heads");
    cfg.frame_count = geti("frame_count");
    cfg.text_embed_dim = geti("text_embed_dim");
    cfg.norm_groups = geti("norm_groups");
    auto it = f.find("lora_targets");
    if (it != f.end() && !it->second.empty()) {
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.lora_targets.push_back(tok);
    }
    return cfg;
}

}  // namespace

void save_denoiser(const std::string& dir, Denoiser& model) {
    auto params = model.params();
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    tensors.reserve(params.size());
    for (auto& np : params) tensors.emplace_back(np.name, &np.param->value);
    CheckpointMeta meta;
    meta.kind = "denoiser";
    meta.fields = config_fields(model.config());
    save_named_tensors(dir, tensors, meta);
}

DenoiserConfig load_denoiser_config(const std::string& dir) {
    auto loaded = load_named_tensors(dir);
    if (loaded.meta.kind != "denoiser") fail("checkpoint: not a denoiser checkpoint: " + dir);
    return config_from_fields(loaded.meta.fields);
}

Denoiser load_denoiser(const std::string& dir) {
    auto loaded = load_named_tensors(dir);
    if (loaded.meta.kind != "denoiser") fail("checkpoint: not a denoiser checkpoint: " + dir);
    Denoiser model(config_from_fields(loaded.meta.fields));
    auto params = model.params();
    if (params.size() != loaded.tensors.size())
        fail("checkpoint: parameter count mismatch in " + dir);
    for (auto& np : params) {
        auto it = loaded.tensors.find(np.name);
        if (it == loaded.tensors.end()) fail("checkpoint: missing parameter " + np.name);
        if (!(it->second.shape() == np.param->value.shape()))
            fail("checkpoint: shape mismatch for " + np.name);
        np.param->value = it->second;
    }
    return model;
}

void save_lora(const std::string& dir, LoraAdapter& adapter) {
    auto params = adapter.params();
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& np : params) tensors.emplace_back(np.name, &np.param->value);
    CheckpointMeta meta;
    meta.kind = "lora";
    meta.fields["rank"] = std::to_string(adapter.rank);
    if (!adapter.layers.empty())
        meta.fields["scaling"] = std::to_string(static_cast<double>(adapter.layers.begin()->second.scaling));
    save_named_tensors(dir, tensors, meta);
}

LoraAdapter load_lora(const std::string& dir) {
    auto loaded = load_named_tensors(dir);
    if (loaded.meta.kind != "lora") fail("checkpoint: not a lora checkpoint: " + dir);
    LoraAdapter a;
    a.rank = std::stoi(loaded.meta.fields.at("rank"));
    float scaling = 1.0f;
    if (auto it = loaded.meta.fields.find("scaling"); it != loaded.meta.fields.end())
        scaling = std::stof(it->second);
    for (const auto& name : loaded.order) {
        // names come in pairs: <layer>.down / <layer>.up
        const auto pos = name.rfind('.');
        const std::string layer = name.substr(0, pos);
        const std::string leaf = name.substr(pos + 1);
        auto& lm = a.layers[layer];
        lm.scaling = scaling;
        if (leaf == "down") {
            lm.down.init(loaded.tensors.at(name).shape());
            lm.down.value = loaded.tensors.at(name);
        } else if (leaf == "up") {
            lm.up.init(loaded.tensors.at(name).shape());
            lm.up.value = loaded.tensors.at(name);
        } else {
            fail("checkpoint: unexpected lora tensor " + name);
        }
    }
    return a;
}

}  // namespace vtg
