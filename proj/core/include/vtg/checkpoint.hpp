#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vtg/backbone.hpp"
#include "vtg/lora.hpp"
#include "vtg/tensor.hpp"

namespace vtg {

/// Checkpoint directory layout: manifest.json listing parameter names, shapes
/// and numeric type, plus one little-endian float32 blob per parameter.
/// Round trips are bit-exact.
struct CheckpointMeta {
    std::string kind;
    std::map<std::string, std::string> fields;
};

void save_named_tensors(const std::string& dir,
                        const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                        const CheckpointMeta& meta);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::string> order;  // manifest order
    std::map<std::string, Tensor> tensors;
};

LoadedCheckpoint load_named_tensors(const std::string& dir);

/// FNV-1a over the manifest-ordered blob bytes.
uint64_t checkpoint_content_hash(const std::string& dir);

void save_denoiser(const std::string& dir, Denoiser& model);
Denoiser load_denoiser(const std::string& dir);
DenoiserConfig load_denoiser_config(const std::string& dir);

/// Adapter checkpoints use the same layout with a rank field in the manifest.
void save_lora(const std::string& dir, LoraAdapter& adapter);
LoraAdapter load_lora(const std::string& dir);

}  // namespace vtg
