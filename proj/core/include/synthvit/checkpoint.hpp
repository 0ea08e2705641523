#pragma once

#include <string>
#include <utility>
#include <vector>

#include "synthvit/tensor.hpp"
#include "synthvit/vit.hpp"

namespace synthvit {

// Checkpoint container. Layout, all integers little-endian:
//   magic "SVCP" | u32 version | u64 config length | config JSON (canonical,
//   sorted keys) | u32 tensor count | per tensor: u16 name length, name,
//   u8 dtype (0 = float64), u8 rank, u64 dims[rank], float64 payload |
//   u32 CRC-32 of every preceding byte.
// Truncation or corruption raises IntegrityError with the failing offset.

struct CheckpointEntry {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::string config_json;
    std::vector<CheckpointEntry> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

// Classifier checkpoints ("kind": "vit" in the config block).

void save_vit_checkpoint(const std::string& path, ViTParams& params);

ViTParams load_vit_checkpoint(const std::string& path);

/// Load weights into an existing parameter set; the stored config must equal
/// params.config exactly.
void load_vit_checkpoint_into(const std::string& path, ViTParams& params);

}  // namespace synthvit
