#pragma once

#include <string>
#include <vector>

#include "zocert/layers.hpp"
#include "zocert/tensor.hpp"

namespace zocert {

// Versioned binary container for named tensors: magic, u32 version, u64 entry
// count, then per entry (u32 name length, name bytes, u32 ndim, u64 dims[],
// f64 little-endian values). Round-trips byte-exactly.
struct CheckpointEntry {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Save/restore a model's state() view. Loading requires an exact match of
// names and shapes, in order.
void save_state(const std::string& path, const std::vector<ParamRef>& state);
void load_state(const std::string& path, const std::vector<ParamRef>& state);

// Entry names present in a checkpoint (used to infer the model family).
std::vector<std::string> checkpoint_names(const std::string& path);

// Hex SHA-256 of a file's bytes; run directories record it for every
// checkpoint they consume.
std::string file_sha256_hex(const std::string& path);

}  // namespace zocert
