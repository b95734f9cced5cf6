#pragma once

#include <cstdint>
#include <filesystem>

#include "artuda/nn.hpp"

namespace artuda::nn {

// Binary checkpoint: a manifest of named arrays (parameters plus BN running
// stats), each entry (name, shape, little-endian 64-bit floats). Round-trips
// bit-exactly.
//
// Layout: magic "ARTDCKPT", u32 entry count, then per entry
//   u32 name length, name bytes, u32 rank, u64 dims..., f64 data...
// with all integers and floats little-endian.

void save_checkpoint(const UDAModel& model, const std::filesystem::path& path);

/// Rebuilds a model from `spec` and the arrays in `path`; names and shapes
/// must match the spec's layout exactly.
UDAModel load_checkpoint(const ModelSpec& spec,
                         const std::filesystem::path& path);

/// FNV-1a digest of the serialized checkpoint bytes; convenient for
/// determinism and no-mutation assertions.
std::uint64_t checkpoint_digest(const UDAModel& model);

}  // namespace artuda::nn
