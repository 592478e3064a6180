#pragma once

#include <filesystem>

#include "mfeit/ad/tape.hpp"

namespace mfeit::ad {

/// "MFEITW01": u32 count, then per entry {u16 name length, name, u8 rank, u32 dims, float32 data},
/// trailing FNV-1a checksum. Parameters come first, then buffers.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

/// Overwrites values of an existing set; every stored name must exist with the same shape and vice versa.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

}  // namespace mfeit::ad
