#pragma once

#include <string>

#include "navil/params.hpp"

namespace navil {

// A checkpoint directory holds model.json (name, group, shape, dtype, offset,
// nbytes per tensor) and model.bin (contiguous little-endian float32 payload).
// Values are cast 64→32 bit on save; save→load→save is byte-identical.

inline constexpr const char* kManifestFile = "model.json";
inline constexpr const char* kPayloadFile = "model.bin";

void save_checkpoint(const std::string& dir, const ParameterStore& store);

// Fills an already-initialized store. Throws ShapeError if the manifest's
// names or shapes disagree with the store, std::runtime_error on I/O or
// layout problems (ranges must tile the payload exactly).
void load_checkpoint(const std::string& dir, ParameterStore& store);

}  // namespace navil
