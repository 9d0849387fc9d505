#pragma once

#include <string>

#include "tmt/model.hpp"

namespace tmt {

// Binary snapshot: magic + version, the run-config JSON that built the model,
// a named shape manifest, then 32-bit little-endian payloads in manifest
// order. Parameters and OIM prototype tables are both captured, so training
// can resume and evaluation sees the trained state.

void save_checkpoint(const std::string& path, const TmtModel& model,
                     const std::string& config_json);

// header only; used to rebuild the model before loading tensors
std::string read_checkpoint_config(const std::string& path);

// Fills an already-built model. Every manifest entry must match the model's
// expected name and shape, in order; any mismatch names the tensor.
void load_checkpoint(const std::string& path, TmtModel& model);

} // namespace tmt
