#pragma once

#include <string>

#include "forec/model.hpp"

namespace forec::model {

// Checkpoint = <prefix>.manifest (text) + <prefix>.payload (binary).
// The manifest holds `# key value` metadata lines followed by one
// `name shape frozen dtype offset` line per tensor; the payload holds
// IEEE-754 little-endian 64-bit floats, row-major, in manifest order,
// with `offset` the byte offset of each tensor. Round-trips bit-exactly.
void save_model(const Model& model, const std::string& prefix);
Model load_model(const std::string& prefix);

// Provenance hash over manifest and payload bytes.
std::string checkpoint_hash(const std::string& prefix);

}  // namespace forec::model
