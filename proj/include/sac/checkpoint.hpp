#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sac/param_store.hpp"

namespace sac {

// Flat binary checkpoint: 8-byte magic "SACCKPT1", u32 version, u64 blob
// count, then name-sorted blobs of (u32 name length, name bytes, u32 rank,
// u64 dims..., f64 values...), all little-endian. Stores are addressed as
// "<store>/<param>".
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores);

// Loads into existing stores; every blob must match an existing parameter's
// shape and every parameter must be present in the file.
void load_checkpoint(const std::string& path, const std::vector<std::pair<std::string, ParamStore*>>& stores);

}  // namespace sac
