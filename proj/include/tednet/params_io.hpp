#pragma once

// Parameter container, format "TDNW" version 1:
//   magic 'TDNW' | u16 version | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | u32 dims[rank]
//               | u64 payload offset | u64 payload bytes
//   payload: little-endian float32, row-major, in manifest order.
// Round trips are bit-exact.

#include <string>

#include "tednet/model.hpp"

namespace tednet {

void save_params(const std::string& path, const TedNetParams<float>& params);

// Loads and validates against the parameter layout the config implies; the
// first tensor whose name or shape disagrees is reported.
TedNetParams<float> load_params(const std::string& path, const ModelConfig& cfg);

}  // namespace tednet
