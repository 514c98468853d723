#pragma once

#include <string>

#include "mbbr/optim.hpp"

namespace mbbr {

// Binary parameter file. Layout, all little-endian:
//   8 bytes  magic "MBBRCKPT"
//   u32      version (1)
//   u8       dtype: 0 = f64, 1 = f32
//   u32      tensor count
//   per tensor, in ParamSet order:
//     u32 name length, name bytes, u32 ndim, u64 dims..., payload
// Written atomically (temp file + rename).
void save_checkpoint(const std::string& path, const ad::ParamSet& params,
                     ad::Precision dtype);

// Reads a checkpoint into a fresh ParamSet (leaves, requires_grad true).
ad::ParamSet read_checkpoint(const std::string& path);

// Copies stored values into an existing ParamSet. Names and shapes must match
// in order; anything else is a DataError.
void load_checkpoint(const std::string& path, ad::ParamSet& params);

}  // namespace mbbr
