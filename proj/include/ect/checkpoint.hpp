#pragma once

// Binary parameter checkpoints.
//
//   "ECTCKPT1"                      8 bytes
//   u32 entry count
//   per entry: u32 name length, name bytes, u32 rank, u32 extents[rank],
//              float32 values (little-endian, row-major)
//
// All integers are little-endian. Double-precision models are narrowed to
// float32 on save.

#include <cstddef>
#include <string>

#include "ect/param_store.hpp"

namespace ect {

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& path);

/// Requires the file to hold exactly the registered names with matching
/// shapes. Throws FormatError on any mismatch, naming the offending entry.
template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::string& path);

/// Loads every entry whose name is registered in `store` (shapes must match)
/// and skips the rest. Returns the number of tensors loaded; throws
/// FormatError when nothing matches.
template <typename T>
std::size_t load_partial(ParamStore<T>& store, const std::string& path);

}  // namespace ect
