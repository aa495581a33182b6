#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "neutart/tensor.hpp"

namespace neutart::num {

// Flat archive of named tensors. Layout, all little-endian:
//   magic "NTCK0001" | u64 tensor count
//   per tensor: u32 name length | name bytes | u8 dtype (0 = f64)
//               | u8 ndim | u64 dims[ndim] | f64 values (row-major)
// The byte stream is bit-exact across platforms.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& named);
std::map<std::string, Tensor> load_tensors(const std::string& path);

} // namespace neutart::num
