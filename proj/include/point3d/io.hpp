#pragma once

#include <string>

#include "point3d/tensor.hpp"

namespace point3d {

// PTK1 binary tensor container. Layout, all little-endian:
//   magic "PTK1" | u32 rank | rank x u64 dims | u8 dtype (0 = f64) | payload
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

} // namespace point3d
