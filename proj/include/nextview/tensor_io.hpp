#pragma once

#include <string>

#include "nextview/tensor.hpp"

namespace nextview {

// Flat binary tensor container ("NVT1": magic, rank, dims, doubles).
// Training tensors (rows, grids) round-trip losslessly, unlike the 8-bit
// image files.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace nextview
