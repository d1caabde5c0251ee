#pragma once

#include <filesystem>

#include "tsg/tensor.hpp"

namespace tsg {

// 8-bit PNG, RGB. Load converts to [0,1] floats by /255 (alpha dropped,
// grayscale replicated); save clamps to [0,1] and rounds to 255 levels --
// the one place the training-graph tensors get clamped.
Tensor load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace tsg
