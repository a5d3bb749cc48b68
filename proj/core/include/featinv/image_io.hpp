#pragma once

#include <string>

#include "featinv/tensor.hpp"

namespace featinv::io {

// 8-bit PNG round trip for (C,H,W) tensors with values in [0,1]; C must be
// 1 (gray) or 3 (RGB). Values are clamped before quantization.
void write_png(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);

// Tiles images (all same shape, [0,1]) into a grid with a 2px separator.
Tensor make_grid(const std::vector<Tensor>& images, int columns);

}  // namespace featinv::io
