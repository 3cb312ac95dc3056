#pragma once

#include <string>

#include "segen/tensor.hpp"

namespace seg {

// [3,H,W] float image in [0,1] -> 8-bit RGB PNG
void write_png_rgb(const std::string& path, const Tensor& img);

// [H,W] float map -> 8-bit grayscale PNG. With normalize the map is scaled
// so its max maps to 255.
void write_png_gray(const std::string& path, const Tensor& map, bool normalize = false);

Tensor read_png_rgb(const std::string& path);  // -> [3,H,W] floats in [0,1]

}  // namespace seg
