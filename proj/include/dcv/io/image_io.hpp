#pragma once

#include <string>

#include "dcv/core/tensor.hpp"

namespace dcv::io {

// Images are {C,H,W} tensors with values in [0,1], C of 1 or 3.
// Format is chosen by extension: .png, .ppm (color), .pgm (gray).
Tensor<double> load_image(const std::string& path);
void save_image(const std::string& path, const Tensor<double>& img);

}  // namespace dcv::io
