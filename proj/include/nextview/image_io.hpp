#pragma once

#include <string>

#include "nextview/image.hpp"

namespace nextview {

// 8-bit RGB PNG. Values are clamped to [0,1] and quantized on write;
// load returns q/255 doubles, so write-then-read equals quantize8(image).
void write_png(const std::string& path, const Image& im);
Image read_png(const std::string& path);

}  // namespace nextview
