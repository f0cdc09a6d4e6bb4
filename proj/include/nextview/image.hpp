#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nextview/tensor.hpp"

namespace nextview {

// RGB image, interleaved doubles in [0,1]. Square V x V for single views,
// V x 2V rows and 3V x 2V grids for the tiled layouts.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height*width*3

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool same_size(const Image& o) const { return height == o.height && width == o.width; }

    static Image constant(int h, int w, double r, double g, double b) {
        Image im(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                im.at(y, x, 0) = r;
                im.at(y, x, 1) = g;
                im.at(y, x, 2) = b;
            }
        return im;
    }
};

inline void clamp01(Image& im) {
    for (auto& v : im.data) v = std::clamp(v, 0.0, 1.0);
}

// Bilinear resize to (h, w).
Image resize_bilinear(const Image& src, int h, int w);

// Quantize to 8-bit and back; the dataset's on-disk precision.
Image quantize8(const Image& src);

// Image <-> planar (C,H,W) tensor, optionally remapped [0,1] <-> [-1,1].
Tensor image_to_tensor(const Image& im, bool to_signed);
Image tensor_to_image(const Tensor& t, bool from_signed);

namespace gridops {

// Places left in columns [0,V) and right in [V,2V). Same V required.
Image tile_row(const Image& left, const Image& right);
// Exact inverse of tile_row; input width must be 2x height.
std::pair<Image, Image> split_row(const Image& row);
// Row-major 3x2 tiling: view i (0-based) at row i/2, column i%2.
Image tile6(const std::vector<Image>& views);
std::vector<Image> untile6(const Image& grid);

}  // namespace gridops

}  // namespace nextview
