#include "nextview/image.hpp"

#include <cmath>
#include <cstring>

namespace nextview {

Image resize_bilinear(const Image& src, int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("resize: non-positive size");
    if (h == src.height && w == src.width) return src;
    Image dst(h, w);
    const double sy = static_cast<double>(src.height) / h;
    const double sx = static_cast<double>(src.width) / w;
    for (int y = 0; y < h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
                const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

Image quantize8(const Image& src) {
    Image out(src.height, src.width);
    for (std::size_t i = 0; i < src.data.size(); ++i) {
        const int q = static_cast<int>(std::lround(std::clamp(src.data[i], 0.0, 1.0) * 255.0));
        out.data[i] = q / 255.0;
    }
    return out;
}

Tensor image_to_tensor(const Image& im, bool to_signed) {
    Tensor t({3, im.height, im.width});
    const std::int64_t hw = static_cast<std::int64_t>(im.height) * im.width;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = im.at(y, x, c);
                if (to_signed) v = v * 2.0 - 1.0;
                t.data[c * hw + static_cast<std::int64_t>(y) * im.width + x] = v;
            }
    return t;
}

Image tensor_to_image(const Tensor& t, bool from_signed) {
    if (t.rank() != 3 || t.dim(0) != 3) throw std::invalid_argument("tensor_to_image: expect (3,H,W)");
    Image im(t.dim(1), t.dim(2));
    const std::int64_t hw = static_cast<std::int64_t>(im.height) * im.width;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = t.data[c * hw + static_cast<std::int64_t>(y) * im.width + x];
                if (from_signed) v = (v + 1.0) * 0.5;
                im.at(y, x, c) = v;
            }
    return im;
}

namespace gridops {

Image tile_row(const Image& left, const Image& right) {
    if (!left.same_size(right) || left.height != left.width)
        throw std::invalid_argument("tile_row: views must be square and equally sized");
    const int v = left.height;
    Image row(v, 2 * v);
    for (int y = 0; y < v; ++y) {
        std::memcpy(&row.data[(static_cast<std::size_t>(y) * 2 * v) * 3],
                    &left.data[(static_cast<std::size_t>(y) * v) * 3], sizeof(double) * v * 3);
        std::memcpy(&row.data[(static_cast<std::size_t>(y) * 2 * v + v) * 3],
                    &right.data[(static_cast<std::size_t>(y) * v) * 3], sizeof(double) * v * 3);
    }
    return row;
}

std::pair<Image, Image> split_row(const Image& row) {
    if (row.width != 2 * row.height) throw std::invalid_argument("split_row: width must be 2x height");
    const int v = row.height;
    Image left(v, v), right(v, v);
    for (int y = 0; y < v; ++y) {
        std::memcpy(&left.data[(static_cast<std::size_t>(y) * v) * 3],
                    &row.data[(static_cast<std::size_t>(y) * 2 * v) * 3], sizeof(double) * v * 3);
        std::memcpy(&right.data[(static_cast<std::size_t>(y) * v) * 3],
                    &row.data[(static_cast<std::size_t>(y) * 2 * v + v) * 3], sizeof(double) * v * 3);
    }
    return {std::move(left), std::move(right)};
}

Image tile6(const std::vector<Image>& views) {
    if (views.size() != 6) throw std::invalid_argument("tile6: expect 6 views");
    const Image row1 = tile_row(views[0], views[1]);
    const Image row2 = tile_row(views[2], views[3]);
    const Image row3 = tile_row(views[4], views[5]);
    if (!row1.same_size(row2) || !row2.same_size(row3))
        throw std::invalid_argument("tile6: view sizes differ");
    const int v = views[0].height;
    Image grid(3 * v, 2 * v);
    const std::size_t rowbytes = static_cast<std::size_t>(v) * 2 * v * 3;
    std::memcpy(grid.data.data(), row1.data.data(), sizeof(double) * rowbytes);
    std::memcpy(grid.data.data() + rowbytes, row2.data.data(), sizeof(double) * rowbytes);
    std::memcpy(grid.data.data() + 2 * rowbytes, row3.data.data(), sizeof(double) * rowbytes);
    return grid;
}

std::vector<Image> untile6(const Image& grid) {
    if (grid.width * 3 != grid.height * 2 || grid.height % 3 != 0)
        throw std::invalid_argument("untile6: expect 3V x 2V grid");
    const int v = grid.height / 3;
    std::vector<Image> views;
    views.reserve(6);
    for (int r = 0; r < 3; ++r) {
        Image row(v, 2 * v);
        std::memcpy(row.data.data(),
                    grid.data.data() + static_cast<std::size_t>(r) * v * 2 * v * 3,
                    sizeof(double) * static_cast<std::size_t>(v) * 2 * v * 3);
        auto [l, rgt] = split_row(row);
        views.push_back(std::move(l));
        views.push_back(std::move(rgt));
    }
    return views;
}

}  // namespace gridops

}  // namespace nextview
