#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nextview/errors.hpp"
#include "nextview/image.hpp"
#include "nextview/rng.hpp"

using namespace nextview;
using namespace nextview::gridops;

namespace {
Image random_image(int h, int w, Rng& rng) {
    Image im(h, w);
    for (auto& v : im.data) v = rng.uniform();
    return im;
}
}  // namespace

TEST_CASE("tile_row places left and right halves") {
    const Image zeros = Image::constant(8, 8, 0, 0, 0);
    const Image ones = Image::constant(8, 8, 1, 1, 1);
    const Image row = tile_row(zeros, ones);
    CHECK(row.height == 8);
    CHECK(row.width == 16);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) CHECK(row.at(y, x, c) == (x < 8 ? 0.0 : 1.0));
}

TEST_CASE("tile_row/split_row roundtrip is bit-exact on random images") {
    Rng rng(42);
    for (int trial = 0; trial < 8; ++trial) {
        const Image a = random_image(16, 16, rng);
        const Image b = random_image(16, 16, rng);
        const auto [l, r] = split_row(tile_row(a, b));
        CHECK(l.data == a.data);
        CHECK(r.data == b.data);
    }
}

TEST_CASE("split_row of an all-white row yields two all-white views") {
    const Image white = Image::constant(8, 16, 1, 1, 1);
    const auto [l, r] = split_row(white);
    for (double v : l.data) CHECK(v == 1.0);
    for (double v : r.data) CHECK(v == 1.0);
}

TEST_CASE("size and aspect preconditions") {
    CHECK_THROWS_AS(tile_row(Image(8, 8), Image(16, 16)), std::invalid_argument);
    CHECK_THROWS_AS(split_row(Image(8, 8)), std::invalid_argument);
    CHECK_THROWS_AS(tile6(std::vector<Image>(5, Image(8, 8))), std::invalid_argument);
    CHECK_THROWS_AS(untile6(Image(9, 9)), std::invalid_argument);
}

TEST_CASE("tile6 places six constant blocks row-major") {
    std::vector<Image> views;
    for (int i = 0; i < 6; ++i) views.push_back(Image::constant(4, 4, i / 6.0, 0, 0));
    const Image grid = tile6(views);
    CHECK(grid.height == 12);
    CHECK(grid.width == 8);
    for (int i = 0; i < 6; ++i) {
        const int row0 = (i / 2) * 4, col0 = (i % 2) * 4;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(grid.at(row0 + y, col0 + x, 0) == i / 6.0);
    }
}

TEST_CASE("untile6(tile6(x)) is the identity, bit-exact") {
    Rng rng(7);
    std::vector<Image> views;
    for (int i = 0; i < 6; ++i) views.push_back(random_image(8, 8, rng));
    const auto back = untile6(tile6(views));
    REQUIRE(back.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(back[static_cast<std::size_t>(i)].data == views[static_cast<std::size_t>(i)].data);
}

TEST_CASE("tile6 equals the three stacked tile_row outputs") {
    Rng rng(9);
    std::vector<Image> views;
    for (int i = 0; i < 6; ++i) views.push_back(random_image(8, 8, rng));
    const Image grid = tile6(views);
    for (int k = 1; k <= 3; ++k) {
        const Image row = tile_row(views[static_cast<std::size_t>(2 * (k - 1))],
                                   views[static_cast<std::size_t>(2 * k - 1)]);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c)
                    CHECK(grid.at((k - 1) * 8 + y, x, c) == row.at(y, x, c));
    }
}

TEST_CASE("quantize8 is idempotent") {
    Rng rng(11);
    const Image a = random_image(8, 8, rng);
    const Image q = quantize8(a);
    CHECK(quantize8(q).data == q.data);
}

#include <filesystem>

#include "nextview/tensor_io.hpp"

TEST_CASE("grid tensors roundtrip through the binary container losslessly") {
    namespace fs = std::filesystem;
    Rng rng(21);
    std::vector<Image> views;
    for (int i = 0; i < 6; ++i) views.push_back(random_image(8, 8, rng));
    const Tensor grid = image_to_tensor(tile6(views), /*to_signed=*/true);
    const std::string path = (fs::temp_directory_path() / "nextview_grid.nvt").string();
    save_tensor(path, grid);
    const Tensor back = load_tensor(path);
    CHECK(back.dims == grid.dims);
    CHECK(back.data == grid.data);  // full double precision, unlike the PNGs
    fs::remove(path);
    CHECK_THROWS_AS(load_tensor("/nonexistent.nvt"), DataError);
}
