#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nextview/image.hpp"
#include "nextview/rng.hpp"
#include "nextview/synthdata.hpp"

namespace nextview::recon3d {

// N^3 occupancy over [-1,1]^3; voxel (i,j,k) center at ((i+0.5)*2/N - 1, ...).
struct OccupancyGrid {
    int n = 0;
    std::vector<std::uint8_t> voxels;  // x-major, then y, then z

    explicit OccupancyGrid(int size)
        : n(size), voxels(static_cast<std::size_t>(size) * size * size, 0) {}

    std::uint8_t& at(int x, int y, int z) {
        return voxels[(static_cast<std::size_t>(x) * n + y) * n + z];
    }
    std::uint8_t at(int x, int y, int z) const {
        return voxels[(static_cast<std::size_t>(x) * n + y) * n + z];
    }
    std::int64_t occupied_count() const;
};

struct PointCloud {
    std::vector<std::array<double, 3>> points;
};

// Foreground iff min channel < 1 - threshold; exact on white backgrounds.
std::vector<std::uint8_t> silhouette(const Image& view, double threshold);

struct MaskedView {
    std::vector<std::uint8_t> mask;  // resolution x resolution, row-major
    int resolution = 0;
    synthdata::AbsolutePose pose;
};

// Voxel occupied iff its center projects inside every view's mask. Uses the
// same orthographic camera mapping as the renderer.
OccupancyGrid carve(const std::vector<MaskedView>& views, int n, double ortho_half_width = 1.8);

// Uniform seeded sample over boundary-voxel centers (occupied voxels with an
// empty 6-neighbor; outside the grid counts as empty), jittered within the
// voxel. Exact count, with replacement when there are fewer boundary voxels.
PointCloud surface_points(const OccupancyGrid& grid, int count, std::uint64_t seed);

// Area-weighted uniform samples on the union surface of the scene's
// primitives (points strictly inside another primitive are rejected).
PointCloud gt_surface_points(const synthdata::SceneSpec& scene, int count, std::uint64_t seed);

// plain-text XYZ, one point per line
void write_xyz(const std::string& path, const PointCloud& cloud);
PointCloud read_xyz(const std::string& path);

}  // namespace nextview::recon3d
