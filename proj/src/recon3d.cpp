#include "nextview/recon3d.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "nextview/errors.hpp"

namespace nextview::recon3d {

std::int64_t OccupancyGrid::occupied_count() const {
    std::int64_t c = 0;
    for (auto v : voxels) c += v;
    return c;
}

std::vector<std::uint8_t> silhouette(const Image& view, double threshold) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(view.height) * view.width, 0);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            const double mn = std::min({view.at(y, x, 0), view.at(y, x, 1), view.at(y, x, 2)});
            if (mn < 1.0 - threshold) mask[static_cast<std::size_t>(y) * view.width + x] = 1;
        }
    return mask;
}

OccupancyGrid carve(const std::vector<MaskedView>& views, int n, double ortho_half_width) {
    if (views.empty()) throw std::invalid_argument("carve: no views");
    for (const auto& v : views)
        if (v.mask.size() != static_cast<std::size_t>(v.resolution) * v.resolution)
            throw std::invalid_argument("carve: mask/resolution mismatch");

    OccupancyGrid grid(n);
    struct Frame {
        synthdata::CameraFrame cam;
        int res;
        const std::vector<std::uint8_t>* mask;
    };
    std::vector<Frame> frames;
    for (const auto& v : views) frames.push_back({synthdata::camera_frame(v.pose), v.resolution, &v.mask});

    for (int ix = 0; ix < n; ++ix) {
        const double px = (ix + 0.5) * 2.0 / n - 1.0;
        for (int iy = 0; iy < n; ++iy) {
            const double py = (iy + 0.5) * 2.0 / n - 1.0;
            for (int iz = 0; iz < n; ++iz) {
                const double pz = (iz + 0.5) * 2.0 / n - 1.0;
                bool inside = true;
                for (const auto& f : frames) {
                    const double us = px * f.cam.right[0] + py * f.cam.right[1] + pz * f.cam.right[2];
                    const double vs = px * f.cam.up[0] + py * f.cam.up[1] + pz * f.cam.up[2];
                    const int col = static_cast<int>(
                        std::floor((us / ortho_half_width + 1.0) * 0.5 * f.res));
                    const int row = static_cast<int>(
                        std::floor((1.0 - vs / ortho_half_width) * 0.5 * f.res));
                    if (col < 0 || col >= f.res || row < 0 || row >= f.res ||
                        !(*f.mask)[static_cast<std::size_t>(row) * f.res + col]) {
                        inside = false;
                        break;
                    }
                }
                if (inside) grid.at(ix, iy, iz) = 1;
            }
        }
    }
    return grid;
}

namespace {
std::vector<std::array<int, 3>> boundary_voxels(const OccupancyGrid& grid) {
    const int n = grid.n;
    auto occ = [&](int x, int y, int z) -> bool {
        if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) return false;
        return grid.at(x, y, z) != 0;
    };
    std::vector<std::array<int, 3>> out;
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            for (int z = 0; z < n; ++z) {
                if (!grid.at(x, y, z)) continue;
                if (!occ(x - 1, y, z) || !occ(x + 1, y, z) || !occ(x, y - 1, z) ||
                    !occ(x, y + 1, z) || !occ(x, y, z - 1) || !occ(x, y, z + 1))
                    out.push_back({x, y, z});
            }
    return out;
}
}  // namespace

PointCloud surface_points(const OccupancyGrid& grid, int count, std::uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("surface_points: count must be positive");
    const auto boundary = boundary_voxels(grid);
    if (boundary.empty()) throw NumericError("surface_points: empty reconstruction");
    Rng rng(Rng::splitmix(seed ^ 0x5a2f4ce0b17d3369ull));
    const int n = grid.n;
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(count));
    auto emit = [&](const std::array<int, 3>& v) {
        const double jx = rng.uniform(), jy = rng.uniform(), jz = rng.uniform();
        cloud.points.push_back({(v[0] + jx) * 2.0 / n - 1.0, (v[1] + jy) * 2.0 / n - 1.0,
                                (v[2] + jz) * 2.0 / n - 1.0});
    };
    const std::size_t B = boundary.size();
    if (B >= static_cast<std::size_t>(count)) {
        std::vector<std::size_t> pool(B);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (int i = 0; i < count; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) + rng.uniform_index(B - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            emit(boundary[pool[static_cast<std::size_t>(i)]]);
        }
    } else {
        for (int i = 0; i < count; ++i) emit(boundary[rng.uniform_index(B)]);
    }
    return cloud;
}

PointCloud gt_surface_points(const synthdata::SceneSpec& scene, int count, std::uint64_t seed) {
    using synthdata::Primitive;
    using synthdata::PrimitiveKind;
    if (scene.primitives.empty()) throw std::invalid_argument("gt_surface_points: empty scene");

    auto area_of = [](const Primitive& p) {
        switch (p.kind) {
            case PrimitiveKind::Sphere:
                return 4.0 * M_PI * p.size[0] * p.size[0];
            case PrimitiveKind::Box:
                return 8.0 * (p.size[0] * p.size[1] + p.size[1] * p.size[2] +
                              p.size[0] * p.size[2]);
            case PrimitiveKind::Cylinder:
                return 2.0 * M_PI * p.size[0] * (2.0 * p.size[1]) +
                       2.0 * M_PI * p.size[0] * p.size[0];
        }
        return 0.0;
    };
    auto inside = [](const Primitive& p, const std::array<double, 3>& q) {
        const double dx = q[0] - p.center[0], dy = q[1] - p.center[1], dz = q[2] - p.center[2];
        constexpr double tol = 1e-12;
        switch (p.kind) {
            case PrimitiveKind::Sphere:
                return dx * dx + dy * dy + dz * dz < p.size[0] * p.size[0] - tol;
            case PrimitiveKind::Box:
                return std::abs(dx) < p.size[0] - tol && std::abs(dy) < p.size[1] - tol &&
                       std::abs(dz) < p.size[2] - tol;
            case PrimitiveKind::Cylinder:
                return dx * dx + dy * dy < p.size[0] * p.size[0] - tol &&
                       std::abs(dz) < p.size[1] - tol;
        }
        return false;
    };

    std::vector<double> cum;
    double total = 0.0;
    for (const auto& p : scene.primitives) {
        total += area_of(p);
        cum.push_back(total);
    }

    Rng rng(Rng::splitmix(seed ^ 0x97a3f00d152fb8c4ull));
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(count));

    auto sample_on = [&](const Primitive& p) -> std::array<double, 3> {
        switch (p.kind) {
            case PrimitiveKind::Sphere: {
                double x, y, z, norm;
                do {
                    x = rng.normal();
                    y = rng.normal();
                    z = rng.normal();
                    norm = std::sqrt(x * x + y * y + z * z);
                } while (norm < 1e-12);
                const double r = p.size[0];
                return {p.center[0] + r * x / norm, p.center[1] + r * y / norm,
                        p.center[2] + r * z / norm};
            }
            case PrimitiveKind::Box: {
                const double ax = p.size[1] * p.size[2];  // x-face half-area factor
                const double ay = p.size[0] * p.size[2];
                const double az = p.size[0] * p.size[1];
                const double pick = rng.uniform() * (ax + ay + az);
                const double sgn = rng.uniform() < 0.5 ? -1.0 : 1.0;
                const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
                std::array<double, 3> q = p.center;
                if (pick < ax) {
                    q[0] += sgn * p.size[0];
                    q[1] += u * p.size[1];
                    q[2] += v * p.size[2];
                } else if (pick < ax + ay) {
                    q[1] += sgn * p.size[1];
                    q[0] += u * p.size[0];
                    q[2] += v * p.size[2];
                } else {
                    q[2] += sgn * p.size[2];
                    q[0] += u * p.size[0];
                    q[1] += v * p.size[1];
                }
                return q;
            }
            case PrimitiveKind::Cylinder: {
                const double r = p.size[0], h = p.size[1];
                const double side = 2.0 * M_PI * r * (2.0 * h);
                const double caps = 2.0 * M_PI * r * r;
                const double theta = rng.uniform() * 2.0 * M_PI;
                std::array<double, 3> q = p.center;
                if (rng.uniform() * (side + caps) < side) {
                    q[0] += r * std::cos(theta);
                    q[1] += r * std::sin(theta);
                    q[2] += rng.uniform(-h, h);
                } else {
                    const double rr = r * std::sqrt(rng.uniform());
                    q[0] += rr * std::cos(theta);
                    q[1] += rr * std::sin(theta);
                    q[2] += (rng.uniform() < 0.5 ? -h : h);
                }
                return q;
            }
        }
        return p.center;
    };

    const std::int64_t max_attempts = static_cast<std::int64_t>(count) * 1000;
    std::int64_t attempts = 0;
    while (static_cast<int>(cloud.points.size()) < count) {
        if (++attempts > max_attempts)
            throw NumericError("gt_surface_points: rejection sampling failed to converge");
        const double pick = rng.uniform() * total;
        std::size_t pi = 0;
        while (pi + 1 < cum.size() && pick >= cum[pi]) ++pi;
        const Primitive& prim = scene.primitives[pi];
        const auto q = sample_on(prim);
        bool hidden = false;
        for (const auto& other : scene.primitives) {
            if (&other == &prim) continue;
            if (inside(other, q)) {
                hidden = true;
                break;
            }
        }
        if (!hidden) cloud.points.push_back(q);
    }
    return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw DataError("write_xyz: cannot open " + path);
    out.precision(17);
    for (const auto& p : cloud.points) out << p[0] << " " << p[1] << " " << p[2] << "\n";
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("read_xyz: cannot open " + path);
    PointCloud cloud;
    double x, y, z;
    while (in >> x >> y >> z) cloud.points.push_back({x, y, z});
    return cloud;
}

}  // namespace nextview::recon3d
