#pragma once

#include <array>
#include <string>
#include <vector>

#include "nextview/image.hpp"
#include "nextview/poseplan.hpp"
#include "nextview/rng.hpp"

namespace nextview::synthdata {

enum class PrimitiveKind { Sphere, Box, Cylinder };

// Axis-aligned primitives. size is (radius,0,0) for spheres,
// half-extents for boxes, (radius, half_height, 0) for cylinders.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> size{0.3, 0, 0};
    std::array<double, 3> color{0.5, 0.5, 0.5};
};

struct SceneSpec {
    std::vector<Primitive> primitives;  // 1..4, all contained in [-1,1]^3
    std::uint64_t seed = 0;
};

struct RenderConfig {
    int resolution = 32;
    double ortho_half_width = 1.8;  // covers [-1,1]^3 from any direction
    // fixed directional light toward the scene; flat shading
    std::array<double, 3> light_dir{0.4, 0.25, 0.88};
    double ambient = 0.55;
    double diffuse = 0.45;
};

// Absolute pose: azimuth in world frame (not input-relative).
struct AbsolutePose {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
};

// Orthonormal camera frame for an orbit camera looking at the origin.
struct CameraFrame {
    std::array<double, 3> forward;  // camera -> origin
    std::array<double, 3> right;
    std::array<double, 3> up;
};
CameraFrame camera_frame(const AbsolutePose& pose);

struct Sample {
    Image input_view;
    AbsolutePose input_pose;
    std::vector<Image> target_views;          // 6, canonical grid order
    std::vector<AbsolutePose> target_poses_abs;
    SceneSpec scene;
};

SceneSpec random_scene(std::uint64_t seed);

Image render(const SceneSpec& scene, const AbsolutePose& pose, const RenderConfig& config);

// Render plus the exact pixel coverage mask (true where geometry was hit).
Image render_with_mask(const SceneSpec& scene, const AbsolutePose& pose,
                       const RenderConfig& config, std::vector<std::uint8_t>* mask);

Sample make_sample(const SceneSpec& scene, Rng& rng, const RenderConfig& config);

struct Dataset {
    std::vector<Sample> samples;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
};

// Directory layout: manifest.json + one PNG per view. Images are stored
// 8-bit, so a written-then-read sample equals quantize8 of the original.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace nextview::synthdata
