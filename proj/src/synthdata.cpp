#include "nextview/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "nextview/errors.hpp"
#include "nextview/image_io.hpp"

namespace nextview::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::array<double, 3> normalize(std::array<double, 3> v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    std::array<double, 3> normal{0, 0, 0};
    const Primitive* prim = nullptr;
};

bool intersect_sphere(const Primitive& p, const std::array<double, 3>& o,
                      const std::array<double, 3>& d, Hit& hit) {
    const double r = p.size[0];
    const std::array<double, 3> oc{o[0] - p.center[0], o[1] - p.center[1], o[2] - p.center[2]};
    const double b = dot(oc, d);
    const double c = dot(oc, oc) - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double t = -b - std::sqrt(disc);
    if (t < 0.0 || t >= hit.t) return false;
    hit.t = t;
    std::array<double, 3> pt{o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]};
    hit.normal = normalize({pt[0] - p.center[0], pt[1] - p.center[1], pt[2] - p.center[2]});
    hit.prim = &p;
    return true;
}

bool intersect_box(const Primitive& p, const std::array<double, 3>& o,
                   const std::array<double, 3>& d, Hit& hit) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int enter_axis = -1;
    double enter_sign = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double h = p.size[a];
        if (std::abs(d[a]) < 1e-14) {
            if (std::abs(o[a] - p.center[a]) > h) return false;
            continue;
        }
        double ta = (p.center[a] - h - o[a]) / d[a];
        double tb = (p.center[a] + h - o[a]) / d[a];
        double sign = -1.0;
        if (ta > tb) {
            std::swap(ta, tb);
            sign = 1.0;
        }
        if (ta > t0) {
            t0 = ta;
            enter_axis = a;
            enter_sign = sign;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    if (t0 < 0.0 || t0 >= hit.t || enter_axis < 0) return false;
    hit.t = t0;
    hit.normal = {0, 0, 0};
    hit.normal[enter_axis] = enter_sign;
    hit.prim = &p;
    return true;
}

bool intersect_cylinder(const Primitive& p, const std::array<double, 3>& o,
                        const std::array<double, 3>& d, Hit& hit) {
    const double r = p.size[0], hh = p.size[1];
    const double ox = o[0] - p.center[0], oy = o[1] - p.center[1], oz = o[2] - p.center[2];
    bool found = false;
    double best = hit.t;
    std::array<double, 3> bestn{0, 0, 0};
    // lateral surface
    const double a = d[0] * d[0] + d[1] * d[1];
    if (a > 1e-14) {
        const double b = ox * d[0] + oy * d[1];
        const double c = ox * ox + oy * oy - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0.0) {
            const double t = (-b - std::sqrt(disc)) / a;
            const double z = oz + t * d[2];
            if (t >= 0.0 && t < best && std::abs(z) <= hh) {
                best = t;
                bestn = normalize({ox + t * d[0], oy + t * d[1], 0.0});
                found = true;
            }
        }
    }
    // caps
    if (std::abs(d[2]) > 1e-14) {
        for (double s : {1.0, -1.0}) {
            const double t = (s * hh - oz) / d[2];
            if (t < 0.0 || t >= best) continue;
            const double x = ox + t * d[0], y = oy + t * d[1];
            if (x * x + y * y <= r * r) {
                best = t;
                bestn = {0, 0, s};
                found = true;
            }
        }
    }
    if (!found) return false;
    hit.t = best;
    hit.normal = bestn;
    hit.prim = &p;
    return true;
}

const char* kind_name(PrimitiveKind k) {
    switch (k) {
        case PrimitiveKind::Sphere: return "sphere";
        case PrimitiveKind::Box: return "box";
        case PrimitiveKind::Cylinder: return "cylinder";
    }
    return "sphere";
}

PrimitiveKind kind_from_name(const std::string& s) {
    if (s == "sphere") return PrimitiveKind::Sphere;
    if (s == "box") return PrimitiveKind::Box;
    if (s == "cylinder") return PrimitiveKind::Cylinder;
    throw DataError("unknown primitive kind: " + s);
}

json arr3(const std::array<double, 3>& a) { return json::array({a[0], a[1], a[2]}); }

std::array<double, 3> to_arr3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw DataError("manifest field '" + what + "' must be a 3-array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

CameraFrame camera_frame(const AbsolutePose& pose) {
    const double az = pose.azimuth_deg * kPi / 180.0;
    const double el = pose.elevation_deg * kPi / 180.0;
    const std::array<double, 3> to_cam{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                       std::sin(el)};
    CameraFrame f;
    f.forward = {-to_cam[0], -to_cam[1], -to_cam[2]};
    f.right = normalize(cross(f.forward, {0.0, 0.0, 1.0}));
    f.up = cross(f.right, f.forward);
    return f;
}

SceneSpec random_scene(std::uint64_t seed) {
    SceneSpec scene;
    scene.seed = seed;
    Rng rng(Rng::splitmix(seed ^ 0x9e5ced5c3a17b0d1ull));
    const int count = 1 + rng.uniform_int(0, 3);
    for (int i = 0; i < count; ++i) {
        Primitive p;
        std::array<double, 3> ext{};  // per-axis extent for containment
        switch (rng.uniform_int(0, 2)) {
            case 0: {
                p.kind = PrimitiveKind::Sphere;
                const double r = rng.uniform(0.15, 0.4);
                p.size = {r, 0.0, 0.0};
                ext = {r, r, r};
                break;
            }
            case 1: {
                p.kind = PrimitiveKind::Box;
                for (int a = 0; a < 3; ++a) p.size[a] = rng.uniform(0.1, 0.4);
                ext = p.size;
                break;
            }
            default: {
                p.kind = PrimitiveKind::Cylinder;
                const double r = rng.uniform(0.12, 0.35);
                const double hh = rng.uniform(0.12, 0.4);
                p.size = {r, hh, 0.0};
                ext = {r, r, hh};
                break;
            }
        }
        // keep |center|+extent <= 0.98 per axis so the scene stays in [-1,1]^3
        for (int a = 0; a < 3; ++a) {
            const double limit = std::min(0.6, 0.98 - ext[a]);
            p.center[a] = rng.uniform(-limit, limit);
        }
        for (int c = 0; c < 3; ++c) p.color[c] = rng.uniform(0.05, 0.9);
        scene.primitives.push_back(p);
    }
    return scene;
}

Image render_with_mask(const SceneSpec& scene, const AbsolutePose& pose,
                       const RenderConfig& config, std::vector<std::uint8_t>* mask) {
    const int res = config.resolution;
    const CameraFrame cam = camera_frame(pose);
    const std::array<double, 3> light = normalize(config.light_dir);
    Image im = Image::constant(res, res, 1.0, 1.0, 1.0);
    if (mask) mask->assign(static_cast<std::size_t>(res) * res, 0);

    for (int y = 0; y < res; ++y) {
        const double vs = (1.0 - (y + 0.5) * 2.0 / res) * config.ortho_half_width;
        for (int x = 0; x < res; ++x) {
            const double us = ((x + 0.5) * 2.0 / res - 1.0) * config.ortho_half_width;
            const std::array<double, 3> origin{
                us * cam.right[0] + vs * cam.up[0] - 3.0 * cam.forward[0],
                us * cam.right[1] + vs * cam.up[1] - 3.0 * cam.forward[1],
                us * cam.right[2] + vs * cam.up[2] - 3.0 * cam.forward[2]};
            Hit hit;
            for (const auto& p : scene.primitives) {
                switch (p.kind) {
                    case PrimitiveKind::Sphere: intersect_sphere(p, origin, cam.forward, hit); break;
                    case PrimitiveKind::Box: intersect_box(p, origin, cam.forward, hit); break;
                    case PrimitiveKind::Cylinder: intersect_cylinder(p, origin, cam.forward, hit); break;
                }
            }
            if (!hit.prim) continue;
            const double lambert = std::max(0.0, dot(hit.normal, light));
            const double shade = config.ambient + config.diffuse * lambert;
            for (int c = 0; c < 3; ++c) im.at(y, x, c) = hit.prim->color[c] * shade;
            if (mask) (*mask)[static_cast<std::size_t>(y) * res + x] = 1;
        }
    }
    return im;
}

Image render(const SceneSpec& scene, const AbsolutePose& pose, const RenderConfig& config) {
    return render_with_mask(scene, pose, config, nullptr);
}

Sample make_sample(const SceneSpec& scene, Rng& rng, const RenderConfig& config) {
    Sample s;
    s.scene = scene;
    s.input_pose.elevation_deg = rng.uniform(-20.0, 45.0);
    s.input_pose.azimuth_deg = rng.uniform(0.0, 360.0);
    s.input_view = render(scene, s.input_pose, config);
    const auto rel = poseplan::target_poses();
    for (const auto& rp : rel) {
        AbsolutePose ap;
        ap.azimuth_deg = std::fmod(s.input_pose.azimuth_deg + rp.azimuth_deg, 360.0);
        ap.elevation_deg = rp.elevation_deg;
        s.target_poses_abs.push_back(ap);
        s.target_views.push_back(render(scene, ap, config));
    }
    return s;
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw DataError("write_dataset: cannot create directory " + path + ": " + ec.message());

    json manifest;
    manifest["version"] = 1;
    manifest["sample_count"] = ds.samples.size();
    manifest["train"] = ds.train_indices;
    manifest["test"] = ds.test_indices;
    json samples = json::array();
    char name[64];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        json rec;
        rec["seed"] = s.scene.seed;
        rec["input_pose"] = {{"azimuth_deg", s.input_pose.azimuth_deg},
                             {"elevation_deg", s.input_pose.elevation_deg}};
        std::snprintf(name, sizeof(name), "sample_%04zu_input.png", i);
        rec["input_file"] = name;
        write_png((fs::path(path) / name).string(), s.input_view);
        json tfiles = json::array(), tposes = json::array();
        for (int v = 0; v < 6; ++v) {
            std::snprintf(name, sizeof(name), "sample_%04zu_target_%d.png", i, v);
            tfiles.push_back(name);
            tposes.push_back({{"azimuth_deg", s.target_poses_abs[v].azimuth_deg},
                              {"elevation_deg", s.target_poses_abs[v].elevation_deg}});
            write_png((fs::path(path) / name).string(), s.target_views[v]);
        }
        rec["target_files"] = tfiles;
        rec["target_poses"] = tposes;
        json prims = json::array();
        for (const auto& p : s.scene.primitives)
            prims.push_back({{"kind", kind_name(p.kind)},
                             {"center", arr3(p.center)},
                             {"size", arr3(p.size)},
                             {"color", arr3(p.color)}});
        rec["scene"] = {{"primitives", prims}};
        samples.push_back(std::move(rec));
    }
    manifest["samples"] = std::move(samples);
    std::ofstream out(fs::path(path) / "manifest.json");
    if (!out) throw DataError("write_dataset: cannot write manifest in " + path);
    out << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(fs::path(path) / "manifest.json");
    if (!in) throw DataError("read_dataset: missing manifest.json in " + path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError(std::string("read_dataset: manifest parse error: ") + e.what());
    }
    auto require = [&](const json& j, const char* field, const std::string& where) -> const json& {
        if (!j.contains(field))
            throw DataError("read_dataset: missing field '" + std::string(field) + "' in " + where);
        return j.at(field);
    };
    if (require(manifest, "version", "manifest").get<int>() != 1)
        throw DataError("read_dataset: unsupported manifest version");

    Dataset ds;
    ds.train_indices = require(manifest, "train", "manifest").get<std::vector<int>>();
    ds.test_indices = require(manifest, "test", "manifest").get<std::vector<int>>();
    const json& samples = require(manifest, "samples", "manifest");
    const std::size_t declared = require(manifest, "sample_count", "manifest").get<std::size_t>();
    if (samples.size() != declared)
        throw DataError("read_dataset: sample_count does not match samples array");

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string where = "samples[" + std::to_string(i) + "]";
        const json& rec = samples[i];
        Sample s;
        s.scene.seed = require(rec, "seed", where).get<std::uint64_t>();
        const json& ip = require(rec, "input_pose", where);
        s.input_pose.azimuth_deg = require(ip, "azimuth_deg", where + ".input_pose").get<double>();
        s.input_pose.elevation_deg =
            require(ip, "elevation_deg", where + ".input_pose").get<double>();
        s.input_view = read_png((fs::path(path) / require(rec, "input_file", where).get<std::string>()).string());
        const json& tfiles = require(rec, "target_files", where);
        const json& tposes = require(rec, "target_poses", where);
        if (tfiles.size() != 6 || tposes.size() != 6)
            throw DataError("read_dataset: " + where + " must have 6 targets");
        for (int v = 0; v < 6; ++v) {
            s.target_views.push_back(read_png((fs::path(path) / tfiles[v].get<std::string>()).string()));
            AbsolutePose ap;
            ap.azimuth_deg = require(tposes[v], "azimuth_deg", where + ".target_poses").get<double>();
            ap.elevation_deg = require(tposes[v], "elevation_deg", where + ".target_poses").get<double>();
            s.target_poses_abs.push_back(ap);
        }
        const json& prims = require(require(rec, "scene", where), "primitives", where + ".scene");
        for (const auto& pj : prims) {
            Primitive p;
            p.kind = kind_from_name(require(pj, "kind", where + ".primitives").get<std::string>());
            p.center = to_arr3(require(pj, "center", where), where + ".center");
            p.size = to_arr3(require(pj, "size", where), where + ".size");
            p.color = to_arr3(require(pj, "color", where), where + ".color");
            s.scene.primitives.push_back(p);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace nextview::synthdata
