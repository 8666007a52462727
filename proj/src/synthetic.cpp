// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/synthetic.hpp"

#include "prismgs/parallel.hpp"
#include "prismgs/rasterizer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>

namespace prismgs {

namespace {

enum class Family { Checkerboard, GaussianField, TwoWalls };

Family parse_family(const std::string &name) {
    if (name == "checkerboard-plane") return Family::Checkerboard;
    if (name == "gaussian-field") return Family::GaussianField;
    if (name == "two-walls") return Family::TwoWalls;
    throw InvalidInput("unknown synthetic scene family '" + name + "' (expected checkerboard-plane, gaussian-field or two-walls)");
}

void check_spec(const SyntheticSpec &spec) {
    parse_family(spec.family);
    if (spec.num_cameras < 1) throw InvalidInput("synthetic scene needs at least one camera");
    if (spec.width < 1 || spec.height < 1) throw InvalidInput("synthetic image dimensions must be positive");
    if (spec.supersample < 1) throw InvalidInput("supersample factor must be >= 1");
    if (!(spec.fov_degrees > 0 && spec.fov_degrees < 180)) throw InvalidInput("fov must lie in (0, 180) degrees");
    if (spec.ring_radii.empty()) throw InvalidInput("at least one orbit radius is required");
    if (!(spec.near_depth > 0 && spec.far_depth > spec.near_depth)) {
        throw InvalidInput("two-walls needs 0 < near_depth < far_depth");
    }
}

double focal_for(const SyntheticSpec &spec) {
    return 0.5 * spec.width / std::tan(0.5 * spec.fov_degrees * std::numbers::pi / 180.0);
}

Vec3<double> checker_color(const SyntheticSpec &spec, double x, double y) {
    const double cell = 2.0 * spec.board_half_extent / spec.squares_per_side;
    const long ix     = static_cast<long>(std::floor((x + spec.board_half_extent) / cell));
    const long iy     = static_cast<long>(std::floor((y + spec.board_half_extent) / cell));
    return ((ix + iy) % 2 == 0) ? spec.light_color : spec.dark_color;
}

// Near wall: horizontal stripes; far wall: coarse checker.
Vec3<double> near_wall_color(double, double y) {
    return (static_cast<long>(std::floor(y / 0.25)) % 2 == 0) ? Vec3<double>(0.9, 0.5, 0.2) : Vec3<double>(0.2, 0.3, 0.8);
}

Vec3<double> far_wall_color(double x, double y) {
    const long k = static_cast<long>(std::floor(x)) + static_cast<long>(std::floor(y));
    return (k % 2 == 0) ? Vec3<double>(0.7, 0.7, 0.7) : Vec3<double>(0.25, 0.45, 0.25);
}

constexpr double kNearWallHalfY = 1.5;
constexpr double kNearWallMinX  = -1.5;
constexpr double kFarWallHalf   = 4.0;

// First surface hit along the ray, or black background.
Vec3<double> trace(const SyntheticSpec &spec, Family family, const Vec3<double> &origin, const Vec3<double> &dir) {
    if (family == Family::Checkerboard) {
        if (dir.z() == 0) return Vec3<double>::Zero();
        const double t = -origin.z() / dir.z();
        if (!(t > 0)) return Vec3<double>::Zero();
        const Vec3<double> p = origin + t * dir;
        if (std::abs(p.x()) > spec.board_half_extent || std::abs(p.y()) > spec.board_half_extent) {
            return Vec3<double>::Zero();
        }
        return checker_color(spec, p.x(), p.y());
    }
    // two-walls
    if (dir.z() > 0) {
        const double t1      = (spec.near_depth - origin.z()) / dir.z();
        const Vec3<double> p = origin + t1 * dir;
        if (t1 > 0 && p.x() >= kNearWallMinX && p.x() <= 0 && std::abs(p.y()) <= kNearWallHalfY) {
            return near_wall_color(p.x(), p.y());
        }
        const double t2      = (spec.far_depth - origin.z()) / dir.z();
        const Vec3<double> q = origin + t2 * dir;
        if (t2 > 0 && std::abs(q.x()) <= kFarWallHalf && std::abs(q.y()) <= kFarWallHalf) {
            return far_wall_color(q.x(), q.y());
        }
    }
    return Vec3<double>::Zero();
}

ImageBuffer<double> ray_cast(const SyntheticSpec &spec, Family family, const Camera &cam) {
    ImageBuffer<double> img(cam.width, cam.height);
    const Vec3<double> origin = cam.center();
    const Mat3<double> Rt     = cam.rotation.transpose();
    parallel_for(cam.height, [&](int y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3<double> d((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
            const Vec3<double> c = trace(spec, family, origin, Rt * d);
            for (int k = 0; k < 3; ++k) img(x, y, k) = c[k];
        }
    });
    return img;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

ScenePoint make_point(const Vec3<double> &p, const Vec3<double> &color) {
    return ScenePoint{p, {to_byte(color[0]), to_byte(color[1]), to_byte(color[2])}};
}

SparsePointCloud synthetic_points(const SyntheticSpec &spec, Family family, std::mt19937_64 &rng) {
    SparsePointCloud cloud;
    if (family == Family::Checkerboard) {
        const int n        = spec.points_per_side;
        const double h     = spec.board_half_extent;
        const double step  = 2.0 * h / n;
        std::uniform_real_distribution<double> jitter(-0.3 * step, 0.3 * step);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const double x = std::clamp(-h + (i + 0.5) * step + jitter(rng), -h, h);
                const double y = std::clamp(-h + (j + 0.5) * step + jitter(rng), -h, h);
                cloud.points.push_back(make_point(Vec3<double>(x, y, 0.0), checker_color(spec, x, y)));
            }
        }
    } else if (family == Family::TwoWalls) {
        const int n = spec.wall_points_side;
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const double u = (i + 0.5) / n, v = (j + 0.5) / n;
                const double x = kNearWallMinX * u, y = kNearWallHalfY * (2 * v - 1);
                cloud.points.push_back(make_point(Vec3<double>(x, y, spec.near_depth), near_wall_color(x, y)));
            }
        }
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const double x = kFarWallHalf * (2.0 * (i + 0.5) / n - 1), y = kFarWallHalf * (2.0 * (j + 0.5) / n - 1);
                cloud.points.push_back(make_point(Vec3<double>(x, y, spec.far_depth), far_wall_color(x, y)));
            }
        }
    } else {
        for (const auto &g : synthetic_field_gaussians(spec)) {
            const Vec3<double> color = (g.sh.row(0).transpose() * sh::kC0).array() + 0.5;
            cloud.points.push_back(make_point(g.position, color));
        }
    }
    return cloud;
}

} // namespace

const std::vector<std::string> &synthetic_families() {
    static const std::vector<std::string> names = {"checkerboard-plane", "gaussian-field", "two-walls"};
    return names;
}

std::vector<GaussianPrimitive<double>> synthetic_field_gaussians(const SyntheticSpec &spec) {
    if (!spec.field_gaussians.empty()) return spec.field_gaussians;
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0), u01(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<GaussianPrimitive<double>> out;
    for (int i = 0; i < spec.field_count; ++i) {
        GaussianPrimitive<double> g;
        Vec3<double> p;
        do {
            p = Vec3<double>(unit(rng), unit(rng), unit(rng));
        } while (p.squaredNorm() > 1.0);
        g.position  = spec.field_radius * p;
        g.log_scale = Vec3<double>::NullaryExpr([&] { return std::log(0.05 + 0.2 * u01(rng)); });
        g.rotation  = Vec4<double>(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
        g.opacity_logit = logit(0.5 + 0.45 * u01(rng));
        g.sh            = ShCoeffs<double>::Zero(1, 3);
        for (int c = 0; c < 3; ++c) g.sh(0, c) = (0.1 + 0.8 * u01(rng) - 0.5) / sh::kC0;
        out.push_back(g);
    }
    return out;
}

std::vector<Camera> synthetic_cameras(const SyntheticSpec &spec) {
    check_spec(spec);
    const Family family = parse_family(spec.family);
    const double focal  = focal_for(spec);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    std::vector<Camera> cams;
    for (int i = 0; i < spec.num_cameras; ++i) {
        Camera cam;
        if (family == Family::TwoWalls) {
            const Vec3<double> eye(spec.camera_spread * unit(rng), spec.camera_spread * unit(rng), 0.0);
            cam.rotation    = Mat3<double>::Identity();
            cam.translation = -eye;
            cam.fx = cam.fy = focal;
            cam.width       = spec.width;
            cam.height      = spec.height;
            cam.cx          = 0.5 * (spec.width - 1);
            cam.cy          = 0.5 * (spec.height - 1);
        } else {
            const double r   = spec.ring_radii[static_cast<std::size_t>(i) % spec.ring_radii.size()];
            const double az  = 2.0 * std::numbers::pi * i / spec.num_cameras + spec.azimuth_jitter * unit(rng);
            const double el  = spec.elevation_degrees * std::numbers::pi / 180.0;
            const Vec3<double> eye(r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az), r * std::sin(el));
            cam = look_at(eye, Vec3<double>::Zero(), Vec3<double>::UnitZ(), focal, spec.width, spec.height);
        }
        cam.id    = i;
        cam.split = (spec.test_every > 0 && i % spec.test_every == spec.test_every - 1) ? Split::Test : Split::Train;
        char name[32];
        std::snprintf(name, sizeof(name), "images/%03d.png", i);
        cam.image_path = name;
        cams.push_back(std::move(cam));
    }
    return cams;
}

template <typename Scalar> ImageBuffer<Scalar> box_downsample(const ImageBuffer<Scalar> &img, int factor) {
    if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
        throw InvalidInput("box_downsample: dimensions must be divisible by the factor");
    }
    ImageBuffer<Scalar> out(img.width / factor, img.height / factor);
    const Scalar norm = Scalar(1) / Scalar(factor * factor);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                Scalar sum = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) sum += img(x * factor + dx, y * factor + dy, c);
                out(x, y, c) = sum * norm;
            }
        }
    }
    return out;
}

template ImageBuffer<float> box_downsample<float>(const ImageBuffer<float> &, int);
template ImageBuffer<double> box_downsample<double>(const ImageBuffer<double> &, int);

ImageBuffer<double> render_synthetic_view(const SyntheticSpec &spec, const Camera &cam, int supersample) {
    check_spec(spec);
    if (supersample < 1) throw InvalidInput("render_synthetic_view: supersample must be >= 1");
    const Family family = parse_family(spec.family);
    const Camera fine   = camera_supersampled(cam, supersample);
    ImageBuffer<double> img;
    if (family == Family::GaussianField) {
        const auto gaussians = synthetic_field_gaussians(spec);
        img = render<double>(gaussians, fine, RenderOptions::oracle()).image;
    } else {
        img = ray_cast(spec, family, fine);
    }
    return supersample == 1 ? img : box_downsample(img, supersample);
}

SceneDataset generate_synthetic_scene(const SyntheticSpec &spec) {
    check_spec(spec);
    const Family family = parse_family(spec.family);
    SceneDataset ds;
    ds.cameras = synthetic_cameras(spec);
    std::mt19937_64 rng(spec.seed + 1);
    ds.points = synthetic_points(spec, family, rng);
    ds.images.reserve(ds.cameras.size());
    for (const Camera &cam : ds.cameras) {
        ImageBuffer<float> img = render_synthetic_view(spec, cam, spec.supersample).cast<float>();
        ds.images.push_back(spec.quantize ? quantize8(img) : img);
    }
    return ds;
}

} // namespace prismgs
