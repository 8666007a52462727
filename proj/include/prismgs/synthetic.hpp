// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/gaussian.hpp"
#include "prismgs/image.hpp"
#include "prismgs/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace prismgs {

/// Procedural scene description. Families:
///   checkerboard-plane  textured board on z = 0 seen from three orbit rings
///   gaussian-field      a handful of Gaussians (random, or `field_gaussians`)
///   two-walls           a partial wall at z = near_depth in front of a full
///                       wall at z = far_depth, cameras at z = 0 looking along +z
struct SyntheticSpec {
    std::string family = "checkerboard-plane";
    int num_cameras    = 24;
    int width          = 64;
    int height         = 64;
    double fov_degrees = 60.0;
    int supersample    = 4;
    std::uint64_t seed = 0;
    int test_every     = 8; // camera i is held out when i % test_every == test_every - 1; 0 disables
    bool quantize      = true;

    // orbit (checkerboard-plane, gaussian-field)
    std::vector<double> ring_radii = {3.0, 4.5, 7.0};
    double elevation_degrees       = 50.0;
    double azimuth_jitter          = 0.1; // radians

    // checkerboard-plane
    double board_half_extent = 2.0;
    int squares_per_side     = 8;
    int points_per_side      = 40;
    Vec3<double> light_color = Vec3<double>(0.85, 0.8, 0.7);
    Vec3<double> dark_color  = Vec3<double>(0.15, 0.2, 0.3);

    // gaussian-field
    int field_count = 16;
    double field_radius = 1.0;
    std::vector<GaussianPrimitive<double>> field_gaussians; // used verbatim when non-empty

    // two-walls
    double near_depth     = 2.0;
    double far_depth      = 5.0;
    double camera_spread  = 0.25; // camera x/y offsets lie in [-spread, spread]
    int wall_points_side  = 12;
};

/// Names accepted by SyntheticSpec::family.
const std::vector<std::string> &synthetic_families();

/// Cameras, initialisation points and ground-truth images (in
/// `dataset.images`, named images/NNN.png). Throws InvalidInput for an
/// unknown family.
SceneDataset generate_synthetic_scene(const SyntheticSpec &spec);

/// Cameras only, without rendering.
std::vector<Camera> synthetic_cameras(const SyntheticSpec &spec);

/// Ground truth for an arbitrary camera: rendered at `supersample` times the
/// resolution and box filtered back down. supersample = 1 gives one sample
/// per pixel center. Values are not quantized.
ImageBuffer<double> render_synthetic_view(const SyntheticSpec &spec, const Camera &cam, int supersample);

/// Average of each factor x factor block; dimensions must be divisible.
template <typename Scalar> ImageBuffer<Scalar> box_downsample(const ImageBuffer<Scalar> &img, int factor);

/// Gaussians of a gaussian-field spec (explicit list or seeded random).
std::vector<GaussianPrimitive<double>> synthetic_field_gaussians(const SyntheticSpec &spec);

} // namespace prismgs
