// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/gaussian.hpp"
#include "prismgs/scene.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace prismgs {

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_file_atomically(const std::filesystem::path &path, const std::string &contents);

/// Whole file as bytes; throws InvalidInput when it cannot be opened.
std::string read_file(const std::filesystem::path &path);

inline constexpr const char *kCameraFileHeader = "prismgs-cameras v1";

/// Line-oriented camera file:
///   prismgs-cameras v1
///   id fx fy cx cy width height r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz split image_path
/// `split` is train or test; an image_path of "-" (or a missing last field)
/// means no image. Blank lines and lines starting with '#' are ignored.
std::vector<Camera> load_cameras(const std::filesystem::path &path);
void write_cameras(const std::filesystem::path &path, std::span<const Camera> cameras);

/// x, y, z (any numeric type) and optional red, green, blue from the vertex
/// element of an ASCII or binary little-endian PLY. Missing color is (128, 128, 128).
SparsePointCloud load_ply_points(const std::filesystem::path &path);
void write_ply_points(const std::filesystem::path &path, const SparsePointCloud &points, bool binary = true);

/// Binary little-endian float32 PLY in the layout used by 3DGS tools:
/// x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3 (rot is w,x,y,z).
void save_gaussians_ply(const std::filesystem::path &path, std::span<const GaussianPrimitive<float>> gaussians);

/// Reads the layout above. With `expected_sh_degree >= 0` the f_rest count
/// must match that degree.
std::vector<GaussianPrimitive<float>> load_gaussians_ply(const std::filesystem::path &path, int expected_sh_degree = -1);

/// Dataset directory: cameras.txt, points.ply, and images named by each
/// camera's image_path (relative to the directory).
inline constexpr const char *kCamerasFile = "cameras.txt";
inline constexpr const char *kPointsFile  = "points.ply";

SceneDataset load_dataset(const std::filesystem::path &dir, bool load_images = true);
void save_dataset(const std::filesystem::path &dir, const SceneDataset &dataset);

} // namespace prismgs
