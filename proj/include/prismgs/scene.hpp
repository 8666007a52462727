// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/camera.hpp"
#include "prismgs/image.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace prismgs {

struct ScenePoint {
    Vec3<double> position = Vec3<double>::Zero();
    std::array<std::uint8_t, 3> color{128, 128, 128};

    bool operator==(const ScenePoint &) const = default;
};

/// Sparse structure-from-motion style points used for initialisation.
struct SparsePointCloud {
    std::vector<ScenePoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Cameras, initialisation points and (optionally) one ground-truth image
/// per camera, aligned by index.
struct SceneDataset {
    std::vector<Camera> cameras;
    SparsePointCloud points;
    std::vector<ImageBuffer<float>> images;

    bool has_images() const { return images.size() == cameras.size() && !cameras.empty(); }
    /// Index of the camera with this id; throws InvalidInput when absent.
    std::size_t index_of(int camera_id) const;

    std::vector<Camera> train_cameras() const;
    std::vector<Camera> test_cameras() const;
};

} // namespace prismgs
