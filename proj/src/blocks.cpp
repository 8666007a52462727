// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace prismgs {

Aabb Aabb::expanded_xy(double fraction) const {
    Aabb out        = *this;
    const double mx = fraction * (max.x() - min.x());
    const double my = fraction * (max.y() - min.y());
    out.min.x() -= mx;
    out.max.x() += mx;
    out.min.y() -= my;
    out.max.y() += my;
    return out;
}

Aabb point_bounds(const SparsePointCloud &points) {
    if (points.empty()) throw ConfigError("point cloud is empty");
    Aabb box{points.points.front().position, points.points.front().position};
    for (const auto &p : points.points) {
        box.min = box.min.cwiseMin(p.position);
        box.max = box.max.cwiseMax(p.position);
    }
    return box;
}

BlockGrid::BlockGrid(const Aabb &bounds, int nx, int ny) : bounds_(bounds), nx_(nx), ny_(ny) {
    if (nx < 1 || ny < 1) throw ConfigError("block grid dimensions must be >= 1");
}

Aabb BlockGrid::cell_box(int ix, int iy) const {
    const double dx = (bounds_.max.x() - bounds_.min.x()) / nx_;
    const double dy = (bounds_.max.y() - bounds_.min.y()) / ny_;
    Aabb box   = bounds_;
    box.min.x() = bounds_.min.x() + ix * dx;
    box.max.x() = ix == nx_ - 1 ? bounds_.max.x() : bounds_.min.x() + (ix + 1) * dx;
    box.min.y() = bounds_.min.y() + iy * dy;
    box.max.y() = iy == ny_ - 1 ? bounds_.max.y() : bounds_.min.y() + (iy + 1) * dy;
    return box;
}

int BlockGrid::owner(const Vec3<double> &p) const {
    auto cell = [](double v, double lo, double hi, int n) {
        if (!(hi > lo)) return 0;
        const double t = std::floor((v - lo) / (hi - lo) * n);
        return static_cast<int>(std::clamp(t, 0.0, double(n - 1)));
    };
    const int ix = cell(p.x(), bounds_.min.x(), bounds_.max.x(), nx_);
    const int iy = cell(p.y(), bounds_.min.y(), bounds_.max.y(), ny_);
    return iy * nx_ + ix;
}

namespace {

bool camera_sees(const Camera &cam, const Vec3<double> &world) {
    const Vec3<double> p = cam.to_camera(world);
    if (!(p.z() > 0)) return false;
    const double u = cam.fx * p.x() / p.z() + cam.cx;
    const double v = cam.fy * p.y() / p.z() + cam.cy;
    return u >= -0.5 && u < cam.width - 0.5 && v >= -0.5 && v < cam.height - 0.5;
}

} // namespace

std::vector<SceneBlock> partition_scene(const SceneDataset &dataset, int nx, int ny, double margin) {
    if (dataset.points.empty()) throw ConfigError("partition_scene: the point cloud is empty");
    if (!(margin >= 0)) throw ConfigError("partition_scene: margin must be >= 0");
    const BlockGrid grid(point_bounds(dataset.points), nx, ny);

    std::vector<SceneBlock> blocks(static_cast<std::size_t>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            auto &b  = blocks[iy * nx + ix];
            b.id     = iy * nx + ix;
            b.cell_x = ix;
            b.cell_y = iy;
            b.box    = grid.cell_box(ix, iy);
        }
    }
    for (std::size_t i = 0; i < dataset.points.size(); ++i) {
        blocks[grid.owner(dataset.points.points[i].position)].point_indices.push_back(static_cast<int>(i));
    }
    for (const Camera &cam : dataset.cameras) {
        bool assigned = false;
        for (auto &b : blocks) {
            bool take = b.box.expanded_xy(margin).contains_xy(cam.center());
            for (std::size_t k = 0; !take && k < b.point_indices.size(); ++k) {
                take = camera_sees(cam, dataset.points.points[b.point_indices[k]].position);
            }
            if (take) {
                b.camera_ids.push_back(cam.id);
                assigned = true;
            }
        }
        // A camera that sees nothing and sits outside every margin still
        // belongs somewhere: the cell under it.
        if (!assigned) blocks[grid.owner(cam.center())].camera_ids.push_back(cam.id);
    }
    return blocks;
}

Gaussians merge_blocks(std::span<const SceneBlock> blocks, std::span<const Gaussians> trained, const BlockGrid &grid) {
    if (blocks.size() != trained.size()) {
        throw ContractViolation("merge_blocks: one Gaussian list per block is required");
    }
    Gaussians out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (const auto &g : trained[b]) {
            if (grid.owner(g.position.cast<double>()) == blocks[b].id) out.push_back(g);
        }
    }
    return out;
}

} // namespace prismgs
