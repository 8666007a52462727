// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/camera.hpp"
#include "prismgs/common.hpp"
#include "prismgs/gaussian.hpp"
#include "prismgs/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace prismgs {

/// Rasterizer tuning. The thresholds make rendering cheaper; `oracle()` zeroes
/// them so tiled output can be compared against an exhaustive renderer.
struct RenderOptions {
    int tile_size             = 16;
    double near_plane         = 0.01;
    double alpha_cutoff       = 1.0 / 255.0; // per-pixel contributions below this are skipped
    double transmittance_stop = 1e-4;        // compositing ends once T drops below this
    double dilation           = 0.3;         // isotropic screen-space variance added to cov2d
    // With alpha_cutoff == 0 a primitive is still binned only where its
    // footprint exceeds this value; the truncation stays far below test tolerances.
    double negligible_alpha   = 1e-12;
    int sh_degree             = -1; // -1: evaluate every stored band

    static RenderOptions oracle() {
        RenderOptions o;
        o.alpha_cutoff       = 0.0;
        o.transmittance_stop = 0.0;
        return o;
    }
};

enum class Cull : std::uint8_t {
    None,        // visible
    Near,        // depth <= near plane
    Outside,     // footprint misses every pixel center
    Degenerate,  // cov2d not positive definite
    Transparent, // opacity below the binning cutoff
};

/// A primitive after EWA projection into one camera.
template <typename Scalar> struct ProjectedGaussian {
    Vec2<Scalar> mean2d = Vec2<Scalar>::Zero();
    Mat2<Scalar> cov2d  = Mat2<Scalar>::Identity(); // includes dilation
    Vec3<Scalar> conic  = Vec3<Scalar>::Zero();     // inverse cov2d as (a, b, c)
    Scalar depth        = 0;
    Vec3<Scalar> color  = Vec3<Scalar>::Zero();
    Scalar opacity      = 0;
    int source_index    = -1;
    // Inclusive pixel bounds of the binning footprint, clipped to the image.
    int min_x = 0, min_y = 0, max_x = -1, max_y = -1;
    Eigen::Array<bool, 3, 1> color_clamped = Eigen::Array<bool, 3, 1>::Constant(false);
};

template <typename Scalar> struct Projection {
    Cull cull = Cull::Near;
    ProjectedGaussian<Scalar> gaussian;
    bool visible() const { return cull == Cull::None; }
};

/// Pinhole projection of the mean plus cov2d = J W Sigma W^T J^T + dilation * I.
/// Fields of `gaussian` are filled whenever the projection exists (everything
/// except Near and Degenerate), even when the primitive is culled.
template <typename Scalar>
Projection<Scalar> project_gaussian(const GaussianPrimitive<Scalar> &g, const Camera &cam,
                                    const RenderOptions &options = {});

/// Forward intermediates retained for the backward pass.
/// One composited (pixel, primitive) pair, in front-to-back order per pixel.
template <typename Scalar> struct CompositeHit {
    int entry = 0;  // index into tile_entries
    int pixel = 0;  // y * width + x
    Scalar alpha = 0;
    Scalar transmittance = 0; // before this hit
};

template <typename Scalar> struct RenderState {
    Camera camera;
    RenderOptions options;
    std::size_t num_gaussians = 0;
    std::uint64_t fingerprint = 0;
    std::vector<ProjectedGaussian<Scalar>> projected;
    std::vector<int> tile_offsets; // size tiles + 1, CSR into tile_entries
    std::vector<int> tile_entries; // indices into `projected`, depth ordered per tile
    int tiles_x = 0, tiles_y = 0;
    Eigen::Array<Scalar, Eigen::Dynamic, 1> final_transmittance;
    Eigen::ArrayXi stop_position; // per pixel: tile entries consumed before stopping
    std::vector<int> hit_offsets; // size tiles + 1, CSR into hits
    std::vector<CompositeHit<Scalar>> hits;
    ImageBuffer<Scalar> unclamped;
};

template <typename Scalar> struct RenderOutput {
    ImageBuffer<Scalar> image;                     // clamped to [0, 1]
    Eigen::Array<Scalar, Eigen::Dynamic, 1> alpha; // 1 - final transmittance
    Eigen::ArrayXi contributors;                   // per-pixel composited primitive count
    int degenerate_skipped = 0;
    int visible            = 0;
    std::shared_ptr<const RenderState<Scalar>> state;
};

template <typename Scalar> struct RenderGradients {
    std::vector<GaussianPrimitive<Scalar>> params; // dL/d(parameters), one per input Gaussian
    std::vector<Vec2<Scalar>> mean2d;              // dL/d(mean2d) in pixels, zero when culled
    std::vector<std::uint8_t> visible;
};

/// Tiled front-to-back alpha compositing over a black background.
template <typename Scalar>
RenderOutput<Scalar> render(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam,
                            const RenderOptions &options = {});

/// As above with the output size overridden (intrinsics are used as given).
template <typename Scalar>
RenderOutput<Scalar> render(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam, int width,
                            int height, const RenderOptions &options = {});

/// Gradients of L = sum_p upstream(p) . image(p) for the forward pass `forward`.
template <typename Scalar>
RenderGradients<Scalar> render_backward(std::span<const GaussianPrimitive<Scalar>> gaussians,
                                        const RenderOutput<Scalar> &forward, const ImageBuffer<Scalar> &upstream);

/// Renders through camera_at_level(cam, level).
template <typename Scalar>
RenderOutput<Scalar> render_at_level(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam,
                                     int level, const RenderOptions &options = {});

/// Order-sensitive hash of every parameter, used to pair forward and backward.
template <typename Scalar> std::uint64_t fingerprint(std::span<const GaussianPrimitive<Scalar>> gaussians);

} // namespace prismgs
