// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/rasterizer.hpp"
#include "prismgs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace prismgs {

namespace {

template <typename Scalar> struct ViewParams {
    Mat3<Scalar> W;
    Vec3<Scalar> t;
    Vec3<Scalar> center;
    Scalar fx, fy, cx, cy;
};

template <typename Scalar> ViewParams<Scalar> view_params(const Camera &cam) {
    ViewParams<Scalar> v;
    v.W      = cam.rotation.cast<Scalar>();
    v.t      = cam.translation.cast<Scalar>();
    v.center = cam.center().cast<Scalar>();
    v.fx     = static_cast<Scalar>(cam.fx);
    v.fy     = static_cast<Scalar>(cam.fy);
    v.cx     = static_cast<Scalar>(cam.cx);
    v.cy     = static_cast<Scalar>(cam.cy);
    return v;
}

template <typename Scalar> Vec3<Scalar> view_direction(const Vec3<Scalar> &position, const Vec3<Scalar> &center, Scalar &norm) {
    Vec3<Scalar> d = position - center;
    norm           = d.norm();
    if (norm > Scalar(0)) return d / norm;
    return Vec3<Scalar>(0, 0, 1);
}

// Per-pixel footprint weight exponent: -0.5 * delta^T conic delta.
template <typename Scalar> Scalar gaussian_power(const Vec3<Scalar> &conic, Scalar dx, Scalar dy) {
    return Scalar(-0.5) * (conic[0] * dx * dx + conic[2] * dy * dy) - conic[1] * dx * dy;
}

// Gradients with respect to one projected primitive, accumulated over pixels.
// Layout: mean2d (2), conic (3), color (3), opacity (1).
template <typename Scalar> using ScreenGrad = Eigen::Matrix<Scalar, 9, 1>;

void require_valid_target(int width, int height, const RenderOptions &options) {
    if (width <= 0 || height <= 0) {
        throw InvalidInput("render: width and height must be positive");
    }
    if (options.tile_size <= 0) {
        throw InvalidInput("render: tile size must be positive");
    }
}

} // namespace

template <typename Scalar> std::uint64_t fingerprint(std::span<const GaussianPrimitive<Scalar>> gaussians) {
    std::uint64_t h = 1469598103934665603ull;
    // Word-wise mixing; the byte-wise FNV loop dominated small renders.
    auto mix = [&h](const void *data, std::size_t bytes) {
        const auto *p = static_cast<const unsigned char *>(data);
        std::size_t i = 0;
        for (; i + 4 <= bytes; i += 4) {
            std::uint32_t w;
            std::memcpy(&w, p + i, 4);
            h = (h ^ w) * 0x100000001b3ull;
            h ^= h >> 29;
        }
        for (; i < bytes; ++i) h = (h ^ p[i]) * 1099511628211ull;
    };
    for (const auto &g : gaussians) {
        mix(g.position.data(), sizeof(Scalar) * 3);
        mix(g.log_scale.data(), sizeof(Scalar) * 3);
        mix(g.rotation.data(), sizeof(Scalar) * 4);
        mix(&g.opacity_logit, sizeof(Scalar));
        mix(g.sh.data(), sizeof(Scalar) * static_cast<std::size_t>(g.sh.size()));
    }
    return h;
}

template <typename Scalar>
Projection<Scalar> project_gaussian(const GaussianPrimitive<Scalar> &g, const Camera &cam, const RenderOptions &options) {
    Projection<Scalar> out;
    auto &pg                  = out.gaussian;
    const ViewParams<Scalar> v = view_params<Scalar>(cam);

    const Vec3<Scalar> p = v.W * g.position + v.t;
    if (!(p.z() > static_cast<Scalar>(options.near_plane))) {
        out.cull = Cull::Near;
        return out;
    }
    const Scalar iz = Scalar(1) / p.z();
    pg.depth        = p.z();
    pg.mean2d       = Vec2<Scalar>(v.fx * p.x() * iz + v.cx, v.fy * p.y() * iz + v.cy);

    Eigen::Matrix<Scalar, 2, 3> J;
    J << v.fx * iz, 0, -v.fx * p.x() * iz * iz, 0, v.fy * iz, -v.fy * p.y() * iz * iz;
    const Eigen::Matrix<Scalar, 2, 3> T = J * v.W;
    const Mat3<Scalar> M                 = quat_to_rotation(g.rotation) * g.scale().asDiagonal();
    Mat2<Scalar> cov                     = T * (M * M.transpose()) * T.transpose();
    cov(0, 0) += static_cast<Scalar>(options.dilation);
    cov(1, 1) += static_cast<Scalar>(options.dilation);
    pg.cov2d = cov;

    const Scalar det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > Scalar(0)) || !std::isfinite(det) || !pg.mean2d.allFinite()) {
        out.cull = Cull::Degenerate;
        return out;
    }
    pg.conic   = Vec3<Scalar>(cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det);
    pg.opacity = g.opacity();

    Scalar dist;
    const Vec3<Scalar> dir = view_direction<Scalar>(g.position, v.center, dist);
    const int degree       = resolve_sh_degree(g.sh.rows(), options.sh_degree);
    Eigen::Matrix<Scalar, kMaxShBasis, 1> Y;
    sh_basis(degree, dir, Y);
    const int nb           = sh_basis_count(degree);
    Vec3<Scalar> raw       = g.sh.topRows(nb).transpose() * Y.head(nb);
    raw.array() += Scalar(0.5);
    pg.color_clamped = raw.array() < Scalar(0);
    pg.color         = raw.cwiseMax(Scalar(0));

    const double cutoff = options.alpha_cutoff > 0 ? options.alpha_cutoff : options.negligible_alpha;
    if (!(static_cast<double>(pg.opacity) > cutoff)) {
        out.cull = Cull::Transparent;
        return out;
    }
    // Beyond Mahalanobis radius k the weight opacity * exp(-k^2 / 2) is below the cutoff.
    const double k  = std::sqrt(2.0 * std::log(static_cast<double>(pg.opacity) / cutoff));
    const double rx = k * std::sqrt(static_cast<double>(cov(0, 0)));
    const double ry = k * std::sqrt(static_cast<double>(cov(1, 1)));
    const double u = static_cast<double>(pg.mean2d.x()), w = static_cast<double>(pg.mean2d.y());
    const double lo_x = std::max(u - rx, 0.0), hi_x = std::min(u + rx, double(cam.width - 1));
    const double lo_y = std::max(w - ry, 0.0), hi_y = std::min(w + ry, double(cam.height - 1));
    if (!(lo_x <= hi_x) || !(lo_y <= hi_y)) {
        out.cull = Cull::Outside;
        return out;
    }
    pg.min_x = static_cast<int>(std::ceil(lo_x));
    pg.max_x = static_cast<int>(std::floor(hi_x));
    pg.min_y = static_cast<int>(std::ceil(lo_y));
    pg.max_y = static_cast<int>(std::floor(hi_y));
    if (pg.min_x > pg.max_x || pg.min_y > pg.max_y) {
        out.cull = Cull::Outside;
        return out;
    }
    out.cull = Cull::None;
    return out;
}

template <typename Scalar>
RenderOutput<Scalar> render(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam,
                            const RenderOptions &options) {
    const int W = cam.width, H = cam.height;
    require_valid_target(W, H, options);

    auto state           = std::make_shared<RenderState<Scalar>>();
    state->camera        = cam;
    state->options       = options;
    state->num_gaussians = gaussians.size();
    state->fingerprint   = fingerprint(gaussians);

    const int n = static_cast<int>(gaussians.size());
    std::vector<Projection<Scalar>> projections(n);
    parallel_for(n, [&](int i) {
        projections[i]                         = project_gaussian(gaussians[i], cam, options);
        projections[i].gaussian.source_index = i;
    });

    RenderOutput<Scalar> out;
    for (auto &p : projections) {
        if (p.cull == Cull::Degenerate) ++out.degenerate_skipped;
        if (p.visible()) state->projected.push_back(p.gaussian);
    }
    out.visible = static_cast<int>(state->projected.size());

    // Bin every visible primitive into the tiles its footprint overlaps, then
    // order each tile by (depth, source index).
    const int ts   = options.tile_size;
    state->tiles_x = (W + ts - 1) / ts;
    state->tiles_y = (H + ts - 1) / ts;
    const int tiles = state->tiles_x * state->tiles_y;

    struct Key {
        int tile;
        Scalar depth;
        int source;
        int entry;
    };
    std::vector<Key> keys;
    for (int e = 0; e < static_cast<int>(state->projected.size()); ++e) {
        const auto &pg = state->projected[e];
        for (int ty = pg.min_y / ts; ty <= pg.max_y / ts; ++ty) {
            for (int tx = pg.min_x / ts; tx <= pg.max_x / ts; ++tx) {
                keys.push_back({ty * state->tiles_x + tx, pg.depth, pg.source_index, e});
            }
        }
    }
    std::sort(keys.begin(), keys.end(), [](const Key &a, const Key &b) {
        if (a.tile != b.tile) return a.tile < b.tile;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source < b.source;
    });
    state->tile_offsets.assign(tiles + 1, 0);
    state->tile_entries.resize(keys.size());
    for (std::size_t k = 0; k < keys.size(); ++k) {
        ++state->tile_offsets[keys[k].tile + 1];
        state->tile_entries[k] = keys[k].entry;
    }
    for (int t = 0; t < tiles; ++t) state->tile_offsets[t + 1] += state->tile_offsets[t];

    state->unclamped           = ImageBuffer<Scalar>(W, H);
    state->final_transmittance = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(Eigen::Index(W) * H);
    state->stop_position       = Eigen::ArrayXi::Zero(Eigen::Index(W) * H);
    out.contributors           = Eigen::ArrayXi::Zero(Eigen::Index(W) * H);

    const Scalar cutoff = static_cast<Scalar>(options.alpha_cutoff);
    const Scalar stop   = static_cast<Scalar>(options.transmittance_stop);
    auto &st            = *state;

    // Entry-major compositing: each primitive visits only the pixels of its
    // footprint inside the tile, in (depth, index) order, so every pixel
    // still sees its contributors front to back.
    std::vector<std::vector<CompositeHit<Scalar>>> tile_hits(tiles);
    parallel_for(tiles, [&](int tile) {
        const int tx = tile % st.tiles_x, ty = tile / st.tiles_x;
        const int begin = st.tile_offsets[tile], end = st.tile_offsets[tile + 1];
        const int x0 = tx * ts, y0 = ty * ts;
        const int tw = std::min(W, x0 + ts) - x0, th = std::min(H, y0 + ts) - y0;
        std::vector<Scalar> T(tw * th, Scalar(1));
        std::vector<Vec3<Scalar>> C(tw * th, Vec3<Scalar>::Zero());
        std::vector<int> consumed(tw * th, end - begin), count(tw * th, 0);
        std::vector<char> done(tw * th, 0);
        auto &hits = tile_hits[tile];

        for (int k = begin; k < end; ++k) {
            const auto &pg = st.projected[st.tile_entries[k]];
            const int xa = std::max(pg.min_x, x0), xb = std::min(pg.max_x, x0 + tw - 1);
            const int ya = std::max(pg.min_y, y0), yb = std::min(pg.max_y, y0 + th - 1);
            for (int py = ya; py <= yb; ++py) {
                for (int px = xa; px <= xb; ++px) {
                    const int lp = (py - y0) * tw + (px - x0);
                    if (done[lp]) continue;
                    const Scalar power = gaussian_power(pg.conic, Scalar(px) - pg.mean2d.x(), Scalar(py) - pg.mean2d.y());
                    if (power > Scalar(0)) continue;
                    const Scalar alpha = pg.opacity * std::exp(power);
                    if (alpha < cutoff) continue;
                    hits.push_back({k, py * W + px, alpha, T[lp]});
                    C[lp] += pg.color * (alpha * T[lp]);
                    T[lp] *= Scalar(1) - alpha;
                    ++count[lp];
                    // an opaque layer still lands, then the pixel closes
                    if (T[lp] < stop) {
                        done[lp]     = 1;
                        consumed[lp] = k - begin + 1;
                    }
                }
            }
        }
        for (int ly = 0; ly < th; ++ly) {
            for (int lx = 0; lx < tw; ++lx) {
                const int lp                 = ly * tw + lx;
                const Eigen::Index pix       = Eigen::Index(y0 + ly) * W + (x0 + lx);
                st.final_transmittance[pix]  = T[lp];
                st.stop_position[pix]        = consumed[lp];
                out.contributors[pix]        = count[lp];
                st.unclamped.data.template segment<3>(pix * 3) = C[lp].array();
            }
        }
    });
    st.hit_offsets.assign(tiles + 1, 0);
    for (int t = 0; t < tiles; ++t) st.hit_offsets[t + 1] = st.hit_offsets[t] + static_cast<int>(tile_hits[t].size());
    st.hits.reserve(st.hit_offsets[tiles]);
    for (auto &h : tile_hits) st.hits.insert(st.hits.end(), h.begin(), h.end());

    out.image = ImageBuffer<Scalar>(W, H, st.unclamped.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)));
    out.alpha = Scalar(1) - st.final_transmittance;
    out.state = std::move(state);
    return out;
}

template <typename Scalar>
RenderOutput<Scalar> render(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam, int width,
                            int height, const RenderOptions &options) {
    Camera sized = cam;
    sized.width  = width;
    sized.height = height;
    return render(gaussians, sized, options);
}

template <typename Scalar>
RenderOutput<Scalar> render_at_level(std::span<const GaussianPrimitive<Scalar>> gaussians, const Camera &cam, int level,
                                     const RenderOptions &options) {
    return render(gaussians, camera_at_level(cam, level), options);
}

template <typename Scalar>
RenderGradients<Scalar> render_backward(std::span<const GaussianPrimitive<Scalar>> gaussians,
                                        const RenderOutput<Scalar> &forward, const ImageBuffer<Scalar> &upstream) {
    if (!forward.state) {
        throw ContractViolation("render_backward: forward output carries no retained state");
    }
    const RenderState<Scalar> &st = *forward.state;
    if (gaussians.size() != st.num_gaussians || fingerprint(gaussians) != st.fingerprint) {
        throw ContractViolation("render_backward: Gaussians differ from the paired forward pass");
    }
    const int W = st.camera.width, H = st.camera.height;
    if (upstream.width != W || upstream.height != H) {
        throw ContractViolation("render_backward: upstream gradient shape does not match the rendered image");
    }

    const int ts        = st.options.tile_size;
    const int tiles     = st.tiles_x * st.tiles_y;
    std::vector<ScreenGrad<Scalar>> entry_grads(st.tile_entries.size(), ScreenGrad<Scalar>::Zero());

    // Replay the recorded hits back to front. `behind` is the color
    // composited behind the current primitive, normalised by its own
    // transmittance, so no division by (1 - alpha) is needed.
    parallel_for(tiles, [&](int tile) {
        const int tx = tile % st.tiles_x, ty = tile / st.tiles_x;
        const int x0 = tx * ts, y0 = ty * ts;
        const int tw = std::min(W, x0 + ts) - x0, th = std::min(H, y0 + ts) - y0;
        std::vector<Vec3<Scalar>> dC(tw * th), behind(tw * th, Vec3<Scalar>::Zero());
        for (int ly = 0; ly < th; ++ly) {
            for (int lx = 0; lx < tw; ++lx) {
                const Eigen::Index pix = Eigen::Index(y0 + ly) * W + (x0 + lx);
                for (int c = 0; c < 3; ++c) {
                    // The output clamp to [0, 1] only binds above 1; colors are non-negative.
                    dC[ly * tw + lx][c] =
                        st.unclamped.data[pix * 3 + c] > Scalar(1) ? Scalar(0) : upstream.data[pix * 3 + c];
                }
            }
        }
        for (int h = st.hit_offsets[tile + 1] - 1; h >= st.hit_offsets[tile]; --h) {
            const auto &hit = st.hits[h];
            const int px = hit.pixel % W, py = hit.pixel / W;
            const int lp = (py - y0) * tw + (px - x0);
            const Vec3<Scalar> &dc = dC[lp];
            if (dc.isZero()) continue;
            const auto &pg = st.projected[st.tile_entries[hit.entry]];
            auto &g        = entry_grads[hit.entry];
            const Scalar alpha = hit.alpha, T = hit.transmittance;
            g.template segment<3>(5) += dc * (alpha * T);
            const Scalar dalpha = T * dc.dot(pg.color - behind[lp]);
            behind[lp]          = pg.color * alpha + behind[lp] * (Scalar(1) - alpha);

            g[8] += dalpha * (alpha / pg.opacity);
            const Scalar dpower = dalpha * alpha;
            const Scalar dx = Scalar(px) - pg.mean2d.x(), dy = Scalar(py) - pg.mean2d.y();
            g[0] += dpower * (pg.conic[0] * dx + pg.conic[1] * dy);
            g[1] += dpower * (pg.conic[1] * dx + pg.conic[2] * dy);
            g[2] += dpower * Scalar(-0.5) * dx * dx;
            g[3] += dpower * -dx * dy;
            g[4] += dpower * Scalar(-0.5) * dy * dy;
        }
    });

    // Tile-ordered reduction keeps the sums independent of the thread count.
    std::vector<ScreenGrad<Scalar>> screen(st.projected.size(), ScreenGrad<Scalar>::Zero());
    for (std::size_t k = 0; k < st.tile_entries.size(); ++k) {
        screen[st.tile_entries[k]] += entry_grads[k];
    }

    RenderGradients<Scalar> out;
    out.params.resize(gaussians.size());
    out.mean2d.assign(gaussians.size(), Vec2<Scalar>::Zero());
    out.visible.assign(gaussians.size(), 0);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        out.params[i] = GaussianPrimitive<Scalar>::zero(gaussians[i].sh_degree());
    }

    const ViewParams<Scalar> v = view_params<Scalar>(st.camera);
    parallel_for(static_cast<int>(st.projected.size()), [&](int e) {
        const auto &pg              = st.projected[e];
        const int src               = pg.source_index;
        const auto &g               = gaussians[src];
        const ScreenGrad<Scalar> &d = screen[e];
        auto &grad                  = out.params[src];
        out.visible[src]            = 1;
        out.mean2d[src]             = d.template head<2>();

        // Color through the SH basis and the view direction.
        Vec3<Scalar> dcolor = d.template segment<3>(5);
        for (int c = 0; c < 3; ++c) {
            if (pg.color_clamped[c]) dcolor[c] = 0;
        }
        Scalar dist;
        const Vec3<Scalar> dir = view_direction<Scalar>(g.position, v.center, dist);
        const int degree       = resolve_sh_degree(g.sh.rows(), st.options.sh_degree);
        const int nb           = sh_basis_count(degree);
        Eigen::Matrix<Scalar, kMaxShBasis, 1> Y;
        Eigen::Matrix<Scalar, kMaxShBasis, 3> dY;
        sh_basis(degree, dir, Y, &dY);
        grad.sh.topRows(nb) = Y.head(nb) * dcolor.transpose();
        if (dist > Scalar(0) && degree > 0) {
            const Eigen::Matrix<Scalar, kMaxShBasis, 1> per_basis = g.sh.topRows(nb) * dcolor;
            const Vec3<Scalar> ddir = dY.topRows(nb).transpose() * per_basis.head(nb);
            grad.position += (ddir - dir * dir.dot(ddir)) / dist;
        }

        grad.opacity_logit = d[8] * pg.opacity * (Scalar(1) - pg.opacity);

        // Conic -> cov2d -> (J, Sigma).
        Mat2<Scalar> Q, GQ;
        Q << pg.conic[0], pg.conic[1], pg.conic[1], pg.conic[2];
        GQ << d[2], Scalar(0.5) * d[3], Scalar(0.5) * d[3], d[4];
        const Mat2<Scalar> Gcov = -Q * GQ * Q;

        const Vec3<Scalar> p = v.W * g.position + v.t;
        const Scalar iz = Scalar(1) / p.z(), iz2 = iz * iz;
        Eigen::Matrix<Scalar, 2, 3> J;
        J << v.fx * iz, 0, -v.fx * p.x() * iz2, 0, v.fy * iz, -v.fy * p.y() * iz2;
        const Eigen::Matrix<Scalar, 2, 3> T = J * v.W;
        const Mat3<Scalar> R                 = quat_to_rotation(g.rotation);
        const Vec3<Scalar> s                 = g.scale();
        const Mat3<Scalar> M                 = R * s.asDiagonal();
        const Mat3<Scalar> Sigma             = M * M.transpose();

        const Mat3<Scalar> GSigma                 = T.transpose() * Gcov * T;
        const Eigen::Matrix<Scalar, 2, 3> GT      = Scalar(2) * Gcov * T * Sigma;
        const Eigen::Matrix<Scalar, 2, 3> GJ      = GT * v.W.transpose();
        const Mat3<Scalar> GM                     = Scalar(2) * GSigma * M;
        const Mat3<Scalar> GR                     = GM * s.asDiagonal();
        const Vec3<Scalar> Gs                     = (GM.array() * R.array()).colwise().sum().transpose();
        grad.log_scale                            = Gs.cwiseProduct(s);
        grad.rotation                             = quat_to_rotation_backward(g.rotation, GR);

        // Camera-frame position through the mean projection and the Jacobian.
        Vec3<Scalar> dp;
        const Scalar dmx = d[0], dmy = d[1];
        dp.x() = dmx * v.fx * iz + GJ(0, 2) * (-v.fx * iz2);
        dp.y() = dmy * v.fy * iz + GJ(1, 2) * (-v.fy * iz2);
        dp.z() = -dmx * v.fx * p.x() * iz2 - dmy * v.fy * p.y() * iz2 + GJ(0, 0) * (-v.fx * iz2) +
                 GJ(0, 2) * (Scalar(2) * v.fx * p.x() * iz2 * iz) + GJ(1, 1) * (-v.fy * iz2) +
                 GJ(1, 2) * (Scalar(2) * v.fy * p.y() * iz2 * iz);
        grad.position += v.W.transpose() * dp;
    });
    return out;
}

#define PRISMGS_INSTANTIATE_RASTERIZER(S)                                                                            \
    template std::uint64_t fingerprint<S>(std::span<const GaussianPrimitive<S>>);                                     \
    template Projection<S> project_gaussian<S>(const GaussianPrimitive<S> &, const Camera &, const RenderOptions &);  \
    template RenderOutput<S> render<S>(std::span<const GaussianPrimitive<S>>, const Camera &, const RenderOptions &); \
    template RenderOutput<S> render<S>(std::span<const GaussianPrimitive<S>>, const Camera &, int, int,              \
                                       const RenderOptions &);                                                        \
    template RenderOutput<S> render_at_level<S>(std::span<const GaussianPrimitive<S>>, const Camera &, int,          \
                                                const RenderOptions &);                                               \
    template RenderGradients<S> render_backward<S>(std::span<const GaussianPrimitive<S>>, const RenderOutput<S> &,   \
                                                   const ImageBuffer<S> &);

PRISMGS_INSTANTIATE_RASTERIZER(float)
PRISMGS_INSTANTIATE_RASTERIZER(double)

} // namespace prismgs
