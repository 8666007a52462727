// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/trainer.hpp"

#include "prismgs/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace prismgs {

SamplingBound resolve_sampling_bound(const SceneDataset &dataset, const TrainConfig &config) {
    SamplingBoundOptions opts;
    opts.nyquist_factor = config.nyquist_factor;
    if (!config.tau_size) return compute_sampling_bound(dataset.cameras, dataset.points, opts);
    SamplingBound bound;
    try {
        bound = compute_sampling_bound(dataset.cameras, dataset.points, opts);
    } catch (const ConfigError &) {
        bound.T_min = *config.tau_size / config.nyquist_factor;
    }
    bound.tau_size = *config.tau_size;
    return bound;
}

namespace {

double camera_extent(std::span<const Camera> cams) {
    Vec3<double> mean = Vec3<double>::Zero();
    for (const auto &c : cams) mean += c.center();
    mean /= double(cams.size());
    double radius = 0;
    for (const auto &c : cams) radius = std::max(radius, (c.center() - mean).norm());
    // one camera, or all at one spot: fall back to unit extent
    return radius > 0 ? 1.1 * radius : 1.0;
}

void check_finite(double value, int iteration, const char *term) {
    if (!std::isfinite(value)) throw TrainingDiverged(iteration, term);
}

} // namespace

BlockResult train_block(const SceneBlock &block, const SceneDataset &dataset, const TrainConfig &config,
                        const SamplingBound &bound, const ProgressFn &progress, const Gaussians *initial) {
    config.validate();
    if (!dataset.has_images()) throw ConfigError("train_block: the dataset has no ground-truth images");

    std::vector<std::size_t> train_idx;
    std::vector<Camera> train_cams;
    for (int id : block.camera_ids) {
        const std::size_t i = dataset.index_of(id);
        if (dataset.cameras[i].split != Split::Train) continue;
        train_idx.push_back(i);
        train_cams.push_back(dataset.cameras[i]);
    }
    if (train_idx.empty()) {
        throw ConfigError("train_block: block " + std::to_string(block.id) + " has no training camera");
    }

    BlockResult result;
    if (initial) {
        result.gaussians = *initial;
    } else {
        const Aabb grown = block.box.expanded_xy(config.block_margin);
        SparsePointCloud local;
        for (const auto &p : dataset.points.points) {
            if (grown.contains_xy(p.position)) local.points.push_back(p);
        }
        if (local.empty()) throw ConfigError("train_block: block " + std::to_string(block.id) + " has no points");
        result.gaussians = init_gaussians(local, config.sh_degree, bound.tau_size);
    }
    Gaussians &gs = result.gaussians;
    for (const auto &g : gs) {
        if (g.sh_degree() != config.sh_degree) throw ConfigError("train_block: initial Gaussians have the wrong SH degree");
    }
    result.adam.m.assign(gs.size(), GaussianPrimitive<float>::zero(config.sh_degree));
    result.adam.v = result.adam.m;

    TrainReport &report = result.report;
    report.T_min        = bound.T_min;
    report.tau_size     = bound.tau_size;
    report.history.reserve(config.iterations);
    report.gaussian_count.reserve(config.iterations);

    const bool use_mss  = config.uses_mss();
    const bool use_size = config.uses_size();
    const double lambda_mss  = use_mss ? config.lambda_mss : 0.0;
    const double lambda_size = use_size ? config.lambda_size : 0.0;
    const double extent      = camera_extent(train_cams);
    const float tau          = static_cast<float>(bound.tau_size);

    std::map<std::size_t, ImagePyramid<float>> gt_cache;
    auto gt_pyramid = [&](std::size_t idx) -> const ImagePyramid<float> & {
        auto it = gt_cache.find(idx);
        if (it == gt_cache.end()) {
            it = gt_cache.emplace(idx, build_gt_pyramid(dataset.images[idx], config.pyramid_levels, config.pyramid_sigma))
                     .first;
        }
        return it->second;
    };

    const std::uint64_t block_seed = config.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(block.id + 1));
    std::mt19937_64 rng(block_seed);
    std::vector<std::size_t> order(train_idx.size());
    DensifyStats stats;
    stats.reset(gs.size());
    const float opacity_floor = static_cast<float>(logit(0.01));

    for (int it = 1; it <= config.iterations; ++it) {
        if ((it - 1) % static_cast<int>(order.size()) == 0) {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
        }
        const std::size_t slot = order[(it - 1) % order.size()];
        const std::size_t idx  = train_idx[slot];
        const Camera &cam      = dataset.cameras[idx];

        RenderOptions opts;
        opts.sh_degree = std::min(config.sh_degree, (it - 1) / config.sh_increase_interval);

        std::vector<RenderOutput<float>> outs;
        ImagePyramid<float> rendered;
        if (use_mss) {
            rendered = build_rendered_pyramid<float>(gs, cam, config.pyramid_levels, opts, &outs);
        } else {
            outs.push_back(render<float>(gs, cam, opts));
        }

        const BaseLoss<float> base = base_loss(outs[0].image, dataset.images[idx], config.lambda_dssim);
        check_finite(base.value, it, "base");
        RenderGradients<float> grads = render_backward<float>(gs, outs[0], base.gradient);

        double mss_value = 0;
        if (use_mss) {
            const MssLoss<float> mss = mss_loss(rendered, gt_pyramid(idx));
            mss_value                = mss.value;
            check_finite(mss_value, it, "mss");
            for (std::size_t l = 1; l < outs.size(); ++l) {
                ImageBuffer<float> upstream = mss.gradients[l];
                upstream.data *= static_cast<float>(lambda_mss);
                const RenderGradients<float> gl = render_backward<float>(gs, outs[l], upstream);
                for (std::size_t i = 0; i < gs.size(); ++i) grads.params[i] += gl.params[i];
            }
        }

        double size_value = 0;
        if (use_size) {
            const SizeLoss<float> sl = size_loss<float>(gs, tau, config.normalize_size_loss);
            size_value               = sl.value;
            check_finite(size_value, it, "size");
            for (std::size_t i = 0; i < gs.size(); ++i) {
                grads.params[i].log_scale += static_cast<float>(lambda_size) * sl.log_scale_grad[i];
            }
        }

        LossBreakdown terms = total_loss(base.value, mss_value, size_value, lambda_mss, lambda_size);
        terms.l1            = base.l1;
        terms.dssim         = 1.0 - static_cast<double>(base.ssim);
        check_finite(terms.total, it, "total");

        if (it < config.densify_until_iter) {
            const double hw = 0.5 * cam.width, hh = 0.5 * cam.height;
            for (std::size_t i = 0; i < gs.size(); ++i) {
                if (!grads.visible[i]) continue;
                const Vec2<float> &d = grads.mean2d[i];
                stats.grad_sum[i] += std::hypot(double(d.x()) * hw, double(d.y()) * hh);
                ++stats.observations[i];
            }
        }

        GroupRates rates;
        rates.position  = position_lr(config.lr, it - 1, config.iterations, extent);
        rates.log_scale = config.lr.log_scale;
        rates.rotation  = config.lr.rotation;
        rates.opacity   = config.lr.opacity;
        rates.sh_dc     = config.lr.sh_dc;
        rates.sh_rest   = config.lr.sh_rest;
        adam_step(gs, grads.params, result.adam, rates);

        if (it < config.densify_until_iter) {
            if (it > config.densify_from_iter && it % config.densify_interval == 0) {
                report.events.push_back(
                    densify_and_prune(gs, result.adam, stats, config, bound.tau_size, block_seed, it));
                stats.reset(gs.size());
            }
            if (config.opacity_reset_interval > 0 && it % config.opacity_reset_interval == 0) {
                for (std::size_t i = 0; i < gs.size(); ++i) {
                    gs[i].opacity_logit = std::min(gs[i].opacity_logit, opacity_floor);
                    result.adam.m[i].opacity_logit = 0;
                    result.adam.v[i].opacity_logit = 0;
                }
            }
        }

        report.history.push_back(terms);
        report.gaussian_count.push_back(static_cast<int>(gs.size()));
        if (progress) progress(it, terms, gs.size());
    }
    report.undersized = count_undersized<float>(gs, bound.tau_size);
    return result;
}

TrainResult train_scene(const SceneDataset &dataset, const TrainConfig &config, const ProgressFn &progress) {
    config.validate();
    if (!dataset.has_images()) throw ConfigError("train_scene: the dataset has no ground-truth images");
    const SamplingBound bound = resolve_sampling_bound(dataset, config);

    TrainResult out;
    out.blocks = partition_scene(dataset, config.grid_x, config.grid_y, config.block_margin);
    const BlockGrid grid(point_bounds(dataset.points), config.grid_x, config.grid_y);

    std::vector<SceneBlock> trained_blocks;
    std::vector<Gaussians> trained;
    std::vector<BlockResult> results;
    for (const SceneBlock &block : out.blocks) {
        const bool has_train = std::any_of(block.camera_ids.begin(), block.camera_ids.end(), [&](int id) {
            return dataset.cameras[dataset.index_of(id)].split == Split::Train;
        });
        if (block.point_indices.empty() || !has_train) continue;
        results.push_back(train_block(block, dataset, config, bound, progress));
        trained_blocks.push_back(block);
        trained.push_back(results.back().gaussians);
    }
    if (results.empty()) throw ConfigError("train_scene: no block has both points and training cameras");

    out.gaussians = merge_blocks(trained_blocks, trained, grid);
    if (results.size() == 1 && out.gaussians.size() == results.front().gaussians.size()) {
        out.adam = std::move(results.front().adam);
    }
    TrainReport &report = out.report;
    report.T_min        = bound.T_min;
    report.tau_size     = bound.tau_size;
    for (auto &r : results) {
        report.history.insert(report.history.end(), r.report.history.begin(), r.report.history.end());
        report.gaussian_count.insert(report.gaussian_count.end(), r.report.gaussian_count.begin(),
                                     r.report.gaussian_count.end());
        report.events.insert(report.events.end(), r.report.events.begin(), r.report.events.end());
    }
    report.undersized    = count_undersized<float>(out.gaussians, bound.tau_size);
    report.train_metrics = evaluate(out.gaussians, dataset, Split::Train, config.pyramid_sigma);
    report.test_metrics  = evaluate(out.gaussians, dataset, Split::Test, config.pyramid_sigma);
    return out;
}

// ---- evaluation ----------------------------------------------------------------

ImageBuffer<float> render_for_eval(std::span<const GaussianPrimitive<float>> gaussians, const Camera &cam, int level) {
    return quantize8(render_at_level<float>(gaussians, cam, level).image);
}

double cross_scale_error(std::span<const GaussianPrimitive<float>> gaussians, const Camera &cam, double sigma) {
    const ImageBuffer<double> fine   = render_for_eval(gaussians, cam, 0).cast<double>();
    const ImageBuffer<double> coarse = render_for_eval(gaussians, cam, 1).cast<double>();
    return l1_image_loss(downsample2(gaussian_blur(fine, sigma)), coarse).value;
}

EvalSummary evaluate(std::span<const GaussianPrimitive<float>> gaussians, const SceneDataset &dataset, Split split,
                     double sigma) {
    if (!dataset.has_images()) throw ConfigError("evaluate: the dataset has no ground-truth images");
    EvalSummary out;
    for (std::size_t i = 0; i < dataset.cameras.size(); ++i) {
        const Camera &cam = dataset.cameras[i];
        if (cam.split != split) continue;
        const ImageBuffer<double> img = render_for_eval(gaussians, cam).cast<double>();
        const ImageBuffer<double> gt  = dataset.images[i].cast<double>();
        CameraMetrics m;
        m.camera_id   = cam.id;
        m.psnr        = psnr(img, gt);
        m.ssim        = ssim(img, gt).value;
        m.cross_scale = cross_scale_error(gaussians, cam, sigma);
        out.per_camera.push_back(m);
    }
    if (!out.per_camera.empty()) {
        const double n = double(out.per_camera.size());
        for (const auto &m : out.per_camera) {
            out.mean_psnr += m.psnr / n;
            out.mean_ssim += m.ssim / n;
            out.mean_cross_scale += m.cross_scale / n;
        }
    }
    return out;
}

// ---- ablation -------------------------------------------------------------------

const std::vector<std::string> &ablation_row_names() {
    static const std::vector<std::string> names = {"baseline", "mss", "size", "full"};
    return names;
}

std::vector<AblationRow> run_ablation(const SceneDataset &dataset, const TrainConfig &config,
                                      std::span<const std::string> rows, const ProgressFn &progress) {
    for (const auto &name : rows) {
        const auto &known = ablation_row_names();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw ConfigError("unknown ablation row '" + name + "' (expected baseline, mss, size or full)");
        }
    }
    std::vector<AblationRow> out;
    for (const auto &name : rows) {
        AblationRow row;
        row.name   = name;
        row.config = config;
        row.config.substrate_objective = false;
        if (name == "baseline" || name == "size") row.config.lambda_mss = 0;
        if (name == "baseline" || name == "mss") row.config.lambda_size = 0;
        row.result = train_scene(dataset, row.config, progress);
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace prismgs
