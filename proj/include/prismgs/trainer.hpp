// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/gaussian.hpp"
#include "prismgs/losses.hpp"
#include "prismgs/rasterizer.hpp"
#include "prismgs/regularization.hpp"
#include "prismgs/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prismgs {

using Gaussians = std::vector<GaussianPrimitive<float>>;

/// Thrown when a loss term stops being finite.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(int iteration, const std::string &term)
        : Error("non-finite " + term + " loss at iteration " + std::to_string(iteration)), iteration_(iteration),
          term_(term) {}
    int iteration() const { return iteration_; }
    const std::string &term() const { return term_; }

private:
    int iteration_;
    std::string term_;
};

struct LearningRates {
    double position_init  = 1.6e-4; // multiplied by the scene extent
    double position_final = 1.6e-6;
    double log_scale      = 5e-3;
    double rotation       = 1e-3;
    double opacity        = 5e-2;
    double sh_dc          = 2.5e-3;
    double sh_rest        = 2.5e-3 / 20;
    bool operator==(const LearningRates &) const = default;
};

struct TrainConfig {
    std::string profile = "desk";

    double lambda_dssim = 0.2;
    double lambda_mss   = 0.1;
    double lambda_size  = 0.01;
    int pyramid_levels  = 4;
    double pyramid_sigma = 1.0;
    std::optional<double> tau_size;
    double nyquist_factor = 2.0;
    bool normalize_size_loss = false; // mean instead of sum over primitives

    int iterations = 5000;
    LearningRates lr;

    double densify_grad_threshold  = 0.0002;
    int densify_from_iter          = 500;
    int densify_interval           = 100;
    int densify_until_iter         = 2500;
    int opacity_reset_interval     = 0; // 0 disables
    double prune_opacity_threshold = 0.005;
    int max_gaussians              = 500000;

    int sh_degree            = 3;
    int sh_increase_interval = 1000;

    int grid_x          = 1;
    int grid_y          = 1;
    double block_margin = 0.2;

    std::uint64_t seed = 0;
    bool deterministic = true;
    /// Optimise the plain base loss, ignoring lambda_mss and lambda_size.
    bool substrate_objective = false;

    static TrainConfig desk();
    static TrainConfig paper();
    static TrainConfig for_profile(const std::string &name);

    /// Throws ConfigError on out-of-range values.
    void validate() const;
    bool uses_mss() const { return !substrate_objective && lambda_mss > 0 && pyramid_levels > 1; }
    bool uses_size() const { return !substrate_objective && lambda_size > 0; }

    bool operator==(const TrainConfig &) const = default;
};

/// key = value text, one entry per line, preceded by `format_version = N`.
std::string config_to_text(const TrainConfig &config);
TrainConfig config_from_text(const std::string &text);

// ---- optimisation ------------------------------------------------------------

/// Adam moments shaped like the parameters they belong to.
struct AdamState {
    Gaussians m;
    Gaussians v;
    std::uint64_t step = 0;
    bool operator==(const AdamState &) const = default;
};

struct AdamHyper {
    double beta1   = 0.9;
    double beta2   = 0.999;
    double epsilon = 1e-15;
};

/// Per-group learning rates for one step.
struct GroupRates {
    double position = 0, log_scale = 0, rotation = 0, opacity = 0, sh_dc = 0, sh_rest = 0;
};

/// Exponential (log-linear) interpolation from init to final over max_steps.
double position_lr(const LearningRates &lr, int step, int max_steps, double extent);

void adam_step(Gaussians &params, const Gaussians &grads, AdamState &state, const GroupRates &rates,
               const AdamHyper &hyper = {});

// ---- initialisation and density control ---------------------------------------

/// Mean distance from each point to its `k` nearest neighbours.
std::vector<double> mean_neighbor_distance(const SparsePointCloud &points, int k = 3);

/// One Gaussian per point; isotropic scale from the 3 nearest neighbours,
/// raised to `min_scale` when given. Fewer than 4 points fall back to the
/// bounding-box diagonal / 100 with a warning on stderr.
Gaussians init_gaussians(const SparsePointCloud &points, int sh_degree = 3,
                         std::optional<double> min_scale = std::nullopt);

struct DensifyEvent {
    int iteration = 0;
    int cloned    = 0;
    int split     = 0;
    int pruned    = 0;
    int count     = 0; // after the event
    bool operator==(const DensifyEvent &) const = default;
};

/// Screen-space gradient statistics gathered between density updates.
struct DensifyStats {
    std::vector<double> grad_sum;
    std::vector<int> observations;
    void reset(std::size_t n) {
        grad_sum.assign(n, 0.0);
        observations.assign(n, 0);
    }
};

/// Clone (min scale < 2 tau) or split (two children, scales / 1.6) every
/// Gaussian whose mean accumulated gradient exceeds the threshold, then
/// prune low opacity. Adam moments follow their Gaussians; new ones start
/// at zero. Growth stops at config.max_gaussians.
DensifyEvent densify_and_prune(Gaussians &gaussians, AdamState &adam, const DensifyStats &stats,
                               const TrainConfig &config, double tau_size, std::uint64_t seed, int iteration);

// ---- blocks -----------------------------------------------------------------

struct Aabb {
    Vec3<double> min = Vec3<double>::Zero();
    Vec3<double> max = Vec3<double>::Zero();
    bool contains(const Vec3<double> &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    bool contains_xy(const Vec3<double> &p) const {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
    }
    /// Grown by `fraction` of its x/y size on every side.
    Aabb expanded_xy(double fraction) const;
};

struct SceneBlock {
    int id = 0;
    int cell_x = 0, cell_y = 0;
    Aabb box;
    std::vector<int> camera_ids;
    std::vector<int> point_indices; // owned points
};

/// Uniform nx x ny grid over the x/y extent of the points.
class BlockGrid {
public:
    BlockGrid(const Aabb &bounds, int nx, int ny);
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    const Aabb &bounds() const { return bounds_; }
    Aabb cell_box(int ix, int iy) const;
    /// Owning block id; positions outside the bounds belong to the nearest edge cell.
    int owner(const Vec3<double> &p) const;

private:
    Aabb bounds_;
    int nx_, ny_;
};

Aabb point_bounds(const SparsePointCloud &points);

/// Throws ConfigError for an empty cloud or a non-positive grid.
std::vector<SceneBlock> partition_scene(const SceneDataset &dataset, int nx, int ny, double margin = 0.2);

// ---- training -----------------------------------------------------------------

struct CameraMetrics {
    int camera_id      = 0;
    double psnr        = 0;
    double ssim        = 0;
    double cross_scale = 0; // E
    bool operator==(const CameraMetrics &) const = default;
};

struct EvalSummary {
    std::vector<CameraMetrics> per_camera;
    double mean_psnr        = 0;
    double mean_ssim        = 0;
    double mean_cross_scale = 0;
    bool operator==(const EvalSummary &) const = default;
};

struct TrainReport {
    std::vector<LossBreakdown> history;
    std::vector<int> gaussian_count; // per iteration, after the optimiser step
    std::vector<DensifyEvent> events;
    double T_min    = 0;
    double tau_size = 0;
    EvalSummary train_metrics;
    EvalSummary test_metrics;
    int undersized = 0; // min scale below tau_size - 1e-6 at the end
    bool operator==(const TrainReport &) const = default;
};

struct BlockResult {
    Gaussians gaussians;
    AdamState adam;
    TrainReport report;
};

/// Called after every iteration with (iteration, loss terms, Gaussian count).
using ProgressFn = std::function<void(int, const LossBreakdown &, std::size_t)>;

/// T_min and tau_size for the dataset (tau from the config when set).
SamplingBound resolve_sampling_bound(const SceneDataset &dataset, const TrainConfig &config);

/// Optimises one block. `initial` overrides point-cloud initialisation.
BlockResult train_block(const SceneBlock &block, const SceneDataset &dataset, const TrainConfig &config,
                        const SamplingBound &bound, const ProgressFn &progress = {},
                        const Gaussians *initial = nullptr);

/// Concatenation in block order, keeping each Gaussian only when its owning
/// cell in `grid` is the block that trained it.
Gaussians merge_blocks(std::span<const SceneBlock> blocks, std::span<const Gaussians> trained, const BlockGrid &grid);

struct TrainResult {
    Gaussians gaussians;
    AdamState adam; // single-block runs only; empty after a merge
    TrainReport report;
    std::vector<SceneBlock> blocks;
};

/// partition -> train every block -> merge -> evaluate both splits.
TrainResult train_scene(const SceneDataset &dataset, const TrainConfig &config, const ProgressFn &progress = {});

// ---- evaluation ----------------------------------------------------------------

/// Renders used for metrics: 8-bit quantized, like a written PNG.
ImageBuffer<float> render_for_eval(std::span<const GaussianPrimitive<float>> gaussians, const Camera &cam,
                                   int level = 0);

/// meanL1(downsample2(blur(render at level 0, sigma)), render at level 1).
double cross_scale_error(std::span<const GaussianPrimitive<float>> gaussians, const Camera &cam, double sigma);

/// PSNR / SSIM against the dataset images plus E, over cameras of `split`.
EvalSummary evaluate(std::span<const GaussianPrimitive<float>> gaussians, const SceneDataset &dataset, Split split,
                     double sigma = 1.0);

// ---- checkpoints ----------------------------------------------------------------

inline constexpr int kCheckpointVersion   = 1;
inline constexpr char kOptimizerMagic[8] = {'P', 'G', 'S', 'O', 'P', 'T', '1', '\0'};

struct Checkpoint {
    Gaussians gaussians;
    TrainConfig config;
    TrainReport report;
    AdamState adam;
};

/// point_cloud.ply, config.toml, optimizer.bin and report.json in `dir`,
/// each written to a temporary file and renamed.
void save_checkpoint(const std::filesystem::path &dir, const Checkpoint &checkpoint);

/// Throws VersionMismatch when any sidecar carries another version.
Checkpoint load_checkpoint(const std::filesystem::path &dir);

std::string report_to_json(const TrainReport &report, int indent = 1);
TrainReport report_from_json(const std::string &text);

// ---- ablation -------------------------------------------------------------------

struct AblationRow {
    std::string name; // baseline, mss, size, full
    TrainConfig config;
    TrainResult result;
};

/// Row names in table order.
const std::vector<std::string> &ablation_row_names();

/// Same seed and schedule for every row; each row only toggles lambda_mss
/// and lambda_size (baseline zeroes both). Unknown names throw ConfigError.
std::vector<AblationRow> run_ablation(const SceneDataset &dataset, const TrainConfig &config,
                                      std::span<const std::string> rows, const ProgressFn &progress = {});

} // namespace prismgs
