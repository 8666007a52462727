// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

// prismgs: command-line front end (train, render, eval, synth, partition, ablate).

#include "prismgs/pyramid.hpp"
#include "prismgs/scene_io.hpp"
#include "prismgs/synthetic.hpp"
#include "prismgs/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace prismgs;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SceneDataset require_scene(const std::string &dir, bool images = true) {
    if (dir.empty()) throw UsageError("--scene is required (a directory with cameras.txt, points.ply and images)");
    if (!fs::exists(fs::path(dir) / kCamerasFile) || !fs::exists(fs::path(dir) / kPointsFile)) {
        throw UsageError("scene " + dir + " lacks cameras.txt or points.ply; create one with `prismgs synth --out " +
                         dir + "`");
    }
    return load_dataset(dir, images);
}

Checkpoint require_checkpoint(const std::string &dir) {
    if (dir.empty() || !fs::is_directory(dir) || !fs::exists(fs::path(dir) / "point_cloud.ply")) {
        throw UsageError("checkpoint '" + dir + "' not found; run `prismgs train --out <dir>` first");
    }
    return load_checkpoint(dir);
}

void print_progress(int it, const LossBreakdown &l, std::size_t count) {
    if (it % 500 != 0) return;
    std::printf("  iter %5d  loss %.5f  l1 %.5f  mss %.5f  size %.5f  gaussians %zu\n", it, l.total, l.l1, l.mss,
                l.size, count);
    std::fflush(stdout);
}

void print_summary(const char *label, const EvalSummary &s) {
    if (s.per_camera.empty()) {
        std::printf("%s: no cameras\n", label);
        return;
    }
    std::printf("%s: PSNR %.3f dB  SSIM %.4f  E %.5f  (%zu cameras)\n", label, s.mean_psnr, s.mean_ssim,
                s.mean_cross_scale, s.per_camera.size());
}

void dump_pyramids(const SceneDataset &ds, const TrainConfig &config, const fs::path &dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < ds.cameras.size(); ++i) {
        if (ds.cameras[i].split != Split::Train) continue;
        const auto pyr = build_gt_pyramid(ds.images[i], config.pyramid_levels, config.pyramid_sigma);
        for (int l = 0; l < pyr.size(); ++l) {
            char name[64];
            std::snprintf(name, sizeof(name), "cam%03d_level%d.png", ds.cameras[i].id, l);
            write_png((dir / name).string(), pyr.levels[l]);
        }
    }
}

nlohmann::json summary_json(const EvalSummary &s) {
    nlohmann::json cams = nlohmann::json::array();
    for (const auto &m : s.per_camera) {
        cams.push_back({{"camera_id", m.camera_id}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"cross_scale", m.cross_scale}});
    }
    return {{"mean_psnr", s.mean_psnr}, {"mean_ssim", s.mean_ssim}, {"mean_cross_scale", s.mean_cross_scale},
            {"cameras", cams}};
}

struct TrainFlags {
    std::string scene, out, profile = "desk", dump_pyramid;
    std::optional<int> iterations, pyramid_levels;
    std::optional<double> lambda_dssim, lambda_mss, lambda_size, pyramid_sigma, tau_size, nyquist_factor;
    std::vector<int> grid;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    bool normalize_size = false;
};

void add_config_flags(CLI::App *cmd, TrainFlags &f) {
    cmd->add_option("--scene", f.scene, "Dataset directory")->required();
    cmd->add_option("--profile", f.profile, "Schedule profile")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--iterations", f.iterations, "Optimisation steps per block")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lambda-dssim", f.lambda_dssim, "D-SSIM weight in the base loss")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lambda-mss", f.lambda_mss, "Pyramid supervision weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lambda-size", f.lambda_size, "Size regulariser weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--pyramid-levels", f.pyramid_levels, "Pyramid levels L")->check(CLI::PositiveNumber);
    cmd->add_option("--pyramid-sigma", f.pyramid_sigma, "Blur sigma between levels")->check(CLI::PositiveNumber);
    cmd->add_option("--tau-size", f.tau_size, "Explicit minimum scale")->check(CLI::PositiveNumber);
    cmd->add_option("--nyquist-factor", f.nyquist_factor, "tau = factor * T_min")->check(CLI::PositiveNumber);
    cmd->add_flag("--normalize-size-loss", f.normalize_size, "Average the size term over primitives");
    cmd->add_option("--grid", f.grid, "Block grid NX NY")->expected(2);
    cmd->add_option("--seed", f.seed, "Seed for every stochastic choice");
    cmd->add_flag("--deterministic", f.deterministic, "Deterministic reductions (always on)");
}

TrainConfig resolve_config(const TrainFlags &f) {
    TrainConfig c = TrainConfig::for_profile(f.profile);
    if (f.iterations) c.iterations = *f.iterations;
    if (f.lambda_dssim) c.lambda_dssim = *f.lambda_dssim;
    if (f.lambda_mss) c.lambda_mss = *f.lambda_mss;
    if (f.lambda_size) c.lambda_size = *f.lambda_size;
    if (f.pyramid_levels) c.pyramid_levels = *f.pyramid_levels;
    if (f.pyramid_sigma) c.pyramid_sigma = *f.pyramid_sigma;
    if (f.tau_size) c.tau_size = *f.tau_size;
    if (f.nyquist_factor) c.nyquist_factor = *f.nyquist_factor;
    if (f.normalize_size) c.normalize_size_loss = true;
    if (f.grid.size() == 2) {
        c.grid_x = f.grid[0];
        c.grid_y = f.grid[1];
    }
    if (f.seed) c.seed = *f.seed;
    c.deterministic = true;
    c.validate();
    return c;
}

void echo_config(const TrainConfig &c) {
    std::printf("# resolved configuration\n");
    std::istringstream in(config_to_text(c));
    for (std::string line; std::getline(in, line);) std::printf("#   %s\n", line.c_str());
    std::fflush(stdout);
}

int cmd_train(const TrainFlags &f) {
    if (f.out.empty()) throw UsageError("--out is required");
    const TrainConfig config = resolve_config(f);
    echo_config(config);
    const SceneDataset ds = require_scene(f.scene);
    if (!f.dump_pyramid.empty()) dump_pyramids(ds, config, f.dump_pyramid);

    const auto t0        = std::chrono::steady_clock::now();
    TrainResult result   = train_scene(ds, config, print_progress);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_checkpoint(f.out, Checkpoint{result.gaussians, config, result.report, result.adam});
    std::printf("trained %zu blocks, %zu Gaussians in %.1f s; T_min %.6g tau_size %.6g undersized %d\n",
                result.blocks.size(), result.gaussians.size(), seconds, result.report.T_min, result.report.tau_size,
                result.report.undersized);
    print_summary("train", result.report.train_metrics);
    print_summary("test", result.report.test_metrics);
    std::printf("checkpoint written to %s\n", f.out.c_str());
    return 0;
}

int cmd_render(const std::string &checkpoint, const std::string &scene, const std::string &out, int scale,
               const std::vector<int> &ids) {
    const Checkpoint ck   = require_checkpoint(checkpoint);
    const SceneDataset ds = require_scene(scene, false);
    if (out.empty()) throw UsageError("--out is required");
    int level = 0;
    while ((1 << level) < scale) ++level;
    fs::create_directories(out);
    int written = 0;
    for (const Camera &cam : ds.cameras) {
        if (!ids.empty() && std::find(ids.begin(), ids.end(), cam.id) == ids.end()) continue;
        const auto img = render_for_eval(ck.gaussians, cam, level);
        char name[64];
        std::snprintf(name, sizeof(name), "render_%03d.png", cam.id);
        write_png((fs::path(out) / name).string(), img);
        ++written;
    }
    std::printf("wrote %d renders at 1/%d resolution to %s\n", written, scale, out.c_str());
    return 0;
}

int cmd_eval(const std::string &checkpoint, const std::string &scene, const std::string &json_out,
             const std::string &dump) {
    const Checkpoint ck   = require_checkpoint(checkpoint);
    const SceneDataset ds = require_scene(scene);
    if (ds.test_cameras().empty()) throw UsageError("the scene has no test cameras to evaluate");
    const double sigma = ck.config.pyramid_sigma;
    const EvalSummary s = evaluate(ck.gaussians, ds, Split::Test, sigma);

    std::printf("# E: cross-scale consistency, meanL1(downsample2(blur(render)), render at half resolution);\n"
                "# reported in place of LPIPS, which needs a pretrained network.\n");
    std::printf("%-8s %12s %10s %12s\n", "camera", "psnr_db", "ssim", "E");
    for (const auto &m : s.per_camera) {
        std::printf("%-8d %12.6f %10.6f %12.8f\n", m.camera_id, m.psnr, m.ssim, m.cross_scale);
    }
    std::printf("%-8s %12.6f %10.6f %12.8f\n", "mean", s.mean_psnr, s.mean_ssim, s.mean_cross_scale);

    if (!json_out.empty()) {
        write_file_atomically(json_out, summary_json(s).dump(1) + "\n");
    }
    if (!dump.empty()) {
        fs::create_directories(dump);
        for (const Camera &cam : ds.cameras) {
            if (cam.split != Split::Test) continue;
            char name[64];
            for (int level = 0; level < 2; ++level) {
                std::snprintf(name, sizeof(name), "render_%03d_level%d.png", cam.id, level);
                write_png((fs::path(dump) / name).string(), render_for_eval(ck.gaussians, cam, level));
            }
        }
    }
    return 0;
}

int cmd_synth(SyntheticSpec spec, const std::string &out) {
    const auto t0         = std::chrono::steady_clock::now();
    const SceneDataset ds = generate_synthetic_scene(spec);
    save_dataset(out, ds);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s: %zu cameras (%zu test), %zu points, %dx%d, S=%d, seed %llu -> %s (%.1f s)\n", spec.family.c_str(),
                ds.cameras.size(), ds.test_cameras().size(), ds.points.size(), spec.width, spec.height,
                spec.supersample, static_cast<unsigned long long>(spec.seed), out.c_str(), seconds);
    return 0;
}

int cmd_partition(const std::string &scene, const std::vector<int> &grid, double margin) {
    const SceneDataset ds = require_scene(scene, false);
    const auto blocks     = partition_scene(ds, grid.at(0), grid.at(1), margin);
    std::printf("%-6s %-6s %-42s %8s %8s\n", "block", "cell", "box (xmin ymin zmin / xmax ymax zmax)", "points",
                "cameras");
    for (const auto &b : blocks) {
        char box[96];
        std::snprintf(box, sizeof(box), "%.3f %.3f %.3f / %.3f %.3f %.3f", b.box.min.x(), b.box.min.y(),
                      b.box.min.z(), b.box.max.x(), b.box.max.y(), b.box.max.z());
        char cell[16];
        std::snprintf(cell, sizeof(cell), "%d,%d", b.cell_x, b.cell_y);
        std::printf("%-6d %-6s %-42s %8zu %8zu\n", b.id, cell, box, b.point_indices.size(), b.camera_ids.size());
    }
    return 0;
}

int cmd_ablate(const TrainFlags &f, const std::string &rows_flag, const std::string &json_out) {
    const TrainConfig config = resolve_config(f);
    echo_config(config);
    std::vector<std::string> rows;
    std::stringstream ss(rows_flag);
    for (std::string r; std::getline(ss, r, ',');) {
        if (!r.empty()) rows.push_back(r);
    }
    const SceneDataset ds = require_scene(f.scene);
    const auto result     = run_ablation(ds, config, rows, print_progress);

    std::printf("%-10s %10s %10s %12s %10s %10s %10s\n", "row", "psnr_db", "ssim", "E", "train_psnr", "gaussians",
                "undersized");
    nlohmann::json table = nlohmann::json::array();
    for (const auto &row : result) {
        const auto &r = row.result.report;
        std::printf("%-10s %10.4f %10.4f %12.6f %10.4f %10zu %10d\n", row.name.c_str(), r.test_metrics.mean_psnr,
                    r.test_metrics.mean_ssim, r.test_metrics.mean_cross_scale, r.train_metrics.mean_psnr,
                    row.result.gaussians.size(), r.undersized);
        table.push_back({{"row", row.name},
                         {"lambda_mss", row.config.lambda_mss},
                         {"lambda_size", row.config.lambda_size},
                         {"test", summary_json(r.test_metrics)},
                         {"train", summary_json(r.train_metrics)},
                         {"gaussians", row.result.gaussians.size()},
                         {"undersized", r.undersized},
                         {"tau_size", r.tau_size}});
    }
    if (!json_out.empty()) write_file_atomically(json_out, table.dump(1) + "\n");
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Desk-scale Gaussian splatting trainer with pyramid supervision and size regularisation"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    auto *train = app.add_subcommand("train", "Partition, train every block, merge and save a checkpoint");
    add_config_flags(train, train_flags);
    train->add_option("--out", train_flags.out, "Checkpoint directory")->required();
    train->add_option("--dump-pyramid", train_flags.dump_pyramid, "Write ground-truth pyramids here");

    std::string r_ckpt, r_scene, r_out;
    int r_scale = 1;
    std::vector<int> r_ids;
    auto *rend = app.add_subcommand("render", "Render cameras from a checkpoint");
    rend->add_option("--checkpoint", r_ckpt, "Checkpoint directory")->required();
    rend->add_option("--scene", r_scene, "Dataset directory with cameras.txt")->required();
    rend->add_option("--out", r_out, "Output directory")->required();
    rend->add_option("--scale", r_scale, "Downsampling factor")->check(CLI::IsMember({1, 2, 4}));
    rend->add_option("--camera", r_ids, "Camera ids (default: all)");

    std::string e_ckpt, e_scene, e_json, e_dump;
    auto *ev = app.add_subcommand("eval", "PSNR, SSIM and cross-scale error E on the test split");
    ev->add_option("--checkpoint", e_ckpt, "Checkpoint directory")->required();
    ev->add_option("--scene", e_scene, "Dataset directory")->required();
    ev->add_option("--json", e_json, "Also write metrics as JSON");
    ev->add_option("--dump", e_dump, "Write the evaluated renders here");

    SyntheticSpec spec;
    std::string s_out;
    auto *syn = app.add_subcommand("synth", "Generate a synthetic scene with supersampled ground truth");
    syn->add_option("--family", spec.family, "Scene family")
        ->check(CLI::IsMember({"checkerboard-plane", "gaussian-field", "two-walls"}));
    syn->add_option("--out", s_out, "Dataset directory")->required();
    syn->add_option("--cameras", spec.num_cameras, "Camera count")->check(CLI::PositiveNumber);
    syn->add_option("--width", spec.width, "Image width")->check(CLI::PositiveNumber);
    syn->add_option("--height", spec.height, "Image height")->check(CLI::PositiveNumber);
    syn->add_option("--supersample", spec.supersample, "Supersampling factor S")->check(CLI::PositiveNumber);
    syn->add_option("--seed", spec.seed, "Seed");

    std::string p_scene;
    std::vector<int> p_grid = {1, 1};
    double p_margin         = 0.2;
    auto *part = app.add_subcommand("partition", "Show the block partition of a scene");
    part->add_option("--scene", p_scene, "Dataset directory")->required();
    part->add_option("--grid", p_grid, "Block grid NX NY")->expected(2);
    part->add_option("--margin", p_margin, "Camera margin per side, fraction of block size")
        ->check(CLI::NonNegativeNumber);

    TrainFlags ab_flags;
    std::string ab_rows = "baseline,mss,size,full", ab_json;
    auto *abl = app.add_subcommand("ablate", "Baseline / +L_mss / +L_size / full model with one shared seed");
    add_config_flags(abl, ab_flags);
    abl->add_option("--rows", ab_rows, "Comma-separated rows: baseline,mss,size,full");
    abl->add_option("--json", ab_json, "Also write the table as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        if (*train) return cmd_train(train_flags);
        if (*rend) return cmd_render(r_ckpt, r_scene, r_out, r_scale, r_ids);
        if (*ev) return cmd_eval(e_ckpt, e_scene, e_json, e_dump);
        if (*syn) return cmd_synth(spec, s_out);
        if (*part) return cmd_partition(p_scene, p_grid, p_margin);
        if (*abl) return cmd_ablate(ab_flags, ab_rows, ab_json);
    } catch (const UsageError &e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
