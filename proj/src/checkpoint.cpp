// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/scene_io.hpp"
#include "prismgs/trainer.hpp"

#include <json.hpp>

#include <cstring>

namespace prismgs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char *kPlyFile       = "point_cloud.ply";
constexpr const char *kConfigFile    = "config.toml";
constexpr const char *kOptimizerFile = "optimizer.bin";
constexpr const char *kReportFile    = "report.json";

json summary_to_json(const EvalSummary &s) {
    json cams = json::array();
    for (const auto &m : s.per_camera) {
        cams.push_back({{"camera_id", m.camera_id}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"cross_scale", m.cross_scale}});
    }
    return {{"mean_psnr", s.mean_psnr},
            {"mean_ssim", s.mean_ssim},
            {"mean_cross_scale", s.mean_cross_scale},
            {"cameras", cams}};
}

EvalSummary summary_from_json(const json &j) {
    EvalSummary s;
    s.mean_psnr        = j.at("mean_psnr").get<double>();
    s.mean_ssim        = j.at("mean_ssim").get<double>();
    s.mean_cross_scale = j.at("mean_cross_scale").get<double>();
    for (const auto &c : j.at("cameras")) {
        s.per_camera.push_back({c.at("camera_id").get<int>(), c.at("psnr").get<double>(), c.at("ssim").get<double>(),
                                c.at("cross_scale").get<double>()});
    }
    return s;
}

// ---- optimizer.bin: magic, u32 version, u64 step, u64 count, then per
// Gaussian u32 basis rows followed by the m and v parameter vectors.

template <typename T> void put(std::string &buf, const T &v) {
    buf.append(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T> T take(const std::string &buf, std::size_t &pos) {
    if (pos + sizeof(T) > buf.size()) throw FormatError("optimizer.bin is truncated");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

void put_params(std::string &buf, const GaussianPrimitive<float> &g) {
    for (int p = 0; p < parameter_count(g.sh_degree()); ++p) put(buf, parameter_at(g, p));
}

GaussianPrimitive<float> take_params(const std::string &buf, std::size_t &pos, int degree) {
    auto g = GaussianPrimitive<float>::zero(degree);
    for (int p = 0; p < parameter_count(degree); ++p) parameter_at(g, p) = take<float>(buf, pos);
    return g;
}

std::string encode_optimizer(const AdamState &adam) {
    if (adam.m.size() != adam.v.size()) throw ContractViolation("optimizer state has mismatched moments");
    std::string buf(kOptimizerMagic, sizeof(kOptimizerMagic));
    put<std::uint32_t>(buf, kCheckpointVersion);
    put<std::uint64_t>(buf, adam.step);
    put<std::uint64_t>(buf, adam.m.size());
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(adam.m[i].sh.rows()));
        put_params(buf, adam.m[i]);
        put_params(buf, adam.v[i]);
    }
    return buf;
}

AdamState decode_optimizer(const std::string &buf) {
    if (buf.size() < sizeof(kOptimizerMagic) || std::memcmp(buf.data(), kOptimizerMagic, 6) != 0) {
        throw FormatError("optimizer.bin lacks the PGSOPT magic");
    }
    if (std::memcmp(buf.data(), kOptimizerMagic, sizeof(kOptimizerMagic)) != 0) {
        throw VersionMismatch("optimizer.bin has magic '" + std::string(buf.data(), 7) + "', expected PGSOPT1");
    }
    std::size_t pos = sizeof(kOptimizerMagic);
    const auto version = take<std::uint32_t>(buf, pos);
    if (version != static_cast<std::uint32_t>(kCheckpointVersion)) {
        throw VersionMismatch("optimizer.bin version " + std::to_string(version) + " is not supported");
    }
    AdamState adam;
    adam.step        = take<std::uint64_t>(buf, pos);
    const auto count = take<std::uint64_t>(buf, pos);
    for (std::uint64_t i = 0; i < count; ++i) {
        const int degree = sh_degree_for_count(static_cast<int>(take<std::uint32_t>(buf, pos)));
        if (degree < 0) throw FormatError("optimizer.bin has an invalid SH row count");
        adam.m.push_back(take_params(buf, pos, degree));
        adam.v.push_back(take_params(buf, pos, degree));
    }
    if (pos != buf.size()) throw FormatError("optimizer.bin has trailing bytes");
    return adam;
}

} // namespace

std::string report_to_json(const TrainReport &r, int indent) {
    json history = {{"l1", json::array()},   {"dssim", json::array()}, {"base", json::array()},
                    {"mss", json::array()},  {"size", json::array()},  {"total", json::array()},
                    {"gaussians", r.gaussian_count}};
    for (const auto &h : r.history) {
        history["l1"].push_back(h.l1);
        history["dssim"].push_back(h.dssim);
        history["base"].push_back(h.base);
        history["mss"].push_back(h.mss);
        history["size"].push_back(h.size);
        history["total"].push_back(h.total);
    }
    json events = json::array();
    for (const auto &e : r.events) {
        events.push_back({{"iteration", e.iteration},
                          {"cloned", e.cloned},
                          {"split", e.split},
                          {"pruned", e.pruned},
                          {"count", e.count}});
    }
    const json j = {{"format_version", kCheckpointVersion},
                    {"iterations", r.history.size()},
                    {"T_min", r.T_min},
                    {"tau_size", r.tau_size},
                    {"undersized", r.undersized},
                    {"history", history},
                    {"events", events},
                    {"metrics", {{"train", summary_to_json(r.train_metrics)}, {"test", summary_to_json(r.test_metrics)}}}};
    return j.dump(indent) + "\n";
}

TrainReport report_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw FormatError(std::string("report.json: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kCheckpointVersion) {
            throw VersionMismatch("report.json format_version " + j.at("format_version").dump() + " is not supported");
        }
        TrainReport r;
        r.T_min      = j.at("T_min").get<double>();
        r.tau_size   = j.at("tau_size").get<double>();
        r.undersized = j.at("undersized").get<int>();
        const json &h = j.at("history");
        const std::size_t n = h.at("total").size();
        for (std::size_t i = 0; i < n; ++i) {
            LossBreakdown b;
            b.l1    = h.at("l1").at(i).get<double>();
            b.dssim = h.at("dssim").at(i).get<double>();
            b.base  = h.at("base").at(i).get<double>();
            b.mss   = h.at("mss").at(i).get<double>();
            b.size  = h.at("size").at(i).get<double>();
            b.total = h.at("total").at(i).get<double>();
            r.history.push_back(b);
        }
        r.gaussian_count = h.at("gaussians").get<std::vector<int>>();
        for (const auto &e : j.at("events")) {
            r.events.push_back({e.at("iteration").get<int>(), e.at("cloned").get<int>(), e.at("split").get<int>(),
                                e.at("pruned").get<int>(), e.at("count").get<int>()});
        }
        r.train_metrics = summary_from_json(j.at("metrics").at("train"));
        r.test_metrics  = summary_from_json(j.at("metrics").at("test"));
        return r;
    } catch (const json::exception &e) {
        throw FormatError(std::string("report.json: ") + e.what());
    }
}

void save_checkpoint(const fs::path &dir, const Checkpoint &ck) {
    fs::create_directories(dir);
    save_gaussians_ply(dir / kPlyFile, ck.gaussians);
    write_file_atomically(dir / kConfigFile, config_to_text(ck.config));
    write_file_atomically(dir / kOptimizerFile, encode_optimizer(ck.adam));
    write_file_atomically(dir / kReportFile, report_to_json(ck.report));
}

Checkpoint load_checkpoint(const fs::path &dir) {
    if (!fs::is_directory(dir)) throw InvalidInput("checkpoint directory " + dir.string() + " does not exist");
    for (const char *name : {kPlyFile, kConfigFile, kOptimizerFile, kReportFile}) {
        if (!fs::exists(dir / name)) throw InvalidInput("checkpoint is missing " + (dir / name).string());
    }
    Checkpoint ck;
    ck.config    = config_from_text(read_file(dir / kConfigFile));
    ck.report    = report_from_json(read_file(dir / kReportFile));
    ck.adam      = decode_optimizer(read_file(dir / kOptimizerFile));
    ck.gaussians = load_gaussians_ply(dir / kPlyFile, ck.config.sh_degree);
    if (!ck.adam.m.empty() && ck.adam.m.size() != ck.gaussians.size()) {
        throw FormatError("optimizer.bin holds moments for " + std::to_string(ck.adam.m.size()) + " Gaussians, the PLY has " +
                          std::to_string(ck.gaussians.size()));
    }
    return ck;
}

} // namespace prismgs
