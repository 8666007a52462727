// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/trainer.hpp"

#include <array>
#include <charconv>
#include <map>
#include <sstream>

namespace prismgs {

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.profile                = "paper";
    c.iterations             = 60000;
    c.densify_until_iter     = 30000;
    c.opacity_reset_interval = 3000;
    return c;
}

TrainConfig TrainConfig::for_profile(const std::string &name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string &msg) { throw ConfigError(msg); };
    if (!(lambda_dssim >= 0 && lambda_dssim <= 1)) fail("lambda_dssim must lie in [0, 1]");
    if (!(lambda_mss >= 0)) fail("lambda_mss must be >= 0");
    if (!(lambda_size >= 0)) fail("lambda_size must be >= 0");
    if (pyramid_levels < 1) fail("pyramid_levels must be >= 1");
    if (!(pyramid_sigma > 0)) fail("pyramid_sigma must be > 0");
    if (tau_size && !(*tau_size > 0)) fail("tau_size must be > 0");
    if (!(nyquist_factor > 0)) fail("nyquist_factor must be > 0");
    if (iterations < 0) fail("iterations must be >= 0");
    if (densify_interval < 1) fail("densify_interval must be >= 1");
    if (opacity_reset_interval < 0) fail("opacity_reset_interval must be >= 0");
    if (!(densify_grad_threshold > 0)) fail("densify_grad_threshold must be > 0");
    if (!(prune_opacity_threshold >= 0 && prune_opacity_threshold < 1)) fail("prune_opacity_threshold must lie in [0, 1)");
    if (max_gaussians < 1) fail("max_gaussians must be >= 1");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) fail("sh_degree must lie in [0, 3]");
    if (sh_increase_interval < 1) fail("sh_increase_interval must be >= 1");
    if (grid_x < 1 || grid_y < 1) fail("grid dimensions must be >= 1");
    if (!(block_margin >= 0)) fail("block_margin must be >= 0");
    const std::array<double, 6> rates = {lr.position_init, lr.position_final, lr.log_scale,
                                         lr.rotation,      lr.opacity,        lr.sh_dc};
    for (double r : rates) {
        if (!(r >= 0)) fail("learning rates must be >= 0");
    }
    if (!(lr.sh_rest >= 0)) fail("learning rates must be >= 0");
}

namespace {

std::string fmt(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

template <typename T> T parse(const std::string &key, const std::string &value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string &key, const std::string &value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("config key '" + key + "': expected true or false, found '" + value + "'");
}

std::string unquote(const std::string &key, const std::string &value) {
    if (value.size() < 2 || value.front() != '"' || value.back() != '"') {
        throw ConfigError("config key '" + key + "': expected a quoted string");
    }
    return value.substr(1, value.size() - 2);
}

} // namespace

std::string config_to_text(const TrainConfig &c) {
    std::ostringstream out;
    out << "format_version = " << kCheckpointVersion << "\n";
    out << "profile = \"" << c.profile << "\"\n";
    out << "lambda_dssim = " << fmt(c.lambda_dssim) << "\n";
    out << "lambda_mss = " << fmt(c.lambda_mss) << "\n";
    out << "lambda_size = " << fmt(c.lambda_size) << "\n";
    out << "pyramid_levels = " << c.pyramid_levels << "\n";
    out << "pyramid_sigma = " << fmt(c.pyramid_sigma) << "\n";
    if (c.tau_size) out << "tau_size = " << fmt(*c.tau_size) << "\n";
    out << "nyquist_factor = " << fmt(c.nyquist_factor) << "\n";
    out << "normalize_size_loss = " << (c.normalize_size_loss ? "true" : "false") << "\n";
    out << "iterations = " << c.iterations << "\n";
    out << "lr_position_init = " << fmt(c.lr.position_init) << "\n";
    out << "lr_position_final = " << fmt(c.lr.position_final) << "\n";
    out << "lr_log_scale = " << fmt(c.lr.log_scale) << "\n";
    out << "lr_rotation = " << fmt(c.lr.rotation) << "\n";
    out << "lr_opacity = " << fmt(c.lr.opacity) << "\n";
    out << "lr_sh_dc = " << fmt(c.lr.sh_dc) << "\n";
    out << "lr_sh_rest = " << fmt(c.lr.sh_rest) << "\n";
    out << "densify_grad_threshold = " << fmt(c.densify_grad_threshold) << "\n";
    out << "densify_from_iter = " << c.densify_from_iter << "\n";
    out << "densify_interval = " << c.densify_interval << "\n";
    out << "densify_until_iter = " << c.densify_until_iter << "\n";
    out << "opacity_reset_interval = " << c.opacity_reset_interval << "\n";
    out << "prune_opacity_threshold = " << fmt(c.prune_opacity_threshold) << "\n";
    out << "max_gaussians = " << c.max_gaussians << "\n";
    out << "sh_degree = " << c.sh_degree << "\n";
    out << "sh_increase_interval = " << c.sh_increase_interval << "\n";
    out << "grid_x = " << c.grid_x << "\n";
    out << "grid_y = " << c.grid_y << "\n";
    out << "block_margin = " << fmt(c.block_margin) << "\n";
    out << "seed = " << c.seed << "\n";
    out << "deterministic = " << (c.deterministic ? "true" : "false") << "\n";
    out << "substrate_objective = " << (c.substrate_objective ? "true" : "false") << "\n";
    return out.str();
}

TrainConfig config_from_text(const std::string &text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config line lacks '='", line_no);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
            throw FormatError("duplicate config key '" + key + "'", line_no);
        }
    }
    const auto version = kv.find("format_version");
    if (version == kv.end()) throw FormatError("config lacks format_version");
    if (parse<int>("format_version", version->second) != kCheckpointVersion) {
        throw VersionMismatch("config format_version " + version->second + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    kv.erase(version);

    TrainConfig c;
    for (const auto &[key, value] : kv) {
        if (key == "profile") c.profile = unquote(key, value);
        else if (key == "lambda_dssim") c.lambda_dssim = parse<double>(key, value);
        else if (key == "lambda_mss") c.lambda_mss = parse<double>(key, value);
        else if (key == "lambda_size") c.lambda_size = parse<double>(key, value);
        else if (key == "pyramid_levels") c.pyramid_levels = parse<int>(key, value);
        else if (key == "pyramid_sigma") c.pyramid_sigma = parse<double>(key, value);
        else if (key == "tau_size") c.tau_size = parse<double>(key, value);
        else if (key == "nyquist_factor") c.nyquist_factor = parse<double>(key, value);
        else if (key == "normalize_size_loss") c.normalize_size_loss = parse_bool(key, value);
        else if (key == "iterations") c.iterations = parse<int>(key, value);
        else if (key == "lr_position_init") c.lr.position_init = parse<double>(key, value);
        else if (key == "lr_position_final") c.lr.position_final = parse<double>(key, value);
        else if (key == "lr_log_scale") c.lr.log_scale = parse<double>(key, value);
        else if (key == "lr_rotation") c.lr.rotation = parse<double>(key, value);
        else if (key == "lr_opacity") c.lr.opacity = parse<double>(key, value);
        else if (key == "lr_sh_dc") c.lr.sh_dc = parse<double>(key, value);
        else if (key == "lr_sh_rest") c.lr.sh_rest = parse<double>(key, value);
        else if (key == "densify_grad_threshold") c.densify_grad_threshold = parse<double>(key, value);
        else if (key == "densify_from_iter") c.densify_from_iter = parse<int>(key, value);
        else if (key == "densify_interval") c.densify_interval = parse<int>(key, value);
        else if (key == "densify_until_iter") c.densify_until_iter = parse<int>(key, value);
        else if (key == "opacity_reset_interval") c.opacity_reset_interval = parse<int>(key, value);
        else if (key == "prune_opacity_threshold") c.prune_opacity_threshold = parse<double>(key, value);
        else if (key == "max_gaussians") c.max_gaussians = parse<int>(key, value);
        else if (key == "sh_degree") c.sh_degree = parse<int>(key, value);
        else if (key == "sh_increase_interval") c.sh_increase_interval = parse<int>(key, value);
        else if (key == "grid_x") c.grid_x = parse<int>(key, value);
        else if (key == "grid_y") c.grid_y = parse<int>(key, value);
        else if (key == "block_margin") c.block_margin = parse<double>(key, value);
        else if (key == "seed") c.seed = parse<std::uint64_t>(key, value);
        else if (key == "deterministic") c.deterministic = parse_bool(key, value);
        else if (key == "substrate_objective") c.substrate_objective = parse_bool(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

} // namespace prismgs
