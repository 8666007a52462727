// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/scene_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace prismgs {

namespace fs = std::filesystem;

std::vector<Camera> SceneDataset::train_cameras() const {
    std::vector<Camera> out;
    std::copy_if(cameras.begin(), cameras.end(), std::back_inserter(out),
                 [](const Camera &c) { return c.split == Split::Train; });
    return out;
}

std::vector<Camera> SceneDataset::test_cameras() const {
    std::vector<Camera> out;
    std::copy_if(cameras.begin(), cameras.end(), std::back_inserter(out),
                 [](const Camera &c) { return c.split == Split::Test; });
    return out;
}

std::size_t SceneDataset::index_of(int camera_id) const {
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        if (cameras[i].id == camera_id) return i;
    }
    throw InvalidInput("no camera with id " + std::to_string(camera_id));
}

namespace {

std::vector<std::string> split_whitespace(const std::string &line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

template <typename T> T parse_number(const std::string &tok, int line, const char *field) {
    T value{};
    const char *begin = tok.data();
    const char *end   = tok.data() + tok.size();
    if (!tok.empty() && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw FormatError(std::string("cannot parse ") + field + " from '" + tok + "'", line);
    }
    return value;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::ifstream open_input(const fs::path &path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw InvalidInput("cannot open " + path.string());
    return in;
}

// Writes through a temporary sibling and renames, so readers never observe a
// partially written file.
template <typename Fn> void write_atomically(const fs::path &path, std::ios::openmode mode, Fn &&fn) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, mode | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write " + tmp.string());
        fn(out);
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// ---- PLY -------------------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType ply_type(const std::string &name, int line) {
    static const std::map<std::string, PlyType> types = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    auto it = types.find(name);
    if (it == types.end()) throw FormatError("unknown PLY property type '" + name + "'", line);
    return it->second;
}

std::size_t ply_size(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

template <typename T> T read_le(const unsigned char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double decode(PlyType t, const unsigned char *p) {
    switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
    }
    return 0;
}

// Vertex element of a PLY file, column-major by property.
struct PlyVertices {
    std::size_t count = 0;
    std::vector<std::string> names;
    std::vector<PlyType> types;
    std::vector<std::vector<double>> columns;

    int find(const std::string &name) const {
        auto it = std::find(names.begin(), names.end(), name);
        return it == names.end() ? -1 : static_cast<int>(it - names.begin());
    }
};

PlyVertices read_ply_vertices(const fs::path &path) {
    std::ifstream in = open_input(path, std::ios::in | std::ios::binary);
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next_line() || line != "ply") throw FormatError("missing 'ply' magic", 1);

    bool binary = false, have_format = false, in_vertex = false, vertex_seen = false;
    PlyVertices v;
    while (true) {
        if (!next_line()) throw FormatError("unexpected end of PLY header", line_no);
        const auto tok = split_whitespace(line);
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") break;
        if (tok[0] == "format") {
            if (tok.size() < 3) throw FormatError("malformed format line", line_no);
            if (tok[1] == "ascii") binary = false;
            else if (tok[1] == "binary_little_endian") binary = true;
            else throw FormatError("unsupported PLY format '" + tok[1] + "'", line_no);
            have_format = true;
        } else if (tok[0] == "element") {
            if (tok.size() < 3) throw FormatError("malformed element line", line_no);
            if (vertex_seen) {
                in_vertex = false; // elements after the vertex block are not read
                continue;
            }
            if (tok[1] != "vertex") throw FormatError("the vertex element must come first", line_no);
            v.count     = parse_number<std::size_t>(tok[2], line_no, "vertex count");
            in_vertex   = true;
            vertex_seen = true;
        } else if (tok[0] == "property") {
            if (!in_vertex) continue;
            if (tok.size() >= 2 && tok[1] == "list") throw FormatError("list properties on vertices are not supported", line_no);
            if (tok.size() < 3) throw FormatError("malformed property line", line_no);
            v.types.push_back(ply_type(tok[1], line_no));
            v.names.push_back(tok[2]);
        } else {
            throw FormatError("unexpected PLY header line '" + line + "'", line_no);
        }
    }
    if (!have_format) throw FormatError("PLY header has no format line", line_no);
    if (!vertex_seen) throw FormatError("PLY has no vertex element", line_no);

    const std::size_t props = v.names.size();
    v.columns.assign(props, std::vector<double>(v.count));
    if (binary) {
        std::size_t stride = 0;
        for (PlyType t : v.types) stride += ply_size(t);
        std::vector<unsigned char> buf(stride * v.count);
        in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError("truncated binary PLY body");
        for (std::size_t i = 0; i < v.count; ++i) {
            const unsigned char *p = buf.data() + i * stride;
            for (std::size_t k = 0; k < props; ++k) {
                v.columns[k][i] = decode(v.types[k], p);
                p += ply_size(v.types[k]);
            }
        }
    } else {
        for (std::size_t i = 0; i < v.count; ++i) {
            if (!next_line()) throw FormatError("truncated ASCII PLY body", line_no);
            const auto tok = split_whitespace(line);
            if (tok.size() < props) throw FormatError("too few values on vertex line", line_no);
            for (std::size_t k = 0; k < props; ++k) v.columns[k][i] = parse_number<double>(tok[k], line_no, "vertex value");
        }
    }
    return v;
}

void write_binary_float_ply(std::ostream &out, const std::vector<std::string> &names, std::size_t count,
                            const std::vector<float> &values) {
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n";
    for (const auto &n : names) out << "property float " << n << "\n";
    out << "end_header\n";
    out.write(reinterpret_cast<const char *>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

} // namespace

void write_file_atomically(const fs::path &path, const std::string &contents) {
    write_atomically(path, std::ios::out | std::ios::binary,
                     [&](std::ostream &out) { out.write(contents.data(), static_cast<std::streamsize>(contents.size())); });
}

std::string read_file(const fs::path &path) {
    std::ifstream in = open_input(path, std::ios::in | std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- cameras ---------------------------------------------------------------

std::vector<Camera> load_cameras(const fs::path &path) {
    std::ifstream in = open_input(path);
    std::vector<Camera> cameras;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tok = split_whitespace(line);
        if (tok.empty() || tok[0][0] == '#') continue;
        if (!header) {
            if (line != kCameraFileHeader) {
                throw FormatError(std::string("expected header '") + kCameraFileHeader + "'", line_no);
            }
            header = true;
            continue;
        }
        if (tok.size() != 20 && tok.size() != 21) {
            throw FormatError("expected 20 or 21 fields, found " + std::to_string(tok.size()), line_no);
        }
        Camera c;
        c.id     = parse_number<int>(tok[0], line_no, "id");
        c.fx     = parse_number<double>(tok[1], line_no, "fx");
        c.fy     = parse_number<double>(tok[2], line_no, "fy");
        c.cx     = parse_number<double>(tok[3], line_no, "cx");
        c.cy     = parse_number<double>(tok[4], line_no, "cy");
        c.width  = parse_number<int>(tok[5], line_no, "width");
        c.height = parse_number<int>(tok[6], line_no, "height");
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) c.rotation(r, k) = parse_number<double>(tok[7 + 3 * r + k], line_no, "rotation");
        for (int k = 0; k < 3; ++k) c.translation[k] = parse_number<double>(tok[16 + k], line_no, "translation");
        if (tok[19] == "train") c.split = Split::Train;
        else if (tok[19] == "test") c.split = Split::Test;
        else throw FormatError("split must be 'train' or 'test', found '" + tok[19] + "'", line_no);
        if (tok.size() == 21 && tok[20] != "-") c.image_path = tok[20];
        try {
            c.validate(1e-3);
        } catch (const ValidationError &e) {
            throw ValidationError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
        }
        cameras.push_back(std::move(c));
    }
    return cameras;
}

void write_cameras(const fs::path &path, std::span<const Camera> cameras) {
    write_atomically(path, std::ios::out, [&](std::ostream &out) {
        out << kCameraFileHeader << "\n";
        for (const Camera &c : cameras) {
            out << c.id << ' ' << format_double(c.fx) << ' ' << format_double(c.fy) << ' ' << format_double(c.cx) << ' '
                << format_double(c.cy) << ' ' << c.width << ' ' << c.height;
            for (int r = 0; r < 3; ++r)
                for (int k = 0; k < 3; ++k) out << ' ' << format_double(c.rotation(r, k));
            for (int k = 0; k < 3; ++k) out << ' ' << format_double(c.translation[k]);
            out << ' ' << (c.split == Split::Train ? "train" : "test") << ' '
                << (c.image_path.empty() ? std::string("-") : c.image_path) << "\n";
        }
    });
}

// ---- points ----------------------------------------------------------------

SparsePointCloud load_ply_points(const fs::path &path) {
    const PlyVertices v = read_ply_vertices(path);
    const int ix = v.find("x"), iy = v.find("y"), iz = v.find("z");
    if (ix < 0 || iy < 0 || iz < 0) throw FormatError("PLY vertices lack x/y/z properties");
    const int ir = v.find("red"), ig = v.find("green"), ib = v.find("blue");
    const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

    SparsePointCloud cloud;
    cloud.points.resize(v.count);
    for (std::size_t i = 0; i < v.count; ++i) {
        auto &p    = cloud.points[i];
        p.position = Vec3<double>(v.columns[ix][i], v.columns[iy][i], v.columns[iz][i]);
        if (!p.position.allFinite()) throw FormatError("non-finite point position at vertex " + std::to_string(i));
        if (has_color) {
            const int idx[3] = {ir, ig, ib};
            for (int c = 0; c < 3; ++c) {
                p.color[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v.columns[idx[c]][i]), 0L, 255L));
            }
        }
    }
    return cloud;
}

void write_ply_points(const fs::path &path, const SparsePointCloud &cloud, bool binary) {
    write_atomically(path, std::ios::out | std::ios::binary, [&](std::ostream &out) {
        out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\nelement vertex "
            << cloud.size() << "\nproperty double x\nproperty double y\nproperty double z\n"
            << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        for (const auto &p : cloud.points) {
            if (binary) {
                out.write(reinterpret_cast<const char *>(p.position.data()), 3 * sizeof(double));
                out.write(reinterpret_cast<const char *>(p.color.data()), 3);
            } else {
                out << format_double(p.position.x()) << ' ' << format_double(p.position.y()) << ' '
                    << format_double(p.position.z()) << ' ' << int(p.color[0]) << ' ' << int(p.color[1]) << ' '
                    << int(p.color[2]) << "\n";
            }
        }
    });
}

// ---- Gaussians -------------------------------------------------------------

void save_gaussians_ply(const fs::path &path, std::span<const GaussianPrimitive<float>> gaussians) {
    const int degree = gaussians.empty() ? 0 : gaussians.front().sh_degree();
    for (const auto &g : gaussians) {
        if (g.sh_degree() != degree) throw InvalidInput("save_gaussians_ply: mixed SH degrees");
    }
    const int rest = sh_basis_count(degree) - 1;

    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 3 * rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.insert(names.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});

    std::vector<float> values;
    values.reserve(names.size() * gaussians.size());
    for (const auto &g : gaussians) {
        values.insert(values.end(), {g.position.x(), g.position.y(), g.position.z(), 0.f, 0.f, 0.f});
        for (int c = 0; c < 3; ++c) values.push_back(g.sh(0, c));
        // Channel-major rest coefficients, matching the reference exporter.
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k <= rest; ++k) values.push_back(g.sh(k, c));
        values.push_back(g.opacity_logit);
        for (int k = 0; k < 3; ++k) values.push_back(g.log_scale[k]);
        for (int k = 0; k < 4; ++k) values.push_back(g.rotation[k]);
    }
    write_atomically(path, std::ios::out | std::ios::binary,
                     [&](std::ostream &out) { write_binary_float_ply(out, names, gaussians.size(), values); });
}

std::vector<GaussianPrimitive<float>> load_gaussians_ply(const fs::path &path, int expected_sh_degree) {
    const PlyVertices v = read_ply_vertices(path);
    auto require = [&](const std::string &name) {
        const int i = v.find(name);
        if (i < 0) throw FormatError("Gaussian PLY lacks property '" + name + "'");
        return i;
    };
    int rest_count = 0;
    while (v.find("f_rest_" + std::to_string(rest_count)) >= 0) ++rest_count;
    if (rest_count % 3 != 0 || sh_degree_for_count(rest_count / 3 + 1) < 0) {
        throw FormatError("Gaussian PLY has " + std::to_string(rest_count) +
                          " f_rest properties, which matches no SH degree");
    }
    const int degree = sh_degree_for_count(rest_count / 3 + 1);
    if (expected_sh_degree >= 0 && degree != expected_sh_degree) {
        throw FormatError("Gaussian PLY has SH degree " + std::to_string(degree) + ", expected " +
                          std::to_string(expected_sh_degree));
    }
    const int rest = rest_count / 3;
    const int ix = require("x"), iy = require("y"), iz = require("z"), iop = require("opacity");
    int idc[3], isc[3], irot[4], irest0 = rest_count > 0 ? require("f_rest_0") : -1;
    for (int k = 0; k < 3; ++k) idc[k] = require("f_dc_" + std::to_string(k));
    for (int k = 0; k < 3; ++k) isc[k] = require("scale_" + std::to_string(k));
    for (int k = 0; k < 4; ++k) irot[k] = require("rot_" + std::to_string(k));
    (void)irest0;

    std::vector<int> irest(rest_count);
    for (int i = 0; i < rest_count; ++i) irest[i] = v.find("f_rest_" + std::to_string(i));

    std::vector<GaussianPrimitive<float>> out(v.count);
    for (std::size_t i = 0; i < v.count; ++i) {
        auto &g = out[i];
        auto col = [&](int k) { return static_cast<float>(v.columns[k][i]); };
        g.position = Vec3<float>(col(ix), col(iy), col(iz));
        g.sh       = ShCoeffs<float>::Zero(sh_basis_count(degree), 3);
        for (int c = 0; c < 3; ++c) g.sh(0, c) = col(idc[c]);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k <= rest; ++k) g.sh(k, c) = col(irest[c * rest + (k - 1)]);
        g.opacity_logit = col(iop);
        for (int k = 0; k < 3; ++k) g.log_scale[k] = col(isc[k]);
        for (int k = 0; k < 4; ++k) g.rotation[k] = col(irot[k]);
    }
    return out;
}

// ---- dataset directory -----------------------------------------------------

SceneDataset load_dataset(const fs::path &dir, bool load_images) {
    if (!fs::is_directory(dir)) throw InvalidInput("scene directory " + dir.string() + " does not exist");
    SceneDataset ds;
    ds.cameras = load_cameras(dir / kCamerasFile);
    ds.points  = load_ply_points(dir / kPointsFile);
    if (load_images) {
        ds.images.reserve(ds.cameras.size());
        for (const Camera &c : ds.cameras) {
            if (c.image_path.empty()) throw InvalidInput("camera " + std::to_string(c.id) + " has no image_path");
            ImageBuffer<float> img = read_png((dir / c.image_path).string());
            if (img.width != c.width || img.height != c.height) {
                throw ValidationError("image for camera " + std::to_string(c.id) + " is " + std::to_string(img.width) +
                                      "x" + std::to_string(img.height) + ", camera expects " +
                                      std::to_string(c.width) + "x" + std::to_string(c.height));
            }
            ds.images.push_back(std::move(img));
        }
    }
    return ds;
}

void save_dataset(const fs::path &dir, const SceneDataset &dataset) {
    fs::create_directories(dir);
    write_cameras(dir / kCamerasFile, dataset.cameras);
    write_ply_points(dir / kPointsFile, dataset.points);
    if (dataset.has_images()) {
        for (std::size_t i = 0; i < dataset.cameras.size(); ++i) {
            const Camera &c = dataset.cameras[i];
            if (c.image_path.empty()) continue;
            const fs::path p = dir / c.image_path;
            fs::create_directories(p.parent_path());
            write_png(p.string(), dataset.images[i]);
        }
    }
}

} // namespace prismgs
