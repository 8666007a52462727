// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#include "prismgs/image.hpp"

#include <png.h>

#include <cmath>
#include <filesystem>
#include <vector>

namespace prismgs {

ImageBuffer<float> read_png(const std::string &path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw InvalidInput("cannot read PNG " + path + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError("cannot decode PNG " + path + ": " + image.message);
    }
    ImageBuffer<float> out(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[static_cast<Eigen::Index>(i)] = buf[i] / 255.0f;
    return out;
}

void write_png(const std::string &path, const ImageBuffer<float> &img) {
    std::vector<png_byte> buf(static_cast<std::size_t>(img.size()));
    for (Eigen::Index i = 0; i < img.size(); ++i) {
        const float v = std::fmin(1.0f, std::fmax(0.0f, img.data[i]));
        buf[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width   = static_cast<png_uint_32>(img.width);
    image.height  = static_cast<png_uint_32>(img.height);
    image.format  = PNG_FORMAT_RGB;
    const std::string tmp = path + ".tmp";
    if (!png_image_write_to_file(&image, tmp.c_str(), 0, buf.data(), 0, nullptr)) {
        throw Error("cannot write PNG " + path + ": " + image.message);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace prismgs
