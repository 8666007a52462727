// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prismgs/common.hpp"

#include <Eigen/Core>

#include <string>

namespace prismgs {

/// Interleaved RGB image, row-major, index (y * width + x) * 3 + channel.
/// The flat Eigen array keeps per-pixel arithmetic expression-friendly.
template <typename Scalar> struct ImageBuffer {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    int width  = 0;
    int height = 0;
    Array data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, Scalar fill = Scalar(0)) : width(w), height(h), data(Array::Constant(Eigen::Index(w) * h * 3, fill)) {}
    ImageBuffer(int w, int h, Array values) : width(w), height(h), data(std::move(values)) {}

    Eigen::Index pixel_count() const { return Eigen::Index(width) * height; }
    Eigen::Index size() const { return data.size(); }

    Scalar &operator()(int x, int y, int c) { return data[(Eigen::Index(y) * width + x) * 3 + c]; }
    Scalar operator()(int x, int y, int c) const { return data[(Eigen::Index(y) * width + x) * 3 + c]; }

    bool same_shape(const ImageBuffer &o) const { return width == o.width && height == o.height; }

    template <typename To> ImageBuffer<To> cast() const { return ImageBuffer<To>(width, height, data.template cast<To>()); }

    bool operator==(const ImageBuffer &o) const { return same_shape(o) && (data == o.data).all(); }
};

template <typename Scalar>
void require_same_shape(const ImageBuffer<Scalar> &a, const ImageBuffer<Scalar> &b, const char *what) {
    if (!a.same_shape(b)) {
        throw ContractViolation(std::string(what) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
    }
}

/// Rounds to the nearest 8-bit level, as an image written to PNG and read back.
template <typename Scalar> ImageBuffer<Scalar> quantize8(const ImageBuffer<Scalar> &img) {
    ImageBuffer<Scalar> out = img;
    out.data = (img.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)) * Scalar(255)).round() / Scalar(255);
    return out;
}

/// Reads an 8-bit PNG (gray, RGB or RGBA) into floats in [0, 1] via /255.
ImageBuffer<float> read_png(const std::string &path);

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::string &path, const ImageBuffer<float> &img);

} // namespace prismgs
