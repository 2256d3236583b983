#pragma once

#include "sgs/errors.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace sgs {

// Dense row-major image, double precision, C channels interleaved.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    void require_same_shape(const Image& o) const {
        if (!same_shape(o)) throw ShapeMismatch();
    }

    void clamp01() {
        for (double& v : data) v = std::clamp(v, 0.0, 1.0);
    }
};

} // namespace sgs
