#pragma once

#include <cstddef>
#include <vector>

namespace dynsplat {

/// Row-major H x W x C raster.
template <typename T> struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Raster() = default;
    Raster(int w, int h, int c, T fill = T(0))
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(int w, int h) const { return width == w && height == h; }

    template <typename U> Raster<U> cast() const {
        Raster<U> out;
        out.width = width;
        out.height = height;
        out.channels = channels;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

using Image = Raster<float>;

} // namespace dynsplat
