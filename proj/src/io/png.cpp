#include "dynsplat/io/png.hpp"

#include "dynsplat/core/types.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace dynsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

/// Decoded 8- or 16-bit image with `channels` samples per pixel.
struct Decoded {
    int width = 0, height = 0, channels = 0, bit_depth = 8;
    std::vector<std::uint8_t> bytes;
};

enum class Want { Rgb8, Gray16, Gray8 };

Decoded decode(const std::filesystem::path& path, Want want) {
    FilePtr file = open_file(path, "rb");
    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError("'" + path.string() + "' is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    Decoded out;
    std::vector<png_bytep> rows;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw IoError("failed to decode '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (want == Want::Rgb8) {
        if (depth == 16) png_set_strip_16(png);
        if (is_gray) png_set_gray_to_rgb(png);
    } else {
        if (!is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        if (want == Want::Gray8 && depth == 16) png_set_strip_16(png);
        if (want == Want::Gray16 && depth != 16) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw IoError("'" + path.string() + "' is not a 16-bit depth PNG");
        }
        if (want == Want::Gray16) png_set_swap(png); // host little-endian samples
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.bytes.resize(stride * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.bytes.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
            const std::vector<std::uint8_t>& bytes, std::size_t stride) {
    if (width <= 0 || height <= 0) throw IoError("cannot write an empty image to '" + path.string() + "'");
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw IoError("failed to encode '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data() + stride * static_cast<std::size_t>(y));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("failed to write '" + path.string() + "'");
}

} // namespace

std::uint8_t byte_from_unit(float v) {
    const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::uint16_t code_from_depth(double depth, double scale) {
    if (!(scale > 0.0)) throw ConfigError("depth scale must be positive");
    const double c = std::round((std::isfinite(depth) ? depth : 0.0) / scale);
    return static_cast<std::uint16_t>(std::clamp(c, 0.0, 65535.0));
}

Image read_png_rgb(const std::filesystem::path& path) {
    const Decoded d = decode(path, Want::Rgb8);
    Image img(d.width, d.height, 3);
    for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = unit_from_byte(d.bytes[k]);
    return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 3) throw ConfigError("color PNG needs a 3-channel image");
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t k = 0; k < bytes.size(); ++k) bytes[k] = byte_from_unit(image.data[k]);
    encode(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, bytes, static_cast<std::size_t>(image.width) * 3);
}

Raster<float> read_png_depth(const std::filesystem::path& path, double scale) {
    if (!(scale > 0.0)) throw ConfigError("depth scale must be positive");
    const Decoded d = decode(path, Want::Gray16);
    Raster<float> out(d.width, d.height, 1);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        const auto code = static_cast<std::uint16_t>(d.bytes[2 * k] | (d.bytes[2 * k + 1] << 8));
        out.data[k] = depth_from_code(code, scale);
    }
    return out;
}

void write_png_depth(const std::filesystem::path& path, const Raster<float>& depth, double scale) {
    if (depth.channels != 1) throw ConfigError("depth PNG needs a single-channel raster");
    std::vector<std::uint8_t> bytes(depth.data.size() * 2);
    for (std::size_t k = 0; k < depth.data.size(); ++k) {
        const std::uint16_t c = code_from_depth(depth.data[k], scale);
        bytes[2 * k] = static_cast<std::uint8_t>(c & 0xff);
        bytes[2 * k + 1] = static_cast<std::uint8_t>(c >> 8);
    }
    encode(path, depth.width, depth.height, PNG_COLOR_TYPE_GRAY, 16, bytes, static_cast<std::size_t>(depth.width) * 2);
}

Raster<std::uint8_t> read_png_mask(const std::filesystem::path& path) {
    const Decoded d = decode(path, Want::Gray8);
    Raster<std::uint8_t> out(d.width, d.height, 1);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = d.bytes[k] != 0 ? 1 : 0;
    return out;
}

void write_png_mask(const std::filesystem::path& path, const Raster<std::uint8_t>& mask) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (std::size_t k = 0; k < bytes.size(); ++k) bytes[k] = mask.data[k] ? 255 : 0;
    encode(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, bytes, static_cast<std::size_t>(mask.width));
}

} // namespace dynsplat
