#include "synthvit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "synthvit/errors.hpp"

namespace synthvit {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
    FileHandle file(std::fopen(path.c_str(), "rb"));
    if (!file) throw ImageFormatError("cannot open image '" + path + "'");

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw ImageFormatError("'" + path + "' is not a PNG file");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) throw ImageFormatError("png reader init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageFormatError("png reader init failed for '" + path + "'");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError("failed to decode PNG '" + path + "'");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageFormatError("'" + path + "' is 16-bit; only 8-bit PNGs are supported");
    }
    // Normalize every supported layout to 8-bit RGB.
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.assign(stride * height, 0);
    row_ptrs.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out({height, width, 3});
    double* od = out.data();
    for (png_uint_32 y = 0; y < height; ++y) {
        const unsigned char* row = pixels.data() + y * stride;
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                od[(y * width + x) * 3 + c] = static_cast<double>(row[x * 3 + c]) / 255.0;
            }
        }
    }
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    const auto& s = image.shape();
    if (s.size() != 3 || (s[2] != 1 && s[2] != 3)) {
        throw DimensionError("write_png: expects [H,W,1] or [H,W,3], got " + shape_str(s));
    }
    const std::size_t height = s[0], width = s[1], channels = s[2];

    std::vector<unsigned char> pixels(height * width * channels);
    const double* id = image.data();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::clamp(id[i], 0.0, 1.0);
        pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }

    FileHandle file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write image '" + path + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr) throw IoError("png writer init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png writer init failed for '" + path + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG '" + path + "'");
    }
    png_init_io(png, file.get());
    // Pin the encoder settings so identical pixels produce identical bytes.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) rows[y] = pixels.data() + y * width * channels;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor resize_bilinear(const Tensor& image, std::size_t size) {
    const auto& s = image.shape();
    if (s.size() != 3) throw DimensionError("resize_bilinear: expects [H,W,C], got " + shape_str(s));
    const std::size_t h = s[0], w = s[1], c = s[2];
    if (h == size && w == size) return image;

    Tensor out({size, size, c});
    double* od = out.data();
    const double* id = image.data();
    const double sy = static_cast<double>(h) / static_cast<double>(size);
    const double sx = static_cast<double>(w) / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
        const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const double fy = std::clamp(src_y, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < size; ++x) {
            const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const double fx = std::clamp(src_x, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v00 = id[(y0 * w + x0) * c + ch];
                const double v01 = id[(y0 * w + x1) * c + ch];
                const double v10 = id[(y1 * w + x0) * c + ch];
                const double v11 = id[(y1 * w + x1) * c + ch];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                od[(y * size + x) * c + ch] = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

Tensor load_image(const std::string& path, std::size_t target_size) {
    return resize_bilinear(read_png(path), target_size);
}

Tensor to_diffusion_range(const Tensor& image) {
    Tensor out(image.shape());
    const double* id = image.data();
    double* od = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) od[i] = id[i] * 2.0 - 1.0;
    return out;
}

Tensor from_diffusion_range(const Tensor& image) {
    Tensor out(image.shape());
    const double* id = image.data();
    double* od = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) od[i] = (id[i] + 1.0) * 0.5;
    return out;
}

}  // namespace synthvit
