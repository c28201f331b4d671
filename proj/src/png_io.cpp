#include "strokegan/png_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace strokegan {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_gray_png(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
    if (width <= 0 || height <= 0 ||
        pixels.size() != static_cast<std::size_t>(width) * height) {
        throw ContractError("write_gray_png: pixel buffer does not match dimensions");
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failure: " + path);
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 6); // fixed settings keep output deterministic
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(&pixels[static_cast<std::size_t>(y) * width]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_gray_png(const std::string& path, int& width, int& height) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    // Normalize any input format to 8-bit gray.
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, &pixels[static_cast<std::size_t>(y) * width], nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pixels;
}

void save_glyph_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.shape()[2] != 3) {
        throw ContractError("save_glyph_png expects an (h,w,3) glyph image");
    }
    const int h = image.shape()[0], w = image.shape()[1];
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * w);
    auto data = image.data();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        double v = data[i * 3];
        long g = std::lround((v + 1.0) * 127.5);
        pixels[i] = static_cast<std::uint8_t>(std::min(255L, std::max(0L, g)));
    }
    write_gray_png(path, w, h, pixels);
}

Tensor load_glyph_png(const std::string& path) {
    int w = 0, h = 0;
    std::vector<std::uint8_t> pixels = read_gray_png(path, w, h);
    std::vector<double> data(pixels.size() * 3);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        double v = pixels[i] / 127.5 - 1.0;
        data[i * 3 + 0] = v;
        data[i * 3 + 1] = v;
        data[i * 3 + 2] = v;
    }
    return Tensor::from_data({h, w, 3}, std::move(data));
}

void save_glyph_grid_png(const std::string& path, const std::vector<Tensor>& images, int columns) {
    if (images.empty()) throw ContractError("save_glyph_grid_png: empty batch");
    if (columns < 1) throw ContractError("save_glyph_grid_png: need at least one column");
    const int h = images.front().shape()[0], w = images.front().shape()[1];
    const int rows = (static_cast<int>(images.size()) + columns - 1) / columns;
    const int pad = 2;
    const int out_w = columns * (w + pad) + pad;
    const int out_h = rows * (h + pad) + pad;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(out_w) * out_h, 128);
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
        const Tensor& img = images[idx];
        if (img.shape() != images.front().shape()) {
            throw ShapeError("save_glyph_grid_png: inconsistent image sizes");
        }
        int r = static_cast<int>(idx) / columns;
        int c = static_cast<int>(idx) % columns;
        auto data = img.data();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double v = data[(static_cast<std::size_t>(y) * w + x) * 3];
                long g = std::lround((v + 1.0) * 127.5);
                pixels[static_cast<std::size_t>(pad + r * (h + pad) + y) * out_w +
                       (pad + c * (w + pad) + x)] =
                    static_cast<std::uint8_t>(std::min(255L, std::max(0L, g)));
            }
        }
    }
    write_gray_png(path, out_w, out_h, pixels);
}

} // namespace strokegan
