#ifndef STROKEGAN_PNG_IO_HPP
#define STROKEGAN_PNG_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "strokegan/tensor.hpp"

namespace strokegan {

// 8-bit grayscale PNG with fixed encoder settings (byte-deterministic).
void write_gray_png(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_gray_png(const std::string& path, int& width, int& height);

// Glyph tensor (h,w,3) in [-1,1] <-> 8-bit grayscale. The renderer quantizes
// to 8-bit levels, so save followed by load is bit exact.
void save_glyph_png(const std::string& path, const Tensor& image);
Tensor load_glyph_png(const std::string& path);

// Montage of equally sized glyphs arranged in a grid (sample sheets).
void save_glyph_grid_png(const std::string& path, const std::vector<Tensor>& images, int columns);

} // namespace strokegan

#endif
