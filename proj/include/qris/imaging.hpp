#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qris/qr_types.hpp"

namespace qris {

/// Row-major 8-bit luminance raster.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 255);
    GrayImage(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, std::uint8_t value) { data_[static_cast<std::size_t>(y) * width_ + x] = value; }

    std::span<const std::uint8_t> pixels() const noexcept { return data_; }
    std::span<std::uint8_t> pixels() noexcept { return data_; }

    bool operator==(const GrayImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

struct BinaryGrid {
    ModuleGrid cells;
    double module_size_px = 0.0;

    int side() const noexcept { return cells.side(); }
};

/// Luminance at or below which a pixel counts as dark in the scan and crop.
inline constexpr int kDarkThreshold = 189;

/// Dark modules become 0, light modules and the quiet zone 255.
GrayImage render(const ModuleGrid& grid, int module_px, int quiet_zone_modules);

/// Median 3x3, Gaussian 3x3, CLAHE (8x8 tiles, clip 2.0), then a global
/// threshold at 189 to {0, 255}.
GrayImage preprocess(const GrayImage& image);

/// Module size from the top-left finder: first dark pixel in row-major scan,
/// dark run length downward from it, ceil(run / 7).
double estimate_module_size(const GrayImage& image);

/// Crops to the dark bounding box, derives the side count from the module
/// size and marks each cell dark when its mean luminance is below 189.
BinaryGrid binarize_to_grid(const GrayImage& image);

struct PixelBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

/// Bounding box of pixels at or below kDarkThreshold; width 0 when none.
PixelBox dark_bounding_box(const GrayImage& image);

}  // namespace qris
