#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "qris/imaging.hpp"

namespace qris {

/// Decodes PNG (8-bit gray, gray+alpha, RGB or RGBA) or binary PGM bytes to
/// luminance. Colour uses round(0.299R + 0.587G + 0.114B); transparent
/// pixels are composited over white. Throws MalformedImage.
GrayImage decode_image(std::string_view bytes);
GrayImage read_image(const std::filesystem::path& path);

std::string encode_png(const GrayImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);

}  // namespace qris
