#include "qris/image_io.hpp"

#include <cmath>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "qris/error.hpp"
#include "qris/file_io.hpp"

namespace qris {

namespace {

bool has_signature(std::string_view bytes) {
    static constexpr std::string_view png = "\x89PNG\r\n\x1a\n";
    return bytes.substr(0, png.size()) == png || bytes.substr(0, 2) == "P5";
}

std::uint8_t luma(int r, int g, int b) {
    return static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
}

}  // namespace

GrayImage decode_image(std::string_view bytes) {
    if (!has_signature(bytes)) throw Error(ErrorCode::MalformedImage, "not a PNG or binary PGM image");
    const std::vector<std::uint8_t> buf(bytes.begin(), bytes.end());
    cv::Mat mat;
    try {
        mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        mat.release();
    }
    if (mat.empty()) throw Error(ErrorCode::MalformedImage, "image data could not be decoded");
    if (mat.depth() != CV_8U) throw Error(ErrorCode::MalformedImage, "only 8-bit images are supported");

    const int channels = mat.channels();
    if (channels != 1 && channels != 2 && channels != 3 && channels != 4) {
        throw Error(ErrorCode::MalformedImage, "unsupported channel count");
    }
    GrayImage out(mat.cols, mat.rows);
    for (int y = 0; y < mat.rows; ++y) {
        const std::uint8_t* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            const std::uint8_t* px = row + static_cast<std::ptrdiff_t>(x) * channels;
            double value = 0.0;
            int alpha = 255;
            if (channels <= 2) {
                value = px[0];
                if (channels == 2) alpha = px[1];
            } else {
                value = luma(px[2], px[1], px[0]);  // OpenCV stores BGR
                if (channels == 4) alpha = px[3];
            }
            if (alpha != 255) value = std::lround((value * alpha + 255.0 * (255 - alpha)) / 255.0);
            out.set(x, y, static_cast<std::uint8_t>(value));
        }
    }
    return out;
}

GrayImage read_image(const std::filesystem::path& path) {
    return decode_image(read_file(path));
}

std::string encode_png(const GrayImage& image) {
    if (image.empty()) throw Error(ErrorCode::InvalidArgument, "cannot encode an empty image");
    const cv::Mat mat(image.height(), image.width(), CV_8UC1, const_cast<std::uint8_t*>(image.pixels().data()));
    std::vector<std::uint8_t> out;
    cv::imencode(".png", mat, out);
    return std::string(out.begin(), out.end());
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
    write_file_atomic(path, encode_png(image));
}

}  // namespace qris
