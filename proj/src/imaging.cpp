#include "qris/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <optional>

#include <opencv2/imgproc.hpp>

#include "qris/error.hpp"

namespace qris {
namespace {

bool is_dark(std::uint8_t value) { return value <= kDarkThreshold; }

cv::Mat as_mat(const GrayImage& image) {
    // OpenCV only reads through this header; the const_cast never leads to a write.
    return cv::Mat(image.height(), image.width(), CV_8UC1,
                   const_cast<std::uint8_t*>(image.pixels().data()));
}

GrayImage from_mat(const cv::Mat& mat) {
    const cv::Mat contiguous = mat.isContinuous() ? mat : mat.clone();
    std::vector<std::uint8_t> data(contiguous.datastart, contiguous.dataend);
    return GrayImage(contiguous.cols, contiguous.rows, std::move(data));
}

void require_image(const GrayImage& image) {
    if (image.empty()) throw Error(ErrorCode::MalformedImage, "image is empty");
}

// Side count in modules for a dark extent, given the module size.
int side_count(int extent_px, double module_size) {
    return static_cast<int>(std::lround(extent_px / module_size));
}


// Contrast-limited adaptive histogram equalization over a tiles x tiles grid.
// Tiles are laid out on the image extended by reflect-101 to a multiple of
// the grid; each pixel blends the four neighbouring tile LUTs bilinearly.
cv::Mat equalize_tiles(const cv::Mat& src, double clip_limit, int tiles) {
    constexpr int kBins = 256;
    cv::Mat ext = src;
    if (src.cols % tiles != 0 || src.rows % tiles != 0) {
        cv::copyMakeBorder(src, ext, 0, tiles - src.rows % tiles, 0, tiles - src.cols % tiles,
                           cv::BORDER_REFLECT_101);
    }
    const int tile_w = ext.cols / tiles;
    const int tile_h = ext.rows / tiles;
    const int tile_area = tile_w * tile_h;
    const int clip = std::max(static_cast<int>(clip_limit * tile_area / kBins), 1);
    const float lut_scale = static_cast<float>(kBins - 1) / tile_area;

    // LUT entries are 8-bit values, stored as float for the blend.
    std::vector<float> luts(static_cast<std::size_t>(tiles) * tiles * kBins);
    for (int ty = 0; ty < tiles; ++ty) {
        for (int tx = 0; tx < tiles; ++tx) {
            // Four interleaved counters avoid serialising on repeated bins.
            std::array<std::array<int, kBins>, 4> partial{};
            for (int y = ty * tile_h; y < (ty + 1) * tile_h; ++y) {
                const std::uint8_t* row = ext.ptr<std::uint8_t>(y) + tx * tile_w;
                int x = 0;
                for (; x + 4 <= tile_w; x += 4) {
                    ++partial[0][row[x]];
                    ++partial[1][row[x + 1]];
                    ++partial[2][row[x + 2]];
                    ++partial[3][row[x + 3]];
                }
                for (; x < tile_w; ++x) ++partial[0][row[x]];
            }
            std::array<int, kBins> hist{};
            for (int i = 0; i < kBins; ++i) hist[i] = partial[0][i] + partial[1][i] + partial[2][i] + partial[3][i];
            int clipped = 0;
            for (int& h : hist) {
                if (h > clip) {
                    clipped += h - clip;
                    h = clip;
                }
            }
            const int batch = clipped / kBins;
            int residual = clipped - batch * kBins;
            for (int& h : hist) h += batch;
            if (residual != 0) {
                const int step = std::max(kBins / residual, 1);
                for (int i = 0; i < kBins && residual > 0; i += step, --residual) ++hist[i];
            }
            float* lut = luts.data() + (static_cast<std::size_t>(ty) * tiles + tx) * kBins;
            int sum = 0;
            for (int i = 0; i < kBins; ++i) {
                sum += hist[i];
                lut[i] = cv::saturate_cast<std::uint8_t>(sum * lut_scale);
            }
        }
    }

    std::vector<int> col_lo(static_cast<std::size_t>(src.cols));
    std::vector<int> col_hi(static_cast<std::size_t>(src.cols));
    std::vector<float> wx(static_cast<std::size_t>(src.cols));
    const float inv_tw = 1.0f / tile_w;
    for (int x = 0; x < src.cols; ++x) {
        const float txf = x * inv_tw - 0.5f;
        const int tx1 = cvFloor(txf);
        wx[x] = txf - tx1;
        col_lo[x] = std::max(tx1, 0) * kBins;
        col_hi[x] = std::min(tx1 + 1, tiles - 1) * kBins;
    }

    cv::Mat dst(src.size(), CV_8UC1);
    const float inv_th = 1.0f / tile_h;
    for (int y = 0; y < src.rows; ++y) {
        const float tyf = y * inv_th - 0.5f;
        const int ty1 = cvFloor(tyf);
        const float ya = tyf - ty1;
        const float ya1 = 1.0f - ya;
        const float* plane1 = luts.data() + static_cast<std::size_t>(std::max(ty1, 0)) * tiles * kBins;
        const float* plane2 = luts.data() + static_cast<std::size_t>(std::min(ty1 + 1, tiles - 1)) * tiles * kBins;
        const std::uint8_t* in = src.ptr<std::uint8_t>(y);
        std::uint8_t* out = dst.ptr<std::uint8_t>(y);
        for (int x = 0; x < src.cols; ++x) {
            const int v = in[x];
            const float xa = wx[x];
            const float xa1 = 1.0f - xa;
            const int i1 = col_lo[x] + v;
            const int i2 = col_hi[x] + v;
            const float res = (plane1[i1] * xa1 + plane1[i2] * xa) * ya1 + (plane2[i1] * xa1 + plane2[i2] * xa) * ya;
            out[x] = cv::saturate_cast<std::uint8_t>(res);
        }
    }
    return dst;
}

}  // namespace

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0 || data_.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::InvalidArgument, "image dimensions do not match pixel data");
    }
}

GrayImage render(const ModuleGrid& grid, int module_px, int quiet_zone_modules) {
    if (module_px < 1) throw Error(ErrorCode::InvalidArgument, "module_px must be >= 1");
    if (quiet_zone_modules < 0) throw Error(ErrorCode::InvalidArgument, "quiet zone must be >= 0");
    const int extent = (grid.side() + 2 * quiet_zone_modules) * module_px;
    GrayImage image(extent, extent, 255);
    const int offset = quiet_zone_modules * module_px;
    for (int row = 0; row < grid.side(); ++row) {
        for (int col = 0; col < grid.side(); ++col) {
            if (!grid.at(row, col)) continue;
            for (int dy = 0; dy < module_px; ++dy) {
                auto line = image.pixels().subspan(
                    static_cast<std::size_t>(offset + row * module_px + dy) * extent + offset + col * module_px,
                    static_cast<std::size_t>(module_px));
                std::fill(line.begin(), line.end(), std::uint8_t{0});
            }
        }
    }
    return image;
}

GrayImage preprocess(const GrayImage& image) {
    require_image(image);
    if (image.width() < 21 || image.height() < 21) {
        throw Error(ErrorCode::ImageTooSmall, "image smaller than 21x21 pixels");
    }
    const cv::Mat src = as_mat(image);
    cv::Mat median;
    cv::Mat blurred;
    cv::Mat equalized;
    cv::Mat binary;
    cv::medianBlur(src, median, 3);
    cv::GaussianBlur(median, blurred, cv::Size(3, 3), 0.0, 0.0, cv::BORDER_REPLICATE);
    equalized = equalize_tiles(blurred, 2.0, 8);
    cv::threshold(equalized, binary, kDarkThreshold, 255, cv::THRESH_BINARY);
    return from_mat(binary);
}

PixelBox dark_bounding_box(const GrayImage& image) {
    const int w = image.width();
    const auto px = image.pixels();
    int min_x = w;
    int max_x = -1;
    int min_y = -1;
    int max_y = -1;
    for (int y = 0; y < image.height(); ++y) {
        const std::uint8_t* row = px.data() + static_cast<std::size_t>(y) * w;
        int first = 0;
        while (first < w && !is_dark(row[first])) ++first;
        if (first == w) continue;
        int last = w - 1;
        while (!is_dark(row[last])) --last;
        if (min_y < 0) min_y = y;
        max_y = y;
        min_x = std::min(min_x, first);
        max_x = std::max(max_x, last);
    }
    if (max_y < 0) return {};
    return PixelBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

namespace {

// Finder run length in pixels, or 0 when the image has no dark pixel.
int finder_run_length(const GrayImage& image) {
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (!is_dark(image.at(x, y))) continue;
            int run = 0;
            for (int k = y; k < image.height() && is_dark(image.at(x, k)); ++k) ++run;
            return run;
        }
    }
    return 0;
}

double checked_module_size(const GrayImage& image, const PixelBox& box) {
    const int run = finder_run_length(image);
    if (run == 0) throw Error(ErrorCode::NoBlackPixel, "image contains no dark pixel");
    const double module_size = std::ceil(run / 7.0);
    const int side = side_count(box.width, module_size);
    if (side % 4 != 1 || side < 21) {
        throw Error(ErrorCode::ImplausibleModuleSize,
                    "module size " + std::to_string(static_cast<int>(module_size)) + " px gives " +
                        std::to_string(side) + " modules per side; not a plain square-module QR");
    }
    return module_size;
}

}  // namespace

double estimate_module_size(const GrayImage& image) {
    require_image(image);
    return checked_module_size(image, dark_bounding_box(image));
}

namespace {

// Module placement over the image: cell (row, col) spans
// [x + col * pitch_x, x + (col + 1) * pitch_x) and likewise for rows.
struct GridFit {
    int side = 0;
    double x = 0.0;
    double y = 0.0;
    double pitch_x = 0.0;
    double pitch_y = 0.0;
};

class CellReader {
public:
    explicit CellReader(const GrayImage& image) { cv::integral(as_mat(image), integral_, CV_32S); }

    // Cells are read from the central half of their span so blurred module
    // corners and edge growth do not bias the mean.
    bool dark(const GridFit& fit, int row, int col) const {
        const double cx = fit.x + fit.pitch_x * (col + 0.5);
        const double cy = fit.y + fit.pitch_y * (row + 0.5);
        int x0 = static_cast<int>(std::lround(cx - fit.pitch_x / 4.0));
        int x1 = std::max(static_cast<int>(std::lround(cx + fit.pitch_x / 4.0)), x0 + 1);
        int y0 = static_cast<int>(std::lround(cy - fit.pitch_y / 4.0));
        int y1 = std::max(static_cast<int>(std::lround(cy + fit.pitch_y / 4.0)), y0 + 1);
        x0 = std::max(x0, 0);
        x1 = std::min(x1, integral_.cols - 1);
        y0 = std::max(y0, 0);
        y1 = std::min(y1, integral_.rows - 1);
        if (x1 <= x0 || y1 <= y0) return false;
        const long count = static_cast<long>(y1 - y0) * (x1 - x0);
        const long sum = static_cast<long>(integral_.at<int>(y1, x1)) - integral_.at<int>(y0, x1) -
                         integral_.at<int>(y1, x0) + integral_.at<int>(y0, x0);
        return sum < static_cast<long>(kDarkThreshold) * count;
    }

    ModuleGrid read(const GridFit& fit) const {
        ModuleGrid cells(fit.side);
        for (int row = 0; row < fit.side; ++row) {
            for (int col = 0; col < fit.side; ++col) cells.set(row, col, dark(fit, row, col));
        }
        return cells;
    }

private:
    cv::Mat integral_;
};

// Expected colour of the finder, separator and timing modules; nullopt elsewhere.
std::optional<bool> fixed_module(int side, int row, int col) {
    const auto finder = [](int r, int c) -> std::optional<bool> {
        if (r > 7 || c > 7) return std::nullopt;
        if (r == 7 || c == 7) return false;
        const int ring = std::max(std::abs(r - 3), std::abs(c - 3));
        return ring != 2;
    };
    if (auto m = finder(row, col)) return m;
    if (auto m = finder(row, side - 1 - col)) return m;
    if (auto m = finder(side - 1 - row, col)) return m;
    if (row == 6 && col > 7 && col < side - 8) return col % 2 == 0;
    if (col == 6 && row > 7 && row < side - 8) return row % 2 == 0;
    return std::nullopt;
}

bool fixed_modules_match(const CellReader& reader, const GridFit& fit) {
    const int n = fit.side;
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            const bool on_finder = (row < 8 && (col < 8 || col >= n - 8)) || (row >= n - 8 && col < 8);
            if (!on_finder && row != 6 && col != 6) continue;
            const auto expected = fixed_module(n, row, col);
            if (expected && reader.dark(fit, row, col) != *expected) return false;
        }
    }
    return true;
}

// Centre of the dark run through (x, y) along one axis, in pixel units, or
// nullopt when (x, y) is light.
std::optional<double> run_centre(const GrayImage& image, int x, int y, bool horizontal) {
    if (x < 0 || y < 0 || x >= image.width() || y >= image.height() || !is_dark(image.at(x, y))) {
        return std::nullopt;
    }
    const int dx = horizontal ? 1 : 0;
    const int dy = horizontal ? 0 : 1;
    int lo = 0;
    int hi = 0;
    auto dark_at = [&](int i) {
        const int px = x + dx * i;
        const int py = y + dy * i;
        return px >= 0 && py >= 0 && px < image.width() && py < image.height() && is_dark(image.at(px, py));
    };
    while (dark_at(lo - 1)) --lo;
    while (dark_at(hi + 1)) ++hi;
    const int start = horizontal ? x + lo : y + lo;
    return start + (hi - lo + 1) / 2.0;
}

// Noise grows dark regions by a pixel here and there, so the dark box follows
// the outermost stray pixel and is a poor anchor. Growth is symmetric about
// the 3x3 core of each finder, so the core centres are measured instead and
// the grid is spanned from them.
GridFit align_to_finders(const GrayImage& image, const PixelBox& box, int side) {
    const double pitch_x = static_cast<double>(box.width) / side;
    const double pitch_y = static_cast<double>(box.height) / side;
    const GridFit rough{side, static_cast<double>(box.x), static_cast<double>(box.y), pitch_x, pitch_y};

    auto core_centre = [&](double module_x, double module_y) -> std::optional<std::array<double, 2>> {
        double sum_x = 0.0;
        double sum_y = 0.0;
        int n_x = 0;
        int n_y = 0;
        const int cx = static_cast<int>(box.x + pitch_x * module_x);
        const int cy = static_cast<int>(box.y + pitch_y * module_y);
        for (int k = -1; k <= 1; ++k) {
            const int y = static_cast<int>(box.y + pitch_y * (module_y + k));
            const int x = static_cast<int>(box.x + pitch_x * (module_x + k));
            if (auto c = run_centre(image, cx, y, true)) {
                sum_x += *c;
                ++n_x;
            }
            if (auto c = run_centre(image, x, cy, false)) {
                sum_y += *c;
                ++n_y;
            }
        }
        if (n_x == 0 || n_y == 0) return std::nullopt;
        return std::array<double, 2>{sum_x / n_x, sum_y / n_y};
    };
    const auto top_left = core_centre(3.5, 3.5);
    const auto top_right = core_centre(side - 3.5, 3.5);
    const auto bottom_left = core_centre(3.5, side - 3.5);
    if (!top_left || !top_right || !bottom_left) return rough;

    const double fit_pitch_x = ((*top_right)[0] - (*top_left)[0]) / (side - 7);
    const double fit_pitch_y = ((*bottom_left)[1] - (*top_left)[1]) / (side - 7);
    if (fit_pitch_x <= 0.0 || fit_pitch_y <= 0.0) return rough;
    return GridFit{side, (*top_left)[0] - 3.5 * fit_pitch_x, (*top_left)[1] - 3.5 * fit_pitch_y, fit_pitch_x,
                   fit_pitch_y};
}

// Noise can also inflate the finder run past 7 module widths. Search the
// valid sides for a placement whose fixed patterns read back exactly.
std::optional<GridFit> refit_grid(const GrayImage& image, const CellReader& reader, const PixelBox& box) {
    for (int v = kMinVersion; v <= kMaxVersion; ++v) {
        const int n = side_for_version(v);
        if (box.width < 2 * n || box.height < 2 * n) break;
        const GridFit fit = align_to_finders(image, box, n);
        if (fixed_modules_match(reader, fit)) return fit;
    }
    return std::nullopt;
}

}  // namespace

BinaryGrid binarize_to_grid(const GrayImage& image) {
    require_image(image);
    const PixelBox box = dark_bounding_box(image);
    if (box.width == 0) throw Error(ErrorCode::NoBlackPixel, "image contains no dark pixel");
    const CellReader reader(image);

    std::optional<Error> failure;
    try {
        const double module_size = checked_module_size(image, box);
        const int side = side_count(box.width, module_size);
        if (!version_for_side(side) || side_count(box.height, module_size) != side) {
            throw Error(ErrorCode::InvalidSideCount,
                        "dark region " + std::to_string(box.width) + "x" + std::to_string(box.height) +
                            " px does not map to a 17+4v module grid");
        }
        const GridFit fit = align_to_finders(image, box, side);
        if (fixed_modules_match(reader, fit)) return BinaryGrid{reader.read(fit), module_size};
        if (auto refit = refit_grid(image, reader, box)) return BinaryGrid{reader.read(*refit), refit->pitch_x};
        return BinaryGrid{reader.read(fit), module_size};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NoBlackPixel) throw;
        failure = e;
    }
    if (auto refit = refit_grid(image, reader, box)) return BinaryGrid{reader.read(*refit), refit->pitch_x};
    throw *failure;
}

}  // namespace qris
