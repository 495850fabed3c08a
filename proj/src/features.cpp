#include "qris/features.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "qris/error.hpp"
#include "qris/qr_tables.hpp"

namespace qris {

const std::array<std::string_view, kNumFeatures>& feature_names() {
    static const std::array<std::string_view, kNumFeatures> names{
        "version",
        "ecc_level",
        "masking_pattern",
        "number_of_alignment_patterns",
        "required_remainder_bits",
        "no_of_white_modules",
        "no_of_black_modules",
        "black_white_ratio",
        "qr_density",
        "qr_mean_density",
        "qr_standard_density_row_wise",
        "qr_standard_density_column_wise",
        "qr_row_transitions_total",
        "qr_column_transitions_total",
        "qr_entropy",
        "qr_vertical_asymmetry",
        "qr_horizontal_asymmetry",
        "qr_top_left_density",
        "qr_top_right_density",
        "qr_bottom_left_density",
        "qr_bottom_right_density",
        "qr_center_density",
        "qr_row_wise_histogram_peaks",
        "qr_column_wise_histogram_peaks",
    };
    return names;
}

std::array<double, kNumFeatures> FeatureVector::values() const {
    const auto& p = protocol;
    const auto& s = stats;
    return {static_cast<double>(p.version),
            static_cast<double>(p.ecc_level),
            static_cast<double>(p.masking_pattern),
            static_cast<double>(p.num_alignment_patterns),
            static_cast<double>(p.required_remainder_bits),
            static_cast<double>(s.num_white),
            static_cast<double>(s.num_black),
            s.black_white_ratio,
            s.density,
            s.mean_density,
            s.std_density_row,
            s.std_density_col,
            static_cast<double>(s.row_transitions_total),
            static_cast<double>(s.col_transitions_total),
            s.entropy,
            s.vertical_asymmetry,
            s.horizontal_asymmetry,
            s.tl_density,
            s.tr_density,
            s.bl_density,
            s.br_density,
            s.center_density,
            static_cast<double>(s.row_hist_peaks),
            static_cast<double>(s.col_hist_peaks)};
}

std::uint16_t read_format_field(const ModuleGrid& grid, int copy) {
    const int n = grid.side();
    std::uint16_t bits = 0;
    auto put = [&bits](int i, bool dark) {
        if (dark) bits = static_cast<std::uint16_t>(bits | (1u << i));
    };
    if (copy == 0) {
        for (int i = 0; i <= 5; ++i) put(i, grid.at(i, 8));
        put(6, grid.at(7, 8));
        put(7, grid.at(8, 8));
        put(8, grid.at(8, 7));
        for (int i = 9; i < 15; ++i) put(i, grid.at(8, 14 - i));
    } else {
        for (int i = 0; i < 8; ++i) put(i, grid.at(8, n - 1 - i));
        for (int i = 8; i < 15; ++i) put(i, grid.at(n - 15 + i, 8));
    }
    return bits;
}

std::uint32_t read_version_field(const ModuleGrid& grid, int copy) {
    const int n = grid.side();
    std::uint32_t bits = 0;
    for (int i = 0; i < 18; ++i) {
        const int a = n - 11 + i % 3;
        const int b = i / 3;
        const bool dark = copy == 0 ? grid.at(b, a) : grid.at(a, b);
        if (dark) bits |= 1u << i;
    }
    return bits;
}

std::optional<int> read_version_info(const ModuleGrid& grid) {
    if (grid.side() < side_for_version(7)) return std::nullopt;
    for (int copy = 0; copy < 2; ++copy) {
        if (auto v = tables::decode_version_bits(read_version_field(grid, copy))) return v;
    }
    return std::nullopt;
}

ProtocolFeatures extract_protocol_features(const ModuleGrid& grid) {
    const auto version = version_for_side(grid.side());
    if (!version) {
        throw Error(ErrorCode::InvalidSideCount,
                    "grid side " + std::to_string(grid.side()) + " is not 17+4v for v in 1..40");
    }
    if (*version >= 7) {
        const auto stated = read_version_info(grid);
        if (stated && *stated != *version) {
            throw Error(ErrorCode::FormatUnrecoverable, "version field reads " + std::to_string(*stated) +
                                                            " but the grid has version " +
                                                            std::to_string(*version) + " dimensions");
        }
    }
    auto format = tables::decode_format_bits(read_format_field(grid, 0));
    if (!format) format = tables::decode_format_bits(read_format_field(grid, 1));
    if (!format) {
        throw Error(ErrorCode::FormatUnrecoverable, "no format string within Hamming distance 3 in either copy");
    }
    return ProtocolFeatures{*version, static_cast<int>(format->ecc), format->mask,
                            tables::alignment_pattern_count(*version), tables::remainder_bits(*version)};
}

namespace {

double population_std(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

long strict_peaks(const std::vector<long>& counts) {
    long peaks = 0;
    for (std::size_t i = 1; i + 1 < counts.size(); ++i) {
        if (counts[i] > counts[i - 1] && counts[i] > counts[i + 1]) ++peaks;
    }
    return peaks;
}

}  // namespace

StatisticalFeatures extract_statistical_features(const ModuleGrid& grid) {
    const int n = grid.side();
    const double total = static_cast<double>(n) * n;
    StatisticalFeatures f;

    std::vector<long> row_black(static_cast<std::size_t>(n), 0);
    std::vector<long> col_black(static_cast<std::size_t>(n), 0);
    long vertical_mismatch = 0;
    long horizontal_mismatch = 0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const bool dark = grid.at(r, c);
            row_black[static_cast<std::size_t>(r)] += dark;
            col_black[static_cast<std::size_t>(c)] += dark;
            if (c + 1 < n && dark != grid.at(r, c + 1)) ++f.row_transitions_total;
            if (r + 1 < n && dark != grid.at(r + 1, c)) ++f.col_transitions_total;
            if (dark != grid.at(n - 1 - r, c)) ++vertical_mismatch;
            if (dark != grid.at(r, n - 1 - c)) ++horizontal_mismatch;
        }
    }
    for (long b : row_black) f.num_black += b;
    f.num_white = static_cast<long>(total) - f.num_black;
    if (f.num_black == 0 || f.num_white == 0) {
        throw Error(ErrorCode::DegenerateGrid, f.num_black == 0 ? "grid has no dark module" : "grid has no light module");
    }

    f.black_white_ratio = static_cast<double>(f.num_black) / static_cast<double>(f.num_white);
    f.density = static_cast<double>(f.num_black) / total;

    std::vector<double> row_density;
    std::vector<double> col_density;
    for (int i = 0; i < n; ++i) {
        row_density.push_back(static_cast<double>(row_black[static_cast<std::size_t>(i)]) / n);
        col_density.push_back(static_cast<double>(col_black[static_cast<std::size_t>(i)]) / n);
    }
    for (double d : row_density) f.mean_density += d;
    f.mean_density /= n;
    f.std_density_row = population_std(row_density);
    f.std_density_col = population_std(col_density);

    const double p = f.density;
    f.entropy = -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
    f.vertical_asymmetry = static_cast<double>(vertical_mismatch) / total;
    f.horizontal_asymmetry = static_cast<double>(horizontal_mismatch) / total;

    auto block_density = [&grid](int row0, int col0, int size) {
        if (size <= 0) return 0.0;
        long black = 0;
        for (int r = row0; r < row0 + size; ++r) {
            for (int c = col0; c < col0 + size; ++c) black += grid.at(r, c);
        }
        return static_cast<double>(black) / (static_cast<double>(size) * size);
    };
    const int half = n / 2;
    f.tl_density = block_density(0, 0, half);
    f.tr_density = block_density(0, n - half, half);
    f.bl_density = block_density(n - half, 0, half);
    f.br_density = block_density(n - half, n - half, half);
    const int centre = (n + 2) / 3;
    f.center_density = block_density((n - centre) / 2, (n - centre) / 2, centre);

    f.row_hist_peaks = strict_peaks(row_black);
    f.col_hist_peaks = strict_peaks(col_black);
    return f;
}

FeatureVector extract_all(const ModuleGrid& grid) {
    FeatureVector v;
    v.protocol = extract_protocol_features(grid);
    v.stats = extract_statistical_features(grid);
    return v;
}

}  // namespace qris
