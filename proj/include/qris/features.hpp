#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "qris/imaging.hpp"
#include "qris/qr_types.hpp"

namespace qris {

inline constexpr int kNumFeatures = 24;

/// Column names of the feature CSV, in order; a trailing `label` column follows.
const std::array<std::string_view, kNumFeatures>& feature_names();

struct ProtocolFeatures {
    int version = 0;
    int ecc_level = 0;  // L=0, M=1, Q=2, H=3
    int masking_pattern = 0;
    int num_alignment_patterns = 0;
    int required_remainder_bits = 0;
};

struct StatisticalFeatures {
    long num_white = 0;
    long num_black = 0;
    double black_white_ratio = 0.0;
    double density = 0.0;
    double mean_density = 0.0;
    double std_density_row = 0.0;
    double std_density_col = 0.0;
    long row_transitions_total = 0;
    long col_transitions_total = 0;
    double entropy = 0.0;
    double vertical_asymmetry = 0.0;
    double horizontal_asymmetry = 0.0;
    double tl_density = 0.0;
    double tr_density = 0.0;
    double bl_density = 0.0;
    double br_density = 0.0;
    double center_density = 0.0;
    long row_hist_peaks = 0;
    long col_hist_peaks = 0;
};

struct FeatureVector {
    ProtocolFeatures protocol;
    StatisticalFeatures stats;

    /// Values in feature_names() order.
    std::array<double, kNumFeatures> values() const;
};

/// Raw 15-bit format field read from the copy around the top-left finder
/// (copy 0) or the copy split between the other two finders (copy 1).
std::uint16_t read_format_field(const ModuleGrid& grid, int copy);

/// Raw 18-bit version field from the top-right (copy 0) or bottom-left
/// (copy 1) block. Only meaningful for sides of 45 modules or more.
std::uint32_t read_version_field(const ModuleGrid& grid, int copy);

/// Version from the version blocks when either decodes, for side >= 45.
std::optional<int> read_version_info(const ModuleGrid& grid);

ProtocolFeatures extract_protocol_features(const ModuleGrid& grid);

/// Works on any square grid, including sides that are not valid QR sizes.
StatisticalFeatures extract_statistical_features(const ModuleGrid& grid);

FeatureVector extract_all(const ModuleGrid& grid);

inline FeatureVector extract_all(const BinaryGrid& grid) { return extract_all(grid.cells); }

}  // namespace qris
