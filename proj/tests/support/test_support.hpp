#pragma once

// Reference implementations and fixtures shared by the unit and acceptance
// tests. Oracles are written from the definitions, not from the library code.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qris/features.hpp"
#include "qris/imaging.hpp"
#include "qris/qr_tables.hpp"

namespace qris::testing {

inline void add_noise(GrayImage& image, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& px : image.pixels()) px = static_cast<std::uint8_t>(std::clamp(std::lround(px + noise(rng)), 0L, 255L));
}

inline ModuleGrid random_grid(int side, double p_dark, std::mt19937_64& rng) {
    std::bernoulli_distribution dark(p_dark);
    ModuleGrid g(side);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) g.set(r, c, dark(rng));
    }
    return g;
}

/// Statistical features straight from their definitions.
inline StatisticalFeatures naive_statistics(const ModuleGrid& g) {
    const int n = g.side();
    std::vector<std::vector<int>> m(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) m[r][c] = g.at(r, c);
    }
    StatisticalFeatures s;
    for (const auto& row : m) {
        for (int v : row) (v ? s.num_black : s.num_white) += 1;
    }
    const double cells = static_cast<double>(n) * n;
    s.black_white_ratio = static_cast<double>(s.num_black) / static_cast<double>(s.num_white);
    s.density = static_cast<double>(s.num_black) / cells;

    std::vector<long> rows(static_cast<std::size_t>(n), 0);
    std::vector<long> cols(static_cast<std::size_t>(n), 0);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            rows[r] += m[r][c];
            cols[c] += m[r][c];
        }
    }
    auto stdev = [n](const std::vector<long>& counts, double* mean_out) {
        double mean = 0.0;
        for (long k : counts) mean += static_cast<double>(k) / n;
        mean /= n;
        if (mean_out) *mean_out = mean;
        double acc = 0.0;
        for (long k : counts) {
            const double d = static_cast<double>(k) / n - mean;
            acc += d * d;
        }
        return std::sqrt(acc / n);
    };
    s.std_density_row = stdev(rows, &s.mean_density);
    s.std_density_col = stdev(cols, nullptr);

    for (int r = 0; r < n; ++r) {
        for (int c = 1; c < n; ++c) s.row_transitions_total += m[r][c] != m[r][c - 1];
    }
    for (int c = 0; c < n; ++c) {
        for (int r = 1; r < n; ++r) s.col_transitions_total += m[r][c] != m[r - 1][c];
    }
    const double p = s.density;
    s.entropy = -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));

    auto flipped_rows = m;
    std::reverse(flipped_rows.begin(), flipped_rows.end());
    auto flipped_cols = m;
    for (auto& row : flipped_cols) std::reverse(row.begin(), row.end());
    long v_diff = 0;
    long h_diff = 0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            v_diff += m[r][c] != flipped_rows[r][c];
            h_diff += m[r][c] != flipped_cols[r][c];
        }
    }
    s.vertical_asymmetry = static_cast<double>(v_diff) / cells;
    s.horizontal_asymmetry = static_cast<double>(h_diff) / cells;

    auto block = [&m](int r0, int c0, int size) {
        long dark = 0;
        for (int r = r0; r < r0 + size; ++r) {
            for (int c = c0; c < c0 + size; ++c) dark += m[r][c];
        }
        return static_cast<double>(dark) / (static_cast<double>(size) * size);
    };
    const int h = n / 2;
    s.tl_density = block(0, 0, h);
    s.tr_density = block(0, n - h, h);
    s.bl_density = block(n - h, 0, h);
    s.br_density = block(n - h, n - h, h);
    const int centre = static_cast<int>(std::ceil(n / 3.0));
    s.center_density = block((n - centre) / 2, (n - centre) / 2, centre);

    auto peaks = [](const std::vector<long>& xs) {
        long k = 0;
        for (std::size_t i = 1; i + 1 < xs.size(); ++i) k += xs[i] > xs[i - 1] && xs[i] > xs[i + 1];
        return k;
    };
    s.row_hist_peaks = peaks(rows);
    s.col_hist_peaks = peaks(cols);
    return s;
}

inline std::array<double, 19> stat_values(const StatisticalFeatures& s) {
    return {static_cast<double>(s.num_white), static_cast<double>(s.num_black), s.black_white_ratio, s.density,
            s.mean_density, s.std_density_row, s.std_density_col, static_cast<double>(s.row_transitions_total),
            static_cast<double>(s.col_transitions_total), s.entropy, s.vertical_asymmetry, s.horizontal_asymmetry,
            s.tl_density, s.tr_density, s.bl_density, s.br_density, s.center_density,
            static_cast<double>(s.row_hist_peaks), static_cast<double>(s.col_hist_peaks)};
}

/// Probability that a random positive outscores a random negative, ties half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

/// Modules carrying each bit of a format copy, found by probing
/// read_format_field one module at a time.
inline std::vector<std::pair<int, int>> format_cells(int side, int copy) {
    std::vector<std::pair<int, int>> cells(15, {-1, -1});
    ModuleGrid blank(side);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            ModuleGrid probe = blank;
            probe.set(r, c, true);
            const std::uint16_t bits = read_format_field(probe, copy);
            for (int i = 0; i < 15; ++i) {
                if (bits == (1u << i)) cells[i] = {r, c};
            }
        }
    }
    return cells;
}

inline void write_format(ModuleGrid& grid, int copy, std::uint16_t bits) {
    for (int i = 0; auto [r, c] : format_cells(grid.side(), copy)) grid.set(r, c, (bits >> i++) & 1u);
}

/// A 15-bit word at Hamming distance > 3 from every format codeword.
inline std::uint16_t undecodable_format_word() {
    for (std::uint32_t w = 0; w < (1u << 15); ++w) {
        if (!tables::decode_format_bits(static_cast<std::uint16_t>(w))) return static_cast<std::uint16_t>(w);
    }
    return 0;
}

}  // namespace qris::testing
