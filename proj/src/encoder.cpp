#include "qris/encoder.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <limits>
#include <random>

#include "qris/error.hpp"
#include "qris/qr_tables.hpp"

namespace qris {
namespace {

constexpr std::string_view kAlphanumericCharset = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";

class BitBuffer {
public:
    void append(std::uint32_t value, int length) {
        for (int i = length - 1; i >= 0; --i) bits_.push_back(static_cast<std::uint8_t>((value >> i) & 1));
    }
    std::size_t size() const noexcept { return bits_.size(); }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }

private:
    std::vector<std::uint8_t> bits_;
};

std::uint8_t gf_multiply(std::uint8_t x, std::uint8_t y) {
    int z = 0;
    for (int i = 7; i >= 0; --i) {
        z = (z << 1) ^ ((z >> 7) * 0x11D);
        z ^= ((y >> i) & 1) * x;
    }
    return static_cast<std::uint8_t>(z);
}

std::vector<std::uint8_t> rs_generator(int degree) {
    std::vector<std::uint8_t> result(static_cast<std::size_t>(degree), 0);
    result.back() = 1;
    std::uint8_t root = 1;
    for (int i = 0; i < degree; ++i) {
        for (std::size_t j = 0; j < result.size(); ++j) {
            result[j] = gf_multiply(result[j], root);
            if (j + 1 < result.size()) result[j] ^= result[j + 1];
        }
        root = gf_multiply(root, 0x02);
    }
    return result;
}

bool mask_bit(int mask, int row, int col) {
    switch (mask) {
        case 0: return (row + col) % 2 == 0;
        case 1: return row % 2 == 0;
        case 2: return col % 3 == 0;
        case 3: return (row + col) % 3 == 0;
        case 4: return (row / 2 + col / 3) % 2 == 0;
        case 5: return row * col % 2 + row * col % 3 == 0;
        case 6: return (row * col % 2 + row * col % 3) % 2 == 0;
        case 7: return ((row + col) % 2 + row * col % 3) % 2 == 0;
        default: std::abort();
    }
}

// Module grid under construction, with a parallel map of function-pattern cells.
class SymbolBuilder {
public:
    explicit SymbolBuilder(int version)
        : version_(version), side_(side_for_version(version)), grid_(side_), function_(grid_.cells().size(), 0) {
        draw_function_patterns();
    }

    void draw_codewords(const std::vector<std::uint8_t>& codewords) {
        std::size_t bit = 0;
        const std::size_t total_bits = codewords.size() * 8;
        for (int right = side_ - 1; right >= 1; right -= 2) {
            if (right == 6) right = 5;
            for (int vert = 0; vert < side_; ++vert) {
                for (int j = 0; j < 2; ++j) {
                    const int col = right - j;
                    const bool upward = ((right + 1) & 2) == 0;
                    const int row = upward ? side_ - 1 - vert : vert;
                    if (is_function(row, col)) continue;
                    if (bit < total_bits) {
                        grid_.set(row, col, (codewords[bit >> 3] >> (7 - (bit & 7))) & 1);
                        ++bit;
                    }
                    // Remaining cells are remainder bits and stay light.
                }
            }
        }
    }

    void apply_mask(int mask) {
        for (int row = 0; row < side_; ++row) {
            for (int col = 0; col < side_; ++col) {
                if (!is_function(row, col) && mask_bit(mask, row, col)) {
                    grid_.set(row, col, grid_.at(row, col) == 0);
                }
            }
        }
    }

    void draw_format_bits(EccLevel ecc, int mask) {
        const std::uint16_t bits = tables::format_bits(ecc, mask);
        auto bit = [bits](int i) { return ((bits >> i) & 1) != 0; };
        // Copy around the top-left finder.
        for (int i = 0; i <= 5; ++i) set_function(i, 8, bit(i));
        set_function(7, 8, bit(6));
        set_function(8, 8, bit(7));
        set_function(8, 7, bit(8));
        for (int i = 9; i < 15; ++i) set_function(8, 14 - i, bit(i));
        // Copy split between top-right and bottom-left finders.
        for (int i = 0; i < 8; ++i) set_function(8, side_ - 1 - i, bit(i));
        for (int i = 8; i < 15; ++i) set_function(side_ - 15 + i, 8, bit(i));
        set_function(side_ - 8, 8, true);  // dark module
    }

    const ModuleGrid& grid() const noexcept { return grid_; }

private:
    bool is_function(int row, int col) const {
        return function_[static_cast<std::size_t>(row) * side_ + col] != 0;
    }

    void set_function(int row, int col, bool dark) {
        grid_.set(row, col, dark);
        function_[static_cast<std::size_t>(row) * side_ + col] = 1;
    }

    void draw_function_patterns() {
        for (int i = 0; i < side_; ++i) {
            set_function(6, i, i % 2 == 0);
            set_function(i, 6, i % 2 == 0);
        }
        draw_finder(3, 3);
        draw_finder(3, side_ - 4);
        draw_finder(side_ - 4, 3);

        const auto positions = tables::alignment_positions(version_);
        const auto n = positions.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const bool on_finder = (i == 0 && j == 0) || (i == 0 && j == n - 1) || (i == n - 1 && j == 0);
                if (!on_finder) draw_alignment(positions[i], positions[j]);
            }
        }
        // Reserve format cells; real bits are drawn after mask selection.
        draw_format_bits(EccLevel::L, 0);
        draw_version_bits();
    }

    void draw_finder(int center_row, int center_col) {
        for (int dr = -4; dr <= 4; ++dr) {
            for (int dc = -4; dc <= 4; ++dc) {
                const int dist = std::max(std::abs(dr), std::abs(dc));
                const int row = center_row + dr;
                const int col = center_col + dc;
                if (row >= 0 && row < side_ && col >= 0 && col < side_) {
                    set_function(row, col, dist != 2 && dist != 4);
                }
            }
        }
    }

    void draw_alignment(int center_row, int center_col) {
        for (int dr = -2; dr <= 2; ++dr) {
            for (int dc = -2; dc <= 2; ++dc) {
                set_function(center_row + dr, center_col + dc, std::max(std::abs(dr), std::abs(dc)) != 1);
            }
        }
    }

    void draw_version_bits() {
        if (version_ < 7) return;
        const std::uint32_t bits = tables::version_bits(version_);
        for (int i = 0; i < 18; ++i) {
            const bool dark = ((bits >> i) & 1) != 0;
            const int a = side_ - 11 + i % 3;
            const int b = i / 3;
            set_function(b, a, dark);  // top-right block
            set_function(a, b, dark);  // bottom-left block
        }
    }

    int version_;
    int side_;
    ModuleGrid grid_;
    std::vector<std::uint8_t> function_;
};

long penalty_runs_and_patterns(const ModuleGrid& grid, bool by_column) {
    const int n = grid.side();
    long result = 0;
    for (int line = 0; line < n; ++line) {
        auto cell = [&](int i) { return by_column ? grid.at(i, line) : grid.at(line, i); };
        int run = 0;
        std::uint8_t color = cell(0);
        for (int i = 0; i < n; ++i) {
            if (cell(i) == color) {
                ++run;
            } else {
                if (run >= 5) result += run - 2;
                run = 1;
                color = cell(i);
            }
        }
        if (run >= 5) result += run - 2;

        unsigned window = 0;
        for (int i = 0; i < n; ++i) {
            window = ((window << 1) & 0x7FF) | cell(i);
            if (i >= 10 && (window == 0x5D0 || window == 0x05D)) result += 40;
        }
    }
    return result;
}

}  // namespace

bool is_alphanumeric(std::string_view payload) noexcept {
    return std::all_of(payload.begin(), payload.end(),
                       [](char c) { return kAlphanumericCharset.find(c) != std::string_view::npos; });
}

Mode select_mode(std::string_view payload) noexcept {
    return is_alphanumeric(payload) ? Mode::Alphanumeric : Mode::Byte;
}

int payload_length(std::string_view payload, Mode) noexcept {
    // Alphanumeric characters are single bytes, so both units coincide.
    return static_cast<int>(payload.size());
}

std::optional<int> smallest_version(std::string_view payload, Mode mode, EccLevel ecc) {
    const int length = payload_length(payload, mode);
    for (int v = kMinVersion; v <= kMaxVersion; ++v) {
        if (length <= tables::capacity(v, ecc, mode)) return v;
    }
    return std::nullopt;
}

std::vector<EccLevel> feasible_ecc_levels(std::string_view payload, Mode mode, int version) {
    std::vector<EccLevel> levels;
    const int length = payload_length(payload, mode);
    for (EccLevel ecc : {EccLevel::L, EccLevel::M, EccLevel::Q, EccLevel::H}) {
        if (length <= tables::capacity(version, ecc, mode)) levels.push_back(ecc);
    }
    return levels;
}

std::vector<std::uint8_t> make_data_codewords(std::string_view payload, int version, EccLevel ecc, Mode mode) {
    if (mode == Mode::Alphanumeric && !is_alphanumeric(payload)) {
        throw Error(ErrorCode::UnsupportedMode, "payload has characters outside the alphanumeric set");
    }
    const int length = payload_length(payload, mode);
    if (length > tables::capacity(version, ecc, mode)) {
        throw Error(ErrorCode::PayloadTooLong, "payload does not fit version " + std::to_string(version) +
                                                   "-" + ecc_letter(ecc));
    }
    BitBuffer bb;
    if (mode == Mode::Alphanumeric) {
        bb.append(0x2, 4);
        bb.append(static_cast<std::uint32_t>(length), tables::char_count_bits(mode, version));
        std::size_t i = 0;
        for (; i + 1 < payload.size(); i += 2) {
            const auto a = kAlphanumericCharset.find(payload[i]);
            const auto b = kAlphanumericCharset.find(payload[i + 1]);
            bb.append(static_cast<std::uint32_t>(a * 45 + b), 11);
        }
        if (i < payload.size()) bb.append(static_cast<std::uint32_t>(kAlphanumericCharset.find(payload[i])), 6);
    } else {
        bb.append(0x4, 4);
        bb.append(static_cast<std::uint32_t>(length), tables::char_count_bits(mode, version));
        for (unsigned char c : payload) bb.append(c, 8);
    }

    const std::size_t capacity_bits = static_cast<std::size_t>(tables::data_codewords(version, ecc)) * 8;
    bb.append(0, static_cast<int>(std::min<std::size_t>(4, capacity_bits - bb.size())));
    bb.append(0, static_cast<int>((8 - bb.size() % 8) % 8));

    std::vector<std::uint8_t> codewords(bb.size() / 8, 0);
    for (std::size_t i = 0; i < bb.size(); ++i) {
        codewords[i >> 3] = static_cast<std::uint8_t>(codewords[i >> 3] | bb[i] << (7 - (i & 7)));
    }
    for (std::uint8_t pad = 0xEC; codewords.size() * 8 < capacity_bits; pad ^= 0xEC ^ 0x11) {
        codewords.push_back(pad);
    }
    return codewords;
}

std::vector<std::uint8_t> reed_solomon_remainder(const std::vector<std::uint8_t>& data, int degree) {
    const auto generator = rs_generator(degree);
    std::vector<std::uint8_t> result(generator.size(), 0);
    for (std::uint8_t b : data) {
        const std::uint8_t factor = b ^ result.front();
        result.erase(result.begin());
        result.push_back(0);
        for (std::size_t i = 0; i < result.size(); ++i) result[i] ^= gf_multiply(generator[i], factor);
    }
    return result;
}

std::vector<std::uint8_t> add_ecc_and_interleave(const std::vector<std::uint8_t>& data, int version, EccLevel ecc) {
    if (static_cast<int>(data.size()) != tables::data_codewords(version, ecc)) {
        throw Error(ErrorCode::InvalidArgument, "data codeword count does not match version/ECC");
    }
    const int num_blocks = tables::num_ecc_blocks(version, ecc);
    const int block_ecc_len = tables::ecc_codewords_per_block(version, ecc);
    const int raw_codewords = tables::raw_data_modules(version) / 8;
    const int num_short_blocks = num_blocks - raw_codewords % num_blocks;
    const int short_block_len = raw_codewords / num_blocks;

    std::vector<std::vector<std::uint8_t>> blocks;
    std::size_t k = 0;
    for (int i = 0; i < num_blocks; ++i) {
        const int data_len = short_block_len - block_ecc_len + (i < num_short_blocks ? 0 : 1);
        std::vector<std::uint8_t> block(data.begin() + static_cast<std::ptrdiff_t>(k),
                                        data.begin() + static_cast<std::ptrdiff_t>(k + data_len));
        k += static_cast<std::size_t>(data_len);
        const auto ecc_bytes = reed_solomon_remainder(block, block_ecc_len);
        if (i < num_short_blocks) block.push_back(0);  // placeholder keeps columns aligned
        block.insert(block.end(), ecc_bytes.begin(), ecc_bytes.end());
        blocks.push_back(std::move(block));
    }

    std::vector<std::uint8_t> result;
    result.reserve(static_cast<std::size_t>(raw_codewords));
    for (std::size_t i = 0; i < blocks[0].size(); ++i) {
        for (std::size_t j = 0; j < blocks.size(); ++j) {
            const bool placeholder = i == static_cast<std::size_t>(short_block_len - block_ecc_len) &&
                                     j < static_cast<std::size_t>(num_short_blocks);
            if (!placeholder) result.push_back(blocks[j][i]);
        }
    }
    return result;
}

long mask_penalty(const ModuleGrid& grid) {
    const int n = grid.side();
    long result = penalty_runs_and_patterns(grid, false) + penalty_runs_and_patterns(grid, true);
    for (int row = 0; row + 1 < n; ++row) {
        for (int col = 0; col + 1 < n; ++col) {
            const auto c = grid.at(row, col);
            if (c == grid.at(row, col + 1) && c == grid.at(row + 1, col) && c == grid.at(row + 1, col + 1)) {
                result += 3;
            }
        }
    }
    long dark = 0;
    for (auto cell : grid.cells()) dark += cell;
    const long total = static_cast<long>(n) * n;
    result += 10 * (std::labs(20 * dark - 10 * total) / total);
    return result;
}

QrMatrix encode_with(std::string_view payload, const ForcedEncoding& forced) {
    if (payload.empty()) throw Error(ErrorCode::EmptyPayload, "payload is empty");
    if (forced.version < kMinVersion || forced.version > kMaxVersion) {
        throw Error(ErrorCode::InvalidArgument, "version out of range");
    }
    if (forced.mask && (*forced.mask < 0 || *forced.mask >= kNumMasks)) {
        throw Error(ErrorCode::InvalidArgument, "mask out of range");
    }
    const Mode mode = forced.mode.value_or(select_mode(payload));
    const auto data = make_data_codewords(payload, forced.version, forced.ecc, mode);
    const auto codewords = add_ecc_and_interleave(data, forced.version, forced.ecc);

    SymbolBuilder builder(forced.version);
    builder.draw_codewords(codewords);

    int mask = forced.mask.value_or(-1);
    if (mask < 0) {
        long best = std::numeric_limits<long>::max();
        for (int candidate = 0; candidate < kNumMasks; ++candidate) {
            builder.apply_mask(candidate);
            builder.draw_format_bits(forced.ecc, candidate);
            const long penalty = mask_penalty(builder.grid());
            if (penalty < best) {
                best = penalty;
                mask = candidate;
            }
            builder.apply_mask(candidate);  // XOR undoes it
        }
    }
    builder.apply_mask(mask);
    builder.draw_format_bits(forced.ecc, mask);

    return QrMatrix{builder.grid(), EncodingParams{forced.version, forced.ecc, mask, mode}};
}

QrMatrix encode(std::string_view payload, std::optional<EccLevel> ecc_choice, std::uint64_t rng_seed) {
    if (payload.empty()) throw Error(ErrorCode::EmptyPayload, "payload is empty");
    const Mode mode = select_mode(payload);
    const EccLevel sizing_ecc = ecc_choice.value_or(EccLevel::L);
    const auto version = smallest_version(payload, mode, sizing_ecc);
    if (!version) {
        throw Error(ErrorCode::PayloadTooLong, "payload of " + std::to_string(payload.size()) +
                                                   " bytes exceeds version-40 capacity");
    }
    EccLevel ecc = sizing_ecc;
    if (!ecc_choice) {
        const auto levels = feasible_ecc_levels(payload, mode, *version);
        std::mt19937_64 rng(rng_seed);
        ecc = levels[static_cast<std::size_t>(rng() % levels.size())];
    }
    return encode_with(payload, ForcedEncoding{*version, ecc, mode, std::nullopt});
}

std::string dump_grid(const ModuleGrid& grid) {
    std::string out;
    for (int row = 0; row < grid.side(); ++row) {
        for (int col = 0; col < grid.side(); ++col) out += grid.at(row, col) ? "█" : "·";
        out += '\n';
    }
    return out;
}

}  // namespace qris
