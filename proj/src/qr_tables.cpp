#include "qris/qr_tables.hpp"

#include <array>
#include <bit>
#include <cassert>
#include <vector>

#include "qris/error.hpp"

namespace qris {

std::optional<int> version_for_side(int side) noexcept {
    if (side < side_for_version(kMinVersion) || side > side_for_version(kMaxVersion)) return std::nullopt;
    if ((side - 17) % 4 != 0) return std::nullopt;
    return (side - 17) / 4;
}

char ecc_letter(EccLevel ecc) noexcept {
    static constexpr char kLetters[] = {'L', 'M', 'Q', 'H'};
    return kLetters[static_cast<int>(ecc)];
}

std::optional<EccLevel> parse_ecc(std::string_view text) noexcept {
    if (text == "L" || text == "l") return EccLevel::L;
    if (text == "M" || text == "m") return EccLevel::M;
    if (text == "Q" || text == "q") return EccLevel::Q;
    if (text == "H" || text == "h") return EccLevel::H;
    return std::nullopt;
}

std::string_view mode_name(Mode mode) noexcept {
    return mode == Mode::Alphanumeric ? "alphanumeric" : "byte";
}

namespace tables {
namespace {

// Indexed [ecc][version]; column 0 is padding.
constexpr std::int8_t kEccCodewordsPerBlock[4][41] = {
    {-1,  7, 10, 15, 20, 26, 18, 20, 24, 30, 18, 20, 24, 26, 30, 22, 24, 28, 30, 28, 28, 28, 28, 30, 30, 26, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30},
    {-1, 10, 16, 26, 18, 24, 16, 18, 22, 22, 26, 30, 22, 22, 24, 24, 28, 28, 26, 26, 26, 26, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28, 28},
    {-1, 13, 22, 18, 26, 18, 24, 18, 22, 20, 24, 28, 26, 24, 20, 30, 24, 28, 28, 26, 30, 28, 30, 30, 30, 30, 28, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30},
    {-1, 17, 28, 22, 16, 22, 28, 26, 26, 24, 28, 24, 28, 22, 24, 24, 30, 28, 28, 26, 28, 30, 24, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30, 30},
};

constexpr std::int8_t kNumEccBlocks[4][41] = {
    {-1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4,  4,  4,  4,  4,  6,  6,  6,  6,  7,  8,  8,  9,  9, 10, 12, 12, 12, 13, 14, 15, 16, 17, 18, 19, 19, 20, 21, 22, 24, 25},
    {-1, 1, 1, 1, 2, 2, 4, 4, 4, 5, 5,  5,  8,  9,  9, 10, 10, 11, 13, 14, 16, 17, 17, 18, 20, 21, 23, 25, 26, 28, 29, 31, 33, 35, 37, 38, 40, 43, 45, 47, 49},
    {-1, 1, 1, 2, 2, 4, 4, 6, 6, 8, 8,  8, 10, 12, 16, 12, 17, 16, 18, 21, 20, 23, 23, 25, 27, 29, 34, 34, 35, 38, 40, 43, 45, 48, 51, 53, 56, 59, 62, 65, 68},
    {-1, 1, 1, 2, 4, 4, 4, 5, 6, 8, 8, 11, 11, 16, 16, 18, 16, 19, 21, 25, 25, 25, 34, 30, 32, 35, 37, 40, 42, 45, 48, 51, 54, 57, 60, 63, 66, 70, 74, 77, 81},
};

// Alignment pattern centre coordinates per version (index 0 = version 1).
const std::vector<std::vector<int>> kAlignmentPositions = {
    {},
    {6, 18},
    {6, 22},
    {6, 26},
    {6, 30},
    {6, 34},
    {6, 22, 38},
    {6, 24, 42},
    {6, 26, 46},
    {6, 28, 50},
    {6, 30, 54},
    {6, 32, 58},
    {6, 34, 62},
    {6, 26, 46, 66},
    {6, 26, 48, 70},
    {6, 26, 50, 74},
    {6, 30, 54, 78},
    {6, 30, 56, 82},
    {6, 30, 58, 86},
    {6, 34, 62, 90},
    {6, 28, 50, 72, 94},
    {6, 26, 50, 74, 98},
    {6, 30, 54, 78, 102},
    {6, 28, 54, 80, 106},
    {6, 32, 58, 84, 110},
    {6, 30, 58, 86, 114},
    {6, 34, 62, 90, 118},
    {6, 26, 50, 74, 98, 122},
    {6, 30, 54, 78, 102, 126},
    {6, 26, 52, 78, 104, 130},
    {6, 30, 56, 82, 108, 134},
    {6, 34, 60, 86, 112, 138},
    {6, 30, 58, 86, 114, 142},
    {6, 34, 62, 90, 118, 146},
    {6, 30, 54, 78, 102, 126, 150},
    {6, 24, 50, 76, 102, 128, 154},
    {6, 28, 54, 80, 106, 132, 158},
    {6, 32, 58, 84, 110, 136, 162},
    {6, 26, 54, 82, 110, 138, 166},
    {6, 30, 58, 86, 114, 142, 170},
};

constexpr std::array<std::int8_t, 41> kRemainderBits = {
    -1, 0, 7, 7, 7, 7, 7, 0, 0, 0, 0, 0, 0, 0, 3, 3, 3, 3, 3, 3, 3,
    4, 4, 4, 4, 4, 4, 4, 3, 3, 3, 3, 3, 3, 3, 0, 0, 0, 0, 0, 0,
};

// Two-bit ECC indicator stored in the format field.
constexpr int kEccFormatIndicator[4] = {1, 0, 3, 2};

void check_version(int version) {
    if (version < kMinVersion || version > kMaxVersion) {
        throw Error(ErrorCode::InvalidArgument, "version out of range: " + std::to_string(version));
    }
}

std::uint16_t compute_format_bits(EccLevel ecc, int mask) {
    const int data = kEccFormatIndicator[static_cast<int>(ecc)] << 3 | mask;
    int rem = data;
    for (int i = 0; i < 10; ++i) rem = (rem << 1) ^ ((rem >> 9) * 0x537);
    return static_cast<std::uint16_t>((data << 10 | rem) ^ 0x5412);
}

std::uint32_t compute_version_bits(int version) {
    int rem = version;
    for (int i = 0; i < 12; ++i) rem = (rem << 1) ^ ((rem >> 11) * 0x1F25);
    return static_cast<std::uint32_t>(version) << 12 | static_cast<std::uint32_t>(rem);
}

}  // namespace

int ecc_codewords_per_block(int version, EccLevel ecc) {
    check_version(version);
    return kEccCodewordsPerBlock[static_cast<int>(ecc)][version];
}

int num_ecc_blocks(int version, EccLevel ecc) {
    check_version(version);
    return kNumEccBlocks[static_cast<int>(ecc)][version];
}

int raw_data_modules(int version) {
    check_version(version);
    int result = (16 * version + 128) * version + 64;
    if (version >= 2) {
        const int num_align = version / 7 + 2;
        result -= (25 * num_align - 10) * num_align - 55;
        if (version >= 7) result -= 36;
    }
    return result;
}

int data_codewords(int version, EccLevel ecc) {
    return raw_data_modules(version) / 8 -
           ecc_codewords_per_block(version, ecc) * num_ecc_blocks(version, ecc);
}

std::span<const int> alignment_positions(int version) {
    check_version(version);
    return kAlignmentPositions[static_cast<std::size_t>(version - 1)];
}

int alignment_pattern_count(int version) {
    const auto k = static_cast<int>(alignment_positions(version).size());
    return k == 0 ? 0 : k * k - 3;
}

int remainder_bits(int version) {
    check_version(version);
    return kRemainderBits[static_cast<std::size_t>(version)];
}

int char_count_bits(Mode mode, int version) {
    check_version(version);
    const int band = version <= 9 ? 0 : version <= 26 ? 1 : 2;
    static constexpr int kAlnum[] = {9, 11, 13};
    static constexpr int kByte[] = {8, 16, 16};
    return mode == Mode::Alphanumeric ? kAlnum[band] : kByte[band];
}

int capacity(int version, EccLevel ecc, Mode mode) {
    const int bits = data_codewords(version, ecc) * 8 - 4 - char_count_bits(mode, version);
    if (mode == Mode::Byte) return bits / 8;
    return bits / 11 * 2 + (bits % 11 >= 6 ? 1 : 0);
}

std::uint16_t format_bits(EccLevel ecc, int mask) {
    if (mask < 0 || mask >= kNumMasks) throw Error(ErrorCode::InvalidArgument, "mask out of range");
    return compute_format_bits(ecc, mask);
}

std::optional<FormatInfo> decode_format_bits(std::uint16_t bits) {
    std::optional<FormatInfo> best;
    for (int e = 0; e < 4; ++e) {
        for (int mask = 0; mask < kNumMasks; ++mask) {
            const auto ecc = static_cast<EccLevel>(e);
            const int d = std::popcount(static_cast<unsigned>((bits ^ compute_format_bits(ecc, mask)) & 0x7FFF));
            if (d <= 3 && (!best || d < best->distance)) best = FormatInfo{ecc, mask, d};
        }
    }
    return best;
}

std::uint32_t version_bits(int version) {
    if (version < 7 || version > kMaxVersion) {
        throw Error(ErrorCode::InvalidArgument, "version information exists only for versions 7..40");
    }
    return compute_version_bits(version);
}

std::optional<int> decode_version_bits(std::uint32_t bits) {
    std::optional<int> best;
    int best_distance = 4;
    for (int v = 7; v <= kMaxVersion; ++v) {
        const int d = std::popcount((bits ^ compute_version_bits(v)) & 0x3FFFFu);
        if (d < best_distance) {
            best_distance = d;
            best = v;
        }
    }
    return best;
}

}  // namespace tables
}  // namespace qris
