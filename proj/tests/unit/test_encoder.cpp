#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/qr_tables.hpp"

using namespace qris;

namespace {

std::string slurp(const std::string& name) {
    std::ifstream in(std::string(QRIS_TEST_DATA) + "/" + name, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Plain shift-and-add multiply in GF(256) with x^8+x^4+x^3+x^2+1.
std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
    std::uint8_t out = 0;
    while (b) {
        if (b & 1) out ^= a;
        const bool carry = a & 0x80;
        a = static_cast<std::uint8_t>(a << 1);
        if (carry) a ^= 0x1D;
        b >>= 1;
    }
    return out;
}

std::vector<std::uint8_t> rs_oracle(const std::vector<std::uint8_t>& data, int degree) {
    // generator = prod (x - 2^i), i < degree; coefficients highest first
    std::vector<std::uint8_t> gen{1};
    std::uint8_t root = 1;
    for (int i = 0; i < degree; ++i) {
        std::vector<std::uint8_t> next(gen.size() + 1, 0);
        for (std::size_t j = 0; j < gen.size(); ++j) {
            next[j] ^= gen[j];
            next[j + 1] ^= gf_mul(gen[j], root);
        }
        gen = next;
        root = gf_mul(root, 2);
    }
    std::vector<std::uint8_t> rem(data);
    rem.resize(data.size() + static_cast<std::size_t>(degree), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint8_t f = rem[i];
        if (!f) continue;
        for (std::size_t j = 0; j < gen.size(); ++j) rem[i + j] ^= gf_mul(gen[j], f);
    }
    return {rem.end() - degree, rem.end()};
}

int bch_remainder(int value, int poly, int poly_degree) {
    for (int bit = 31; bit >= poly_degree; --bit) {
        if (value & (1 << bit)) value ^= poly << (bit - poly_degree);
    }
    return value;
}

int ecc_indicator(EccLevel e) {
    switch (e) {
        case EccLevel::L: return 1;
        case EccLevel::M: return 0;
        case EccLevel::Q: return 3;
        case EccLevel::H: return 2;
    }
    return -1;
}

constexpr EccLevel kLevels[] = {EccLevel::L, EccLevel::M, EccLevel::Q, EccLevel::H};

}  // namespace

TEST_CASE("HELLO WORLD at 1-Q produces the reference codewords") {
    const auto data = make_data_codewords("HELLO WORLD", 1, EccLevel::Q, Mode::Alphanumeric);
    const std::vector<std::uint8_t> expected_data{0x20, 0x5B, 0x0B, 0x78, 0xD1, 0x72, 0xDC,
                                                  0x4D, 0x43, 0x40, 0xEC, 0x11, 0xEC};
    CHECK(data == expected_data);
    const auto all = add_ecc_and_interleave(data, 1, EccLevel::Q);
    const std::vector<std::uint8_t> expected_ecc{0xA8, 0x48, 0x16, 0x52, 0xD9, 0x36, 0x9C,
                                                 0x00, 0x2E, 0x0F, 0xB4, 0x7A, 0x10};
    REQUIRE(all.size() == 26);
    CHECK(std::vector<std::uint8_t>(all.begin() + 13, all.end()) == expected_ecc);
}

TEST_CASE("Reed-Solomon remainder matches polynomial long division") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int degree = 7 + static_cast<int>(rng() % 24);
        std::vector<std::uint8_t> data(1 + rng() % 120);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        CHECK(reed_solomon_remainder(data, degree) == rs_oracle(data, degree));
    }
}

TEST_CASE("golden symbols match the reference encoder bit for bit") {
    struct Case {
        const char* file;
        const char* payload;
        int version;
        EccLevel ecc;
        int mask;
        Mode mode;
    };
    const Case cases[] = {
        {"golden_v1_Q_m6_alnum.txt", "HELLO WORLD", 1, EccLevel::Q, 6, Mode::Alphanumeric},
        {"golden_v2_L_m3_byte.txt", "https://www.drivesmartbc.ca/", 2, EccLevel::L, 3, Mode::Byte},
        {"golden_v7_L_m5_byte.txt", "https://example.org/account/verify?session=4f9a2c7e1b&redirect=%2Fhome", 7,
         EccLevel::L, 5, Mode::Byte},
    };
    for (const auto& c : cases) {
        CAPTURE(c.file);
        const auto m = encode_with(c.payload, ForcedEncoding{c.version, c.ecc, c.mode, c.mask});
        CHECK(dump_grid(m.grid) == slurp(c.file));
    }
}

TEST_CASE("capacity table spot values") {
    using tables::capacity;
    CHECK(capacity(1, EccLevel::L, Mode::Byte) == 17);
    CHECK(capacity(1, EccLevel::H, Mode::Byte) == 7);
    CHECK(capacity(1, EccLevel::L, Mode::Alphanumeric) == 25);
    CHECK(capacity(1, EccLevel::Q, Mode::Alphanumeric) == 16);
    CHECK(capacity(2, EccLevel::L, Mode::Byte) == 32);
    CHECK(capacity(2, EccLevel::M, Mode::Byte) == 26);
    CHECK(capacity(2, EccLevel::Q, Mode::Byte) == 20);
    CHECK(capacity(10, EccLevel::M, Mode::Byte) == 213);
    CHECK(capacity(40, EccLevel::L, Mode::Byte) == 2953);
    CHECK(capacity(40, EccLevel::H, Mode::Byte) == 1273);
    CHECK(capacity(40, EccLevel::L, Mode::Alphanumeric) == 4296);
}

TEST_CASE("capacity is monotone in version and ECC") {
    for (Mode mode : {Mode::Byte, Mode::Alphanumeric}) {
        for (int v = 1; v <= 40; ++v) {
            for (int e = 0; e < 3; ++e) {
                CHECK(tables::capacity(v, kLevels[e], mode) > tables::capacity(v, kLevels[e + 1], mode));
            }
            if (v > 1) {
                for (auto e : kLevels) CHECK(tables::capacity(v, e, mode) > tables::capacity(v - 1, e, mode));
            }
        }
    }
}

TEST_CASE("remainder bits and alignment counts") {
    for (int v = 1; v <= 40; ++v) {
        CAPTURE(v);
        CHECK(tables::remainder_bits(v) == tables::raw_data_modules(v) % 8);
        const int k = v == 1 ? 0 : v / 7 + 2;
        CHECK(static_cast<int>(tables::alignment_positions(v).size()) == k);
        CHECK(tables::alignment_pattern_count(v) == (k == 0 ? 0 : k * k - 3));
        // ISO raw module formula
        const int side = 17 + 4 * v;
        int raw = side * side - 3 * 64 - 2 * (side - 16) - 31 - (v >= 7 ? 36 : 0);
        if (k > 0) raw -= 25 * (k * k - 3) - 10 * (k - 2);
        CHECK(tables::raw_data_modules(v) == raw);
    }
    CHECK(tables::remainder_bits(1) == 0);
    CHECK(tables::remainder_bits(2) == 7);
    CHECK(tables::remainder_bits(14) == 3);
    CHECK(tables::remainder_bits(21) == 4);
    CHECK(tables::remainder_bits(40) == 0);
}

TEST_CASE("format bits follow BCH(15,5) with the 0x5412 mask") {
    for (auto e : kLevels) {
        for (int mask = 0; mask < 8; ++mask) {
            const int data = (ecc_indicator(e) << 3) | mask;
            const int expected = ((data << 10) | bch_remainder(data << 10, 0x537, 10)) ^ 0x5412;
            CHECK(tables::format_bits(e, mask) == expected);
        }
    }
    CHECK(tables::format_bits(EccLevel::L, 0) == 0b111011111000100);
}

TEST_CASE("version bits follow BCH(18,6)") {
    CHECK(tables::version_bits(7) == 0x07C94);
    CHECK(tables::version_bits(40) == 0x28C69);
    for (int v = 7; v <= 40; ++v) {
        CHECK(static_cast<int>(tables::version_bits(v)) == ((v << 12) | bch_remainder(v << 12, 0x1F25, 12)));
        CHECK(tables::decode_version_bits(tables::version_bits(v)) == v);
    }
}

TEST_CASE("mode selection and sizing") {
    CHECK(select_mode("HELLO WORLD") == Mode::Alphanumeric);
    CHECK(select_mode("https://example.com") == Mode::Byte);
    CHECK(select_mode("HTTPS://EXAMPLE.COM/A") == Mode::Alphanumeric);

    const std::string url = "https://www.drivesmartbc.ca/";
    CHECK(smallest_version(url, Mode::Byte, EccLevel::L) == 2);
    CHECK(feasible_ecc_levels(url, Mode::Byte, 2) == std::vector<EccLevel>{EccLevel::L});
    const std::string upper = "HTTPS://WWW.DRIVESMARTBC.CA/";
    CHECK(smallest_version(upper, Mode::Alphanumeric, EccLevel::L) == 2);
    CHECK(feasible_ecc_levels(upper, Mode::Alphanumeric, 2) ==
          std::vector<EccLevel>{EccLevel::L, EccLevel::M, EccLevel::Q});
}

TEST_CASE("encode errors") {
    CHECK_THROWS_AS(encode(""), Error);
    try {
        encode(std::string(3000, 'a'));
        FAIL("expected PayloadTooLong");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PayloadTooLong);
    }
    CHECK_THROWS_AS(encode_with("abc", ForcedEncoding{41, EccLevel::L, std::nullopt, std::nullopt}), Error);
    CHECK_THROWS_AS(encode_with("abc", ForcedEncoding{1, EccLevel::L, std::nullopt, 8}), Error);
}

TEST_CASE("automatic mask is the minimum-penalty mask") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const std::string payload = "https://host" + std::to_string(rng() % 100000) + ".example/" +
                                    std::string(rng() % 200, static_cast<char>('a' + rng() % 26));
        const auto m = encode(payload, std::nullopt, rng());
        long best = -1;
        int best_mask = -1;
        for (int mask = 0; mask < 8; ++mask) {
            const auto forced = encode_with(payload, ForcedEncoding{m.params.version, m.params.ecc, m.params.mode, mask});
            const long p = mask_penalty(forced.grid);
            if (best_mask < 0 || p < best) {
                best = p;
                best_mask = mask;
            }
        }
        CHECK(m.params.mask == best_mask);
    }
}

TEST_CASE("seeded ECC choice is deterministic and feasible") {
    const std::string url = "https://example.com/a";
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto a = encode(url, std::nullopt, seed);
        const auto b = encode(url, std::nullopt, seed);
        CHECK(a.grid == b.grid);
        const auto levels = feasible_ecc_levels(url, Mode::Byte, a.params.version);
        CHECK(std::find(levels.begin(), levels.end(), a.params.ecc) != levels.end());
        CHECK(a.params.version == smallest_version(url, Mode::Byte, EccLevel::L));
    }
}

TEST_CASE("function patterns are in place for every version") {
    for (int v = 1; v <= 40; ++v) {
        const auto m = encode_with("x", ForcedEncoding{v, EccLevel::M, std::nullopt, 0});
        const int n = m.side();
        REQUIRE(n == 17 + 4 * v);
        for (auto [r0, c0] : {std::pair{0, 0}, std::pair{0, n - 7}, std::pair{n - 7, 0}}) {
            for (int r = 0; r < 7; ++r) {
                for (int c = 0; c < 7; ++c) {
                    const bool ring = r == 0 || r == 6 || c == 0 || c == 6;
                    const bool core = r >= 2 && r <= 4 && c >= 2 && c <= 4;
                    CHECK(m.grid.at(r0 + r, c0 + c) == (ring || core ? 1 : 0));
                }
            }
        }
        for (int i = 8; i < n - 8; ++i) {
            CHECK(m.grid.at(6, i) == (i % 2 == 0 ? 1 : 0));
            CHECK(m.grid.at(i, 6) == (i % 2 == 0 ? 1 : 0));
        }
        CHECK(m.grid.at(4 * v + 9, 8) == 1);
    }
}
