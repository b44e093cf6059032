#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <random>

#include "fqsr/bitkernel.hpp"

using namespace fqsr;

namespace {

BitVector from_mask(std::uint64_t mask, std::int64_t nbits) {
    BitVector v(nbits);
    for (std::int64_t i = 0; i < nbits; ++i)
        if ((mask >> i) & 1) v.set(i, true);
    return v;
}

IntTensor random_codes(Shape s, int bits, std::int64_t offset, std::mt19937_64& rng) {
    IntTensor t(s);
    const std::int64_t span = (std::int64_t{1} << bits);
    for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = offset + static_cast<std::int64_t>(rng() % span);
    return t;
}

}  // namespace

TEST_CASE("binary_dot counts shared set bits") {
    REQUIRE(binary_dot(from_mask(0b1011, 4), from_mask(0b1101, 4)) == 2);
    REQUIRE(binary_dot(from_mask(0, 4), from_mask(0b1111, 4)) == 0);
    REQUIRE_THROWS_AS(binary_dot(from_mask(1, 4), from_mask(1, 5)), ShapeError);
}

TEST_CASE("binary_dot spans word boundaries") {
    BitVector a(130), b(130);
    a.set(0, true);
    a.set(64, true);
    a.set(129, true);
    b.set(64, true);
    b.set(129, true);
    REQUIRE(binary_dot(a, b) == 2);
}

TEST_CASE("multibit_dot scalar matches plain multiplication") {
    IntTensor a(Shape{1, 1, 1, 1}, {5});
    IntTensor b(Shape{1, 1, 1, 1}, {3});
    REQUIRE(multibit_dot(pack_bitplanes(a, 3), pack_bitplanes(b, 2)) == 15);
}

TEST_CASE("multibit_dot is exhaustive-exact for small widths") {
    for (int m = 1; m <= 4; ++m)
        for (int p = 1; p <= 4; ++p)
            for (std::int64_t va = 0; va < (std::int64_t{1} << m); ++va)
                for (std::int64_t vb = 0; vb < (std::int64_t{1} << p); ++vb) {
                    IntTensor a(Shape{1, 1, 1, 1}, {va});
                    IntTensor b(Shape{1, 1, 1, 1}, {vb});
                    REQUIRE(multibit_dot(pack_bitplanes(a, m), pack_bitplanes(b, p)) == va * vb);
                }
}

TEST_CASE("multibit_dot applies signed offset corrections") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int bits_a = 1 + static_cast<int>(rng() % 6);
        const int bits_b = 1 + static_cast<int>(rng() % 6);
        const std::int64_t off_a = (trial % 3 == 0) ? 0 : -((std::int64_t{1} << (bits_a - 1)));
        const std::int64_t off_b = (trial % 2 == 0) ? 0 : -((std::int64_t{1} << (bits_b - 1)));
        Shape s{1, 1, 1, 1 + static_cast<std::int64_t>(rng() % 90)};
        IntTensor a = random_codes(s, bits_a, off_a, rng);
        IntTensor b = random_codes(s, bits_b, off_b, rng);
        std::int64_t want = 0;
        for (std::int64_t i = 0; i < s.elems(); ++i) want += a[i] * b[i];
        // Offsets shift the span, so one extra plane covers it.
        const std::int64_t got =
            multibit_dot(pack_bitplanes(a, bits_a + 1, off_a), pack_bitplanes(b, bits_b + 1, off_b));
        REQUIRE(got == want);
    }
}

TEST_CASE("multibit_dot rejects mismatched element counts and overflow risk") {
    IntTensor a(Shape{1, 1, 1, 2}, {1, 1});
    IntTensor b(Shape{1, 1, 1, 3}, {1, 1, 1});
    REQUIRE_THROWS_AS(multibit_dot(pack_bitplanes(a, 1), pack_bitplanes(b, 1)), ShapeError);

    IntTensor big(Shape{1, 1, 1, 1}, {(std::int64_t{1} << 32) - 1});
    auto bp = pack_bitplanes(big, 32);
    REQUIRE_THROWS_AS(multibit_dot(bp, bp), NumericError);
}

TEST_CASE("integer reference convolution against hand-worked cases") {
    // 3x3 ramp, 2x2 kernel picking main-diagonal taps.
    IntTensor x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    IntTensor w(Shape{1, 1, 2, 2}, {1, 0, 0, 1});
    AccumTensor y = conv2d_int_reference(x, w, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    REQUIRE(y(0, 0, 0, 0) == 6);
    REQUIRE(y(0, 0, 0, 1) == 8);
    REQUIRE(y(0, 0, 1, 0) == 12);
    REQUIRE(y(0, 0, 1, 1) == 14);

    // Zero padding truncates the window to the in-bounds taps.
    IntTensor ones(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
    IntTensor k3(Shape{1, 1, 3, 3}, std::vector<std::int64_t>(9, 1));
    AccumTensor yp = conv2d_int_reference(ones, k3, 1, 1);
    REQUIRE(yp.shape() == Shape{1, 1, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) REQUIRE(yp[i] == 4);
}

TEST_CASE("convolution is cross-correlation, not flipped") {
    IntTensor x(Shape{1, 1, 1, 2}, {1, 0});
    IntTensor w(Shape{1, 1, 1, 2}, {2, 3});
    AccumTensor y = conv2d_int_reference(x, w, 1, 0);
    REQUIRE(y.size() == 1);
    REQUIRE(y[0] == 2);
}

TEST_CASE("reference convolution shape and parameter errors") {
    IntTensor x(Shape{1, 2, 4, 4});
    IntTensor w_badc(Shape{1, 3, 3, 3});
    REQUIRE_THROWS_AS(conv2d_int_reference(x, w_badc, 1, 1), ShapeError);
    IntTensor w(Shape{1, 2, 3, 3});
    REQUIRE_THROWS_AS(conv2d_int_reference(x, w, 0, 1), ParamError);
    REQUIRE_THROWS_AS(conv2d_int_reference(x, w, 1, -1), ParamError);
    IntTensor w_big(Shape{1, 2, 9, 9});
    REQUIRE_THROWS_AS(conv2d_int_reference(x, w_big, 1, 1), ShapeError);
}

TEST_CASE("bit-serial convolution equals the integer reference") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const int xbits = 1 + static_cast<int>(rng() % 8);
        const int wbits = 1 + static_cast<int>(rng() % 8);
        const bool x_signed = (rng() % 2) == 0;
        const bool w_signed = (rng() % 2) == 0;
        const std::int64_t off_x = x_signed ? -((std::int64_t{1} << xbits) - 1) : 0;
        const std::int64_t off_w = w_signed ? -((std::int64_t{1} << wbits) - 1) : 0;
        const int stride = 1 + static_cast<int>(rng() % 2);
        const int pad = static_cast<int>(rng() % 3);
        const std::int64_t kh = 1 + static_cast<std::int64_t>(rng() % 3);
        const std::int64_t kw = 1 + static_cast<std::int64_t>(rng() % 3);
        Shape xs{1 + static_cast<std::int64_t>(rng() % 2), 1 + static_cast<std::int64_t>(rng() % 4),
                 kh + static_cast<std::int64_t>(rng() % 6), kw + static_cast<std::int64_t>(rng() % 6)};
        Shape ws{1 + static_cast<std::int64_t>(rng() % 4), xs.c, kh, kw};

        IntTensor x = random_codes(xs, xbits, off_x, rng);
        IntTensor w = random_codes(ws, wbits, off_w, rng);
        const int planes_x = x_signed ? xbits + 1 : xbits;
        const int planes_w = w_signed ? wbits + 1 : wbits;

        AccumTensor want = conv2d_int_reference(x, w, stride, pad);
        AccumTensor got = conv2d_bitserial(pack_bitplanes(x, planes_x, off_x),
                                           pack_bitplanes(w, planes_w, off_w), stride, pad);
        REQUIRE(got.shape() == want.shape());
        REQUIRE(got.data() == want.data());
    }
}

TEST_CASE("bit-serial convolution validates shapes like the reference") {
    IntTensor x(Shape{1, 2, 4, 4});
    IntTensor w(Shape{1, 3, 3, 3});
    REQUIRE_THROWS_AS(
        conv2d_bitserial(pack_bitplanes(x, 2), pack_bitplanes(w, 2), 1, 1), ShapeError);
}
