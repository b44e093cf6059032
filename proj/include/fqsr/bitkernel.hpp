#ifndef FQSR_BITKERNEL_HPP_
#define FQSR_BITKERNEL_HPP_

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "fqsr/tensor.hpp"

namespace fqsr {

namespace detail {

inline std::int64_t and_popcount(const BitVector& a, const BitVector& b) {
    const auto& wa = a.words();
    const auto& wb = b.words();
    std::int64_t count = 0;
    for (std::size_t i = 0; i < wa.size(); ++i)
        count += std::popcount(wa[i] & wb[i]);
    return count;
}

inline std::int64_t popcount(const BitVector& a) {
    std::int64_t count = 0;
    for (std::uint64_t w : a.words()) count += std::popcount(w);
    return count;
}

// Largest magnitude representable by a plane set with the given offset.
inline std::int64_t max_abs_value(int bits, std::int64_t offset) {
    const std::int64_t top = ((std::int64_t{1} << bits) - 1) + offset;
    return std::max(std::abs(offset), std::abs(top));
}

// Worst-case accumulator magnitude must stay below 2^62 so that sums of
// signed 64-bit partial products cannot wrap.
inline void check_accumulation(std::int64_t terms, std::int64_t max_a, std::int64_t max_b,
                               const char* op) {
    const __int128 worst = static_cast<__int128>(terms) * max_a * max_b;
    if (worst > (static_cast<__int128>(1) << 62))
        throw NumericError(std::string(op) + ": worst-case accumulation " +
                           std::to_string(terms) + " * " + std::to_string(max_a) + " * " +
                           std::to_string(max_b) + " exceeds 2^62");
}

}  // namespace detail

// Inner product of two binary vectors: popcount of the word-wise AND.
inline std::int64_t binary_dot(const BitVector& a, const BitVector& b) {
    if (a.nbits() != b.nbits())
        throw ShapeError("binary_dot: length " + std::to_string(a.nbits()) + " vs " +
                         std::to_string(b.nbits()));
    return detail::and_popcount(a, b);
}

// Exact integer dot product of two bit-plane tensors. Plane pairs contribute
// 2^(m+p) * popcount(a_m AND b_p); nonzero offsets add the cross terms
// off_b*sum(a') + off_a*sum(b') + n*off_a*off_b, where primes denote the
// stored unsigned magnitudes.
inline std::int64_t multibit_dot(const BitPlaneTensor& a, const BitPlaneTensor& b) {
    const std::int64_t n = a.shape.elems();
    if (n != b.shape.elems())
        throw ShapeError("multibit_dot: element count " + std::to_string(n) + " vs " +
                         std::to_string(b.shape.elems()));
    detail::check_accumulation(n, detail::max_abs_value(a.bits, a.signed_offset),
                               detail::max_abs_value(b.bits, b.signed_offset), "multibit_dot");
    std::int64_t acc = 0;
    for (int m = 0; m < a.bits; ++m)
        for (int p = 0; p < b.bits; ++p)
            acc += (std::int64_t{1} << (m + p)) *
                   detail::and_popcount(a.planes[static_cast<std::size_t>(m)],
                                        b.planes[static_cast<std::size_t>(p)]);
    if (b.signed_offset != 0) {
        std::int64_t sum_a = 0;
        for (int m = 0; m < a.bits; ++m)
            sum_a += (std::int64_t{1} << m) * detail::popcount(a.planes[static_cast<std::size_t>(m)]);
        acc += b.signed_offset * sum_a;
    }
    if (a.signed_offset != 0) {
        std::int64_t sum_b = 0;
        for (int p = 0; p < b.bits; ++p)
            sum_b += (std::int64_t{1} << p) * detail::popcount(b.planes[static_cast<std::size_t>(p)]);
        acc += a.signed_offset * sum_b;
    }
    acc += n * a.signed_offset * b.signed_offset;
    return acc;
}

namespace detail {

struct ConvDims {
    std::int64_t n, ci, h, w, co, kh, kw, ho, wo;
};

inline ConvDims conv_dims(const Shape& x, const Shape& w, int stride, int pad, const char* op) {
    if (stride < 1) throw ParamError(std::string(op) + ": stride must be >= 1");
    if (pad < 0) throw ParamError(std::string(op) + ": pad must be >= 0");
    if (x.c != w.c)
        throw ShapeError(std::string(op) + ": input channels " + std::to_string(x.c) +
                         " vs kernel channels " + std::to_string(w.c));
    ConvDims d{x.n, x.c, x.h, x.w, w.n, w.h, w.w, 0, 0};
    d.ho = (x.h + 2 * pad - w.h) / stride + 1;
    d.wo = (x.w + 2 * pad - w.w) / stride + 1;
    if (x.h + 2 * pad < w.h || x.w + 2 * pad < w.w)
        throw ShapeError(std::string(op) + ": kernel " + w.str() +
                         " larger than padded input " + x.str());
    return d;
}

}  // namespace detail

// Plain integer cross-correlation (no kernel flip), zero padding. Serves as
// the ground-truth pair for the bit-serial path.
inline AccumTensor conv2d_int_reference(const IntTensor& x, const IntTensor& w, int stride,
                                        int pad) {
    const auto d = detail::conv_dims(x.shape(), w.shape(), stride, pad, "conv2d_int_reference");
    std::int64_t max_x = 0, max_w = 0;
    for (std::int64_t i = 0; i < x.size(); ++i) max_x = std::max(max_x, std::abs(x[i]));
    for (std::int64_t i = 0; i < w.size(); ++i) max_w = std::max(max_w, std::abs(w[i]));
    detail::check_accumulation(d.ci * d.kh * d.kw, std::max<std::int64_t>(max_x, 1),
                               std::max<std::int64_t>(max_w, 1), "conv2d_int_reference");
    AccumTensor out(Shape{d.n, d.co, d.ho, d.wo});
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t o = 0; o < d.co; ++o)
            for (std::int64_t yo = 0; yo < d.ho; ++yo)
                for (std::int64_t xo = 0; xo < d.wo; ++xo) {
                    std::int64_t acc = 0;
                    for (std::int64_t c = 0; c < d.ci; ++c)
                        for (std::int64_t ky = 0; ky < d.kh; ++ky)
                            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                                const std::int64_t yi = yo * stride - pad + ky;
                                const std::int64_t xi = xo * stride - pad + kx;
                                if (yi < 0 || yi >= d.h || xi < 0 || xi >= d.w) continue;
                                acc += x(n, c, yi, xi) * w(o, c, ky, kx);
                            }
                    out(n, o, yo, xo) = acc;
                }
    return out;
}

// Bit-serial integer convolution over packed planes. Every output site is a
// multibit inner product over the receptive field; plane-pair popcounts give
// the unsigned part and the offset correction off_w*sum(x) + off_x*sum(w) +
// K*off_x*off_w is assembled per pixel from single-operand popcounts, with
// sum(w) and K restricted to in-bounds taps so zero padding contributes a
// true value of zero rather than the offset.
inline AccumTensor conv2d_bitserial(const BitPlaneTensor& x, const BitPlaneTensor& w, int stride,
                                    int pad) {
    const auto d = detail::conv_dims(x.shape, w.shape, stride, pad, "conv2d_bitserial");
    detail::check_accumulation(d.ci * d.kh * d.kw,
                               detail::max_abs_value(x.bits, x.signed_offset),
                               detail::max_abs_value(w.bits, w.signed_offset), "conv2d_bitserial");
    const std::int64_t taps = d.ci * d.kh * d.kw;

    // Re-pack each output channel's kernel as flat rows so window gathers
    // align tap-for-tap.
    std::vector<std::vector<BitVector>> wrow(static_cast<std::size_t>(d.co));
    for (std::int64_t o = 0; o < d.co; ++o) {
        auto& rows = wrow[static_cast<std::size_t>(o)];
        rows.assign(static_cast<std::size_t>(w.bits), BitVector(taps));
        for (int p = 0; p < w.bits; ++p)
            for (std::int64_t c = 0; c < d.ci; ++c)
                for (std::int64_t ky = 0; ky < d.kh; ++ky)
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const std::int64_t tap = (c * d.kh + ky) * d.kw + kx;
                        const std::int64_t src = w.shape.index(o, c, ky, kx);
                        if (w.planes[static_cast<std::size_t>(p)].get(src))
                            rows[static_cast<std::size_t>(p)].set(tap, true);
                    }
    }

    AccumTensor out(Shape{d.n, d.co, d.ho, d.wo});
    std::vector<BitVector> win(static_cast<std::size_t>(x.bits), BitVector(taps));
    BitVector valid(taps);
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t yo = 0; yo < d.ho; ++yo)
            for (std::int64_t xo = 0; xo < d.wo; ++xo) {
                for (auto& plane : win)
                    std::fill(plane.words().begin(), plane.words().end(), 0u);
                std::fill(valid.words().begin(), valid.words().end(), 0u);
                for (std::int64_t c = 0; c < d.ci; ++c)
                    for (std::int64_t ky = 0; ky < d.kh; ++ky)
                        for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                            const std::int64_t yi = yo * stride - pad + ky;
                            const std::int64_t xi = xo * stride - pad + kx;
                            if (yi < 0 || yi >= d.h || xi < 0 || xi >= d.w) continue;
                            const std::int64_t tap = (c * d.kh + ky) * d.kw + kx;
                            valid.set(tap, true);
                            const std::int64_t src = x.shape.index(n, c, yi, xi);
                            for (int m = 0; m < x.bits; ++m)
                                if (x.planes[static_cast<std::size_t>(m)].get(src))
                                    win[static_cast<std::size_t>(m)].set(tap, true);
                        }
                std::int64_t sum_x = 0;
                if (w.signed_offset != 0)
                    for (int m = 0; m < x.bits; ++m)
                        sum_x += (std::int64_t{1} << m)
                                 * detail::popcount(win[static_cast<std::size_t>(m)]);
                const std::int64_t in_bounds = detail::popcount(valid);
                for (std::int64_t o = 0; o < d.co; ++o) {
                    const auto& rows = wrow[static_cast<std::size_t>(o)];
                    std::int64_t acc = 0;
                    for (int m = 0; m < x.bits; ++m)
                        for (int p = 0; p < w.bits; ++p)
                            acc += (std::int64_t{1} << (m + p)) *
                                   detail::and_popcount(win[static_cast<std::size_t>(m)],
                                                        rows[static_cast<std::size_t>(p)]);
                    if (w.signed_offset != 0) acc += w.signed_offset * sum_x;
                    if (x.signed_offset != 0) {
                        std::int64_t sum_w = 0;
                        for (int p = 0; p < w.bits; ++p)
                            sum_w += (std::int64_t{1} << p) *
                                     detail::and_popcount(rows[static_cast<std::size_t>(p)], valid);
                        acc += x.signed_offset * sum_w;
                        acc += in_bounds * x.signed_offset * w.signed_offset;
                    }
                    out(n, o, yo, xo) = acc;
                }
            }
    return out;
}

}  // namespace fqsr

#endif  // FQSR_BITKERNEL_HPP_
