#ifndef FQSR_TENSOR_HPP_
#define FQSR_TENSOR_HPP_

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fqsr/errors.hpp"

namespace fqsr {

// Rank-4 NCHW shape. Lower-rank data (bias vectors, single images) uses
// leading singleton dims.
struct Shape {
    std::int64_t n = 1;
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    std::int64_t elems() const { return n * c * h * w; }

    std::int64_t index(std::int64_t in, std::int64_t ic, std::int64_t ih, std::int64_t iw) const {
        return ((in * c + ic) * h + ih) * w + iw;
    }

    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape s) : shape_(s), data_(static_cast<std::size_t>(s.elems()), T{}) {
        if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
            throw ShapeError("tensor dims must be positive, got " + s.str());
    }

    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
            throw ShapeError("tensor dims must be positive, got " + s.str());
        if (static_cast<std::int64_t>(data_.size()) != s.elems())
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(shape_.index(n, c, h, w))];
    }
    const T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(shape_.index(n, c, h, w))];
    }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  private:
    Shape shape_;
    std::vector<T> data_;
};

using RealTensor = Tensor<double>;
using IntTensor = Tensor<std::int64_t>;
// Integer convolution accumulators; 64-bit so no intermediate saturates.
using AccumTensor = Tensor<std::int64_t>;

// Dense bit vector packed little-endian into 64-bit words: bit i lives in
// word i/64 at position i%64. Padding bits past nbits stay zero.
class BitVector {
  public:
    BitVector() = default;
    explicit BitVector(std::int64_t nbits)
        : nbits_(nbits), words_(static_cast<std::size_t>((nbits + 63) / 64), 0u) {}

    std::int64_t nbits() const { return nbits_; }
    std::int64_t word_count() const { return static_cast<std::int64_t>(words_.size()); }

    void set(std::int64_t i, bool v) {
        if (i < 0 || i >= nbits_)
            throw RangeError("bit index " + std::to_string(i) + " out of range [0," +
                             std::to_string(nbits_) + ")");
        const std::uint64_t mask = std::uint64_t{1} << (i % 64);
        if (v)
            words_[static_cast<std::size_t>(i / 64)] |= mask;
        else
            words_[static_cast<std::size_t>(i / 64)] &= ~mask;
    }

    bool get(std::int64_t i) const {
        if (i < 0 || i >= nbits_)
            throw RangeError("bit index " + std::to_string(i) + " out of range [0," +
                             std::to_string(nbits_) + ")");
        return (words_[static_cast<std::size_t>(i / 64)] >> (i % 64)) & 1u;
    }

    std::vector<std::uint64_t>& words() { return words_; }
    const std::vector<std::uint64_t>& words() const { return words_; }

  private:
    std::int64_t nbits_ = 0;
    std::vector<std::uint64_t> words_;
};

// Bit-plane decomposition of an integer tensor: plane m holds bit m of
// (value - signed_offset) for every element, in flat NCHW order. Signed
// ranges store the unsigned magnitude plus the offset; reconstruction adds
// the offset back.
struct BitPlaneTensor {
    Shape shape;
    int bits = 0;
    std::int64_t signed_offset = 0;
    std::vector<BitVector> planes;
};

inline BitPlaneTensor pack_bitplanes(const IntTensor& t, int bits, std::int64_t signed_offset = 0) {
    if (bits < 1 || bits > 62)
        throw ParamError("plane count must be in [1,62], got " + std::to_string(bits));
    const std::int64_t limit = (std::int64_t{1} << bits) - 1;
    BitPlaneTensor out;
    out.shape = t.shape();
    out.bits = bits;
    out.signed_offset = signed_offset;
    out.planes.assign(static_cast<std::size_t>(bits), BitVector(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const std::int64_t v = t[i] - signed_offset;
        if (v < 0 || v > limit)
            throw RangeError("element " + std::to_string(i) + " value " + std::to_string(t[i]) +
                             " outside [" + std::to_string(signed_offset) + "," +
                             std::to_string(limit + signed_offset) + "] for " +
                             std::to_string(bits) + " planes");
        for (int m = 0; m < bits; ++m) {
            if ((v >> m) & 1)
                out.planes[static_cast<std::size_t>(m)].set(i, true);
        }
    }
    return out;
}

inline IntTensor unpack_bitplanes(const BitPlaneTensor& bp) {
    if (bp.bits < 1 || static_cast<int>(bp.planes.size()) != bp.bits)
        throw ShapeError("bit-plane tensor holds " + std::to_string(bp.planes.size()) +
                         " planes, header says " + std::to_string(bp.bits));
    IntTensor out(bp.shape);
    for (std::int64_t i = 0; i < out.size(); ++i) {
        std::int64_t v = 0;
        for (int m = 0; m < bp.bits; ++m) {
            if (bp.planes[static_cast<std::size_t>(m)].get(i))
                v |= std::int64_t{1} << m;
        }
        out[i] = v + bp.signed_offset;
    }
    return out;
}

}  // namespace fqsr

#endif  // FQSR_TENSOR_HPP_
