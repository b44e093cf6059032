#ifndef FQSR_QUANTIZER_HPP_
#define FQSR_QUANTIZER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "fqsr/tensor.hpp"

namespace fqsr {

// Learned-interval uniform quantizer. The clip range is (0,1) for unsigned
// data and (-1,1) for signed data, scaled by the interval I; codes land on
// the lattice {k * I / (2^bits - 1)}. The interval is calibrated by a
// warm-up that averages per-batch maxima over the first warmup_target
// batches, then freezes.
struct QuantParams {
    int bits = 8;
    bool is_signed = false;
    double interval = 0.0;
    int warmup_target = 1;
    double warmup_sum = 0.0;
    int warmup_seen = 0;
    bool frozen = false;
};

inline std::int64_t quant_levels(const QuantParams& p) {
    return (std::int64_t{1} << p.bits) - 1;
}

inline double quant_lo(const QuantParams& p) { return p.is_signed ? -1.0 : 0.0; }
inline double quant_hi(const QuantParams&) { return 1.0; }

// Lattice step in value units.
inline double quant_scale(const QuantParams& p) {
    return p.interval / static_cast<double>(quant_levels(p));
}

inline void check_ready(const QuantParams& p, const char* op) {
    if (p.bits < 1 || p.bits > 8)
        throw ParamError(std::string(op) + ": bits must be in [1,8], got " + std::to_string(p.bits));
    if (!p.frozen)
        throw StateError(std::string(op) + ": interval warm-up not complete");
    if (!(p.interval > 0.0))
        throw StateError(std::string(op) + ": interval must be positive, got " +
                         std::to_string(p.interval));
}

// Rounding is half away from zero everywhere (std::round), so codes of +-x
// are symmetric for signed data.
inline std::int64_t integer_code_value(double v, const QuantParams& p) {
    const double k = static_cast<double>(quant_levels(p));
    const double u = std::clamp(v / p.interval, quant_lo(p), quant_hi(p));
    return static_cast<std::int64_t>(std::round(u * k));
}

inline double quantize_value(double v, const QuantParams& p) {
    const double k = static_cast<double>(quant_levels(p));
    const double u = std::clamp(v / p.interval, quant_lo(p), quant_hi(p));
    return std::round(u * k) * (p.interval / k);
}

inline RealTensor quantize(const RealTensor& v, const QuantParams& p) {
    check_ready(p, "quantize");
    RealTensor out(v.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) out[i] = quantize_value(v[i], p);
    return out;
}

inline IntTensor integer_code(const RealTensor& v, const QuantParams& p) {
    check_ready(p, "integer_code");
    IntTensor out(v.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) out[i] = integer_code_value(v[i], p);
    return out;
}

// One warm-up step: record max(batch) (unsigned) or max(|batch|) (signed).
// After warmup_target batches the interval becomes the mean of the recorded
// maxima and the quantizer freezes; further calls are a state error.
inline void init_interval_warmup(QuantParams& p, const RealTensor& batch) {
    if (p.frozen)
        throw StateError("init_interval_warmup: quantizer already frozen");
    if (p.warmup_target < 1)
        throw ParamError("init_interval_warmup: warm-up length must be >= 1");
    if (batch.size() == 0)
        throw ShapeError("init_interval_warmup: empty batch");
    double m = p.is_signed ? 0.0 : batch[0];
    for (std::int64_t i = 0; i < batch.size(); ++i) {
        const double v = p.is_signed ? std::abs(batch[i]) : batch[i];
        m = std::max(m, v);
    }
    p.warmup_sum += m;
    p.warmup_seen += 1;
    if (p.warmup_seen == p.warmup_target) {
        // Floor keeps the interval positive when a site saw only zeros.
        p.interval = std::max(p.warmup_sum / p.warmup_target, 1e-8);
        p.frozen = true;
    }
}

struct QuantGrad {
    RealTensor input;
    double interval = 0.0;
};

// Straight-through estimator: the input gradient passes inside the clip
// range and is zero outside; the interval gradient is the clip bound in the
// saturated regions and (q - u) inside, with u = v/I and q = round(u*K)/K.
inline QuantGrad quantize_backward(const RealTensor& v, const QuantParams& p,
                                   const RealTensor& upstream) {
    check_ready(p, "quantize_backward");
    if (v.shape() != upstream.shape())
        throw ShapeError("quantize_backward: value shape " + v.shape().str() +
                         " vs upstream shape " + upstream.shape().str());
    const double k = static_cast<double>(quant_levels(p));
    const double lo = quant_lo(p);
    const double hi = quant_hi(p);
    QuantGrad g{RealTensor(v.shape()), 0.0};
    for (std::int64_t i = 0; i < v.size(); ++i) {
        const double u = v[i] / p.interval;
        if (u <= lo) {
            g.interval += upstream[i] * lo;
        } else if (u >= hi) {
            g.interval += upstream[i] * hi;
        } else {
            g.input[i] = upstream[i];
            const double q = std::round(u * k) / k;
            g.interval += upstream[i] * (q - u);
        }
    }
    return g;
}

enum class SqclNorm { l1, l2 };

// Calibration loss: mean-normalized p-norm of the quantization residual
// Q(v) - v over one site.
inline double sqcl_loss(const RealTensor& v, const QuantParams& p, SqclNorm norm = SqclNorm::l1) {
    check_ready(p, "sqcl_loss");
    if (v.size() == 0) throw ShapeError("sqcl_loss: empty tensor");
    double acc = 0.0;
    for (std::int64_t i = 0; i < v.size(); ++i) {
        const double d = quantize_value(v[i], p) - v[i];
        acc += (norm == SqclNorm::l1) ? std::abs(d) : d * d;
    }
    acc /= static_cast<double>(v.size());
    return (norm == SqclNorm::l1) ? acc : std::sqrt(acc);
}

}  // namespace fqsr

#endif  // FQSR_QUANTIZER_HPP_
