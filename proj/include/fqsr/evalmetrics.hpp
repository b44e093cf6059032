#ifndef FQSR_EVALMETRICS_HPP_
#define FQSR_EVALMETRICS_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fqsr/errors.hpp"
#include "fqsr/tensor.hpp"

namespace fqsr {

// Image quality metrics. Images are (1, C, H, W) tensors with values in
// [0, 1]; both metrics quantize to the 8-bit [0, 255] grid first, since
// that is what ends up in files. `shave` crops a border of that many pixels
// before comparing (SR convention: shave = scale factor).

enum class MetricColor { rgb, y601 };

struct MetricResult {
    double psnr_db = 0;
    double ssim = 0;
    int shave = 0;
};

namespace detail {

inline double to_8bit(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return std::round(c * 255.0);
}

// Planes of 8-bit values after shaving; y601 reduces RGB to the BT.601 luma
// Y = 16 + (65.481 R + 128.553 G + 24.966 B) with RGB in [0, 1].
inline std::vector<std::vector<double>> metric_planes(const RealTensor& img, int shave,
                                                      MetricColor color, std::int64_t& out_h,
                                                      std::int64_t& out_w, const char* op) {
    const Shape s = img.shape();
    if (s.n != 1) throw ShapeError(std::string(op) + ": expected a single image, got batch of " +
                                   std::to_string(s.n));
    if (shave < 0) throw ParamError(std::string(op) + ": shave must be >= 0");
    if (s.h - 2 * static_cast<std::int64_t>(shave) < 1 ||
        s.w - 2 * static_cast<std::int64_t>(shave) < 1)
        throw ParamError(std::string(op) + ": shave " + std::to_string(shave) +
                         " leaves no pixels of a " + std::to_string(s.h) + "x" +
                         std::to_string(s.w) + " image");
    out_h = s.h - 2 * shave;
    out_w = s.w - 2 * shave;
    const bool luma = (color == MetricColor::y601) && s.c == 3;
    const std::int64_t planes = luma ? 1 : s.c;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(planes));
    for (auto& p : out) p.resize(static_cast<std::size_t>(out_h * out_w));
    for (std::int64_t y = 0; y < out_h; ++y)
        for (std::int64_t x = 0; x < out_w; ++x) {
            const std::int64_t i = y * out_w + x;
            if (luma) {
                const double r = to_8bit(img(0, 0, y + shave, x + shave)) / 255.0;
                const double g = to_8bit(img(0, 1, y + shave, x + shave)) / 255.0;
                const double b = to_8bit(img(0, 2, y + shave, x + shave)) / 255.0;
                out[0][static_cast<std::size_t>(i)] =
                    16.0 + 65.481 * r + 128.553 * g + 24.966 * b;
            } else {
                for (std::int64_t c = 0; c < planes; ++c)
                    out[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] =
                        to_8bit(img(0, c, y + shave, x + shave));
            }
        }
    return out;
}

inline void check_same_shape(const RealTensor& a, const RealTensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": image shapes differ, " + a.shape().str() + " vs " +
                         b.shape().str());
}

}  // namespace detail

inline double psnr(const RealTensor& sr, const RealTensor& hr, int shave,
                   MetricColor color = MetricColor::rgb) {
    detail::check_same_shape(sr, hr, "psnr");
    std::int64_t h = 0, w = 0;
    const auto a = detail::metric_planes(sr, shave, color, h, w, "psnr");
    const auto b = detail::metric_planes(hr, shave, color, h, w, "psnr");
    double se = 0;
    std::int64_t count = 0;
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p].size(); ++i) {
            const double d = a[p][i] - b[p][i];
            se += d * d;
            ++count;
        }
    const double mse = se / static_cast<double>(count);
    if (mse == 0.0) return 100.0;
    const double db = 10.0 * std::log10(255.0 * 255.0 / mse);
    return db > 100.0 ? 100.0 : db;
}

inline double ssim(const RealTensor& sr, const RealTensor& hr, int shave,
                   MetricColor color = MetricColor::rgb) {
    detail::check_same_shape(sr, hr, "ssim");
    std::int64_t h = 0, w = 0;
    const auto a = detail::metric_planes(sr, shave, color, h, w, "ssim");
    const auto b = detail::metric_planes(hr, shave, color, h, w, "ssim");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
    if (h < kWin || w < kWin)
        throw ParamError("ssim: shaved image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the 11x11 window");

    double window[kWin][kWin];
    double wsum = 0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - kWin / 2, dx = j - kWin / 2;
            window[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
            wsum += window[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) window[i][j] /= wsum;

    double total = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        double acc = 0;
        std::int64_t n = 0;
        for (std::int64_t y = 0; y + kWin <= h; ++y)
            for (std::int64_t x = 0; x + kWin <= w; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double wv = window[i][j];
                        const double va = a[p][static_cast<std::size_t>((y + i) * w + x + j)];
                        const double vb = b[p][static_cast<std::size_t>((y + i) * w + x + j)];
                        mx += wv * va;
                        my += wv * vb;
                        xx += wv * va * va;
                        yy += wv * vb * vb;
                        xy += wv * va * vb;
                    }
                const double vx = xx - mx * mx;
                const double vy = yy - my * my;
                const double cxy = xy - mx * my;
                acc += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
                       ((mx * mx + my * my + kC1) * (vx + vy + kC2));
                ++n;
            }
        total += acc / static_cast<double>(n);
    }
    return total / static_cast<double>(a.size());
}

inline MetricResult evaluate_pair(const RealTensor& sr, const RealTensor& hr, int shave,
                                  MetricColor color = MetricColor::rgb) {
    MetricResult r;
    r.psnr_db = psnr(sr, hr, shave, color);
    r.ssim = ssim(sr, hr, shave, color);
    r.shave = shave;
    return r;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

namespace detail {

// Keys cubic kernel with a = -0.5 (Catmull-Rom): an exact partition of
// unity, so no per-pixel weight normalization is needed.
inline double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

inline std::int64_t clamp_index(std::int64_t i, std::int64_t n) {
    return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

}  // namespace detail

// Separable bicubic resize (horizontal pass, then vertical) with edge
// clamping; destination pixel centers map back via (d + 0.5)/scale - 0.5.
// Values can overshoot [0, 1]; callers clamp when they quantize.
inline RealTensor bicubic_resize(const RealTensor& img, double scale) {
    if (!(scale > 0.0)) throw ParamError("bicubic_resize: scale must be positive");
    const Shape s = img.shape();
    const std::int64_t oh = std::max<std::int64_t>(1, std::llround(s.h * scale));
    const std::int64_t ow = std::max<std::int64_t>(1, std::llround(s.w * scale));

    RealTensor horiz(Shape{s.n, s.c, s.h, ow});
    for (std::int64_t x = 0; x < ow; ++x) {
        const double sx = (x + 0.5) / scale - 0.5;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx)) - 1;
        double wt[4];
        for (int t = 0; t < 4; ++t) wt[t] = detail::cubic_kernel(sx - (x0 + t));
        for (std::int64_t n = 0; n < s.n; ++n)
            for (std::int64_t c = 0; c < s.c; ++c)
                for (std::int64_t y = 0; y < s.h; ++y) {
                    double acc = 0;
                    for (int t = 0; t < 4; ++t)
                        acc += wt[t] * img(n, c, y, detail::clamp_index(x0 + t, s.w));
                    horiz(n, c, y, x) = acc;
                }
    }
    RealTensor out(Shape{s.n, s.c, oh, ow});
    for (std::int64_t y = 0; y < oh; ++y) {
        const double sy = (y + 0.5) / scale - 0.5;
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy)) - 1;
        double wt[4];
        for (int t = 0; t < 4; ++t) wt[t] = detail::cubic_kernel(sy - (y0 + t));
        for (std::int64_t n = 0; n < s.n; ++n)
            for (std::int64_t c = 0; c < s.c; ++c)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = 0;
                    for (int t = 0; t < 4; ++t)
                        acc += wt[t] * horiz(n, c, detail::clamp_index(y0 + t, s.h), x);
                    out(n, c, y, x) = acc;
                }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dihedral transforms and self-ensemble

inline RealTensor rot90_cw(const RealTensor& t) {
    const Shape s = t.shape();
    RealTensor out(Shape{s.n, s.c, s.w, s.h});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.w; ++y)
                for (std::int64_t x = 0; x < s.h; ++x) out(n, c, y, x) = t(n, c, s.h - 1 - x, y);
    return out;
}

inline RealTensor hflip(const RealTensor& t) {
    const Shape s = t.shape();
    RealTensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) out(n, c, y, x) = t(n, c, y, s.w - 1 - x);
    return out;
}

// Averages the model over the 8 dihedral transforms: run each transformed
// input through `model`, undo the transform on the output, take the mean.
inline RealTensor self_ensemble(const std::function<RealTensor(const RealTensor&)>& model,
                                const RealTensor& lr) {
    RealTensor sum;
    for (int k = 0; k < 8; ++k) {
        RealTensor x = lr;
        if (k >= 4) x = hflip(x);
        for (int r = 0; r < k % 4; ++r) x = rot90_cw(x);
        RealTensor y = model(x);
        for (int r = 0; r < (4 - k % 4) % 4; ++r) y = rot90_cw(y);
        if (k >= 4) y = hflip(y);
        if (k == 0) {
            sum = std::move(y);
        } else {
            if (y.shape() != sum.shape())
                throw ShapeError("self_ensemble: model output shape varies across transforms");
            for (std::int64_t i = 0; i < sum.size(); ++i) sum[i] += y[i];
        }
    }
    for (std::int64_t i = 0; i < sum.size(); ++i) sum[i] /= 8.0;
    return sum;
}

}  // namespace fqsr

#endif  // FQSR_EVALMETRICS_HPP_
