#ifndef FQSR_NETGRAPH_HPP_
#define FQSR_NETGRAPH_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fqsr/bitkernel.hpp"
#include "fqsr/quantizer.hpp"
#include "fqsr/tensor.hpp"

namespace fqsr {

enum class LayerKind { conv, bn, relu, prelu, pixel_shuffle, add };
enum class ModuleTag { head, body, tail };  // feature extraction / mapping / reconstruction
enum class ArchName { srresnet, edsr, srgan_gen };
enum class ForwardMode { float_ref, fake_quant, integer };

// Bit widths for weights, feature maps and skip connections; 32 means keep
// that group in full precision (no quantizer is registered for it).
struct BitConfig {
    int wt = 32;
    int fm = 32;
    int sc = 32;
};

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    ModuleTag tag = ModuleTag::body;
    // conv
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
    bool has_bias = true;
    int weight_q = -1;  // quantizer ids into the registry, -1 = identity
    int act_q = -1;
    // pixel_shuffle
    int shuffle_r = 0;
    // add: x operand comes from an earlier layer's output
    int skip_source = -1;
    int add_qx = -1, add_qz = -1, add_qy = -1;
};

struct QuantSite {
    int bits = 8;
    bool is_signed = true;
};

struct ModelSpec {
    ArchName arch = ArchName::srresnet;
    int scale = 2;
    int blocks = 16;
    int channels = 64;
    BitConfig bitcfg;
    std::vector<LayerSpec> layers;
    std::vector<QuantSite> quant_sites;
};

struct LayerParams {
    RealTensor w;  // conv weights (out, in, k, k)
    std::vector<double> bias;
    std::vector<double> gamma, beta, mean, var;  // frozen-statistics bn
    double prelu_slope = 0.25;
};

struct ModelParams {
    std::vector<LayerParams> layers;
    std::vector<QuantParams> quants;
};

inline const char* arch_name(ArchName a) {
    switch (a) {
        case ArchName::srresnet: return "srresnet";
        case ArchName::edsr: return "edsr";
        case ArchName::srgan_gen: return "srgan_gen";
    }
    return "?";
}

inline ArchName arch_from_name(const std::string& s) {
    if (s == "srresnet") return ArchName::srresnet;
    if (s == "edsr") return ArchName::edsr;
    if (s == "srgan_gen") return ArchName::srgan_gen;
    throw ConfigError("unknown arch '" + s + "' (srresnet|edsr|srgan_gen)");
}

// ---------------------------------------------------------------------------
// Model construction

inline void check_bits(int bits, const char* which) {
    if (bits == 32) return;
    if (bits < 1 || bits > 8)
        throw ConfigError(std::string(which) + " bits must be 1..8 or 32, got " +
                          std::to_string(bits));
}

// SRResNet-family generator: a 9x9 head conv, `blocks` two-conv residual
// blocks plus one trailing conv closed by a long skip, and a pixel-shuffle
// tail (one 4x-channel conv per x2 stage) ending in a 9x9 output conv.
// blocks == 0 drops the whole body including the long skip. EDSR differs
// only by having no batch norm.
inline ModelSpec build_model(ArchName arch, int scale, BitConfig bitcfg, int blocks = 16,
                             int channels = 64) {
    if (scale != 2 && scale != 4)
        throw ParamError("scale must be 2 or 4, got " + std::to_string(scale));
    if (blocks < 0) throw ParamError("blocks must be >= 0");
    if (channels < 1) throw ParamError("channels must be >= 1");
    check_bits(bitcfg.wt, "weight");
    check_bits(bitcfg.fm, "feature-map");
    check_bits(bitcfg.sc, "skip");
    const bool with_bn = (arch != ArchName::edsr);

    ModelSpec spec;
    spec.arch = arch;
    spec.scale = scale;
    spec.blocks = blocks;
    spec.channels = channels;
    spec.bitcfg = bitcfg;

    auto reg = [&spec](int bits, bool is_signed) -> int {
        if (bits == 32) return -1;
        spec.quant_sites.push_back(QuantSite{bits, is_signed});
        return static_cast<int>(spec.quant_sites.size()) - 1;
    };

    // Tracks whether the tensor entering the next layer can be negative;
    // decides the signedness of feature-map quantizers.
    bool signed_input = false;  // network input is an image in [0,1]

    auto conv = [&](int in_ch, int out_ch, int k, ModuleTag tag) {
        LayerSpec l;
        l.kind = LayerKind::conv;
        l.tag = tag;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.kernel = k;
        l.pad = (k - 1) / 2;
        l.weight_q = reg(spec.bitcfg.wt, true);
        l.act_q = reg(spec.bitcfg.fm, signed_input);
        spec.layers.push_back(l);
        signed_input = true;
    };
    auto bn = [&](ModuleTag tag) {
        if (!with_bn) return;
        LayerSpec l;
        l.kind = LayerKind::bn;
        l.tag = tag;
        spec.layers.push_back(l);
        signed_input = true;
    };
    auto prelu = [&](ModuleTag tag) {
        LayerSpec l;
        l.kind = LayerKind::prelu;
        l.tag = tag;
        spec.layers.push_back(l);
        signed_input = true;
    };
    auto add = [&](int source, ModuleTag tag) {
        LayerSpec l;
        l.kind = LayerKind::add;
        l.tag = tag;
        l.skip_source = source;
        l.add_qx = reg(spec.bitcfg.sc, true);
        l.add_qz = reg(spec.bitcfg.sc, true);
        l.add_qy = reg(spec.bitcfg.sc, true);
        spec.layers.push_back(l);
        signed_input = true;
    };
    auto last = [&spec]() { return static_cast<int>(spec.layers.size()) - 1; };

    conv(3, channels, 9, ModuleTag::head);
    prelu(ModuleTag::head);
    const int head_out = last();

    if (blocks > 0) {
        for (int i = 0; i < blocks; ++i) {
            const int block_in = last();
            conv(channels, channels, 3, ModuleTag::body);
            bn(ModuleTag::body);
            prelu(ModuleTag::body);
            conv(channels, channels, 3, ModuleTag::body);
            bn(ModuleTag::body);
            add(block_in, ModuleTag::body);
        }
        conv(channels, channels, 3, ModuleTag::body);
        bn(ModuleTag::body);
        add(head_out, ModuleTag::body);  // the single long skip
    }

    for (int s = scale; s > 1; s /= 2) {
        conv(channels, channels * 4, 3, ModuleTag::tail);
        LayerSpec sh;
        sh.kind = LayerKind::pixel_shuffle;
        sh.tag = ModuleTag::tail;
        sh.shuffle_r = 2;
        spec.layers.push_back(sh);
        prelu(ModuleTag::tail);
    }
    conv(channels, 3, 9, ModuleTag::tail);
    return spec;
}

inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams params;
    params.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams& p = params.layers[i];
        if (l.kind == LayerKind::conv) {
            p.w = RealTensor(Shape{l.out_ch, l.in_ch, l.kernel, l.kernel});
            const double fan_in = static_cast<double>(l.in_ch) * l.kernel * l.kernel;
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (std::int64_t j = 0; j < p.w.size(); ++j) p.w[j] = dist(rng);
            p.bias.assign(static_cast<std::size_t>(l.out_ch), 0.0);
        } else if (l.kind == LayerKind::bn) {
            const int ch = spec.layers[i - 1].out_ch;
            p.gamma.assign(static_cast<std::size_t>(ch), 1.0);
            p.beta.assign(static_cast<std::size_t>(ch), 0.0);
            p.mean.assign(static_cast<std::size_t>(ch), 0.0);
            p.var.assign(static_cast<std::size_t>(ch), 1.0);
        } else if (l.kind == LayerKind::prelu) {
            p.prelu_slope = 0.25;
        }
    }
    for (const QuantSite& s : spec.quant_sites) {
        QuantParams q;
        q.bits = s.bits;
        q.is_signed = s.is_signed;
        params.quants.push_back(q);
    }
    return params;
}

// ---------------------------------------------------------------------------
// Primitive layer math

constexpr double kBnEps = 1e-5;

struct FoldedConv {
    RealTensor w;
    std::vector<double> bias;
};

// Absorbs a frozen-statistics batch norm into the preceding convolution:
// w' = g*w/sqrt(var+eps), b' = g*(b-mean)/sqrt(var+eps) + beta, per output
// channel.
inline FoldedConv fold_batchnorm(const RealTensor& w, const std::vector<double>& bias,
                                 const std::vector<double>& gamma, const std::vector<double>& beta,
                                 const std::vector<double>& mean, const std::vector<double>& var,
                                 double eps = kBnEps) {
    const std::size_t oc = static_cast<std::size_t>(w.shape().n);
    if (bias.size() != oc || gamma.size() != oc || beta.size() != oc || mean.size() != oc ||
        var.size() != oc)
        throw ShapeError("fold_batchnorm: per-channel vectors must have " + std::to_string(oc) +
                         " entries");
    FoldedConv out;
    out.w = RealTensor(w.shape());
    out.bias.resize(oc);
    const std::int64_t per_ch = w.size() / w.shape().n;
    for (std::size_t o = 0; o < oc; ++o) {
        if (!(var[o] + eps > 0.0))
            throw ParamError("fold_batchnorm: variance + eps must be positive at channel " +
                             std::to_string(o));
        const double r = gamma[o] / std::sqrt(var[o] + eps);
        for (std::int64_t j = 0; j < per_ch; ++j) {
            const std::int64_t idx = static_cast<std::int64_t>(o) * per_ch + j;
            out.w[idx] = w[idx] * r;
        }
        out.bias[o] = (bias[o] - mean[o]) * r + beta[o];
    }
    return out;
}

// Rearranges (N, C*r^2, H, W) into (N, C, H*r, W*r); input channel
// c*r^2 + dy*r + dx supplies output pixel (h*r+dy, w*r+dx) of channel c.
inline RealTensor pixel_shuffle(const RealTensor& x, int r) {
    const Shape s = x.shape();
    if (r < 1) throw ParamError("pixel_shuffle: factor must be >= 1");
    if (s.c % (static_cast<std::int64_t>(r) * r) != 0)
        throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) +
                         " not divisible by r^2 = " + std::to_string(r * r));
    const std::int64_t co = s.c / (r * r);
    RealTensor out(Shape{s.n, co, s.h * r, s.w * r});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < co; ++c)
            for (std::int64_t y = 0; y < s.h * r; ++y)
                for (std::int64_t x2 = 0; x2 < s.w * r; ++x2)
                    out(n, c, y, x2) =
                        x(n, c * r * r + (y % r) * r + (x2 % r), y / r, x2 / r);
    return out;
}

// Quantized skip join: y = Q_y(Q_x(x) + relu(Q_z(z))). Null quantizers act
// as identity, so a full-precision skip is plain x + relu(z).
inline RealTensor residual_add_quantized(const RealTensor& x, const RealTensor& z,
                                         const QuantParams* qx, const QuantParams* qz,
                                         const QuantParams* qy) {
    if (x.shape() != z.shape())
        throw ShapeError("residual_add_quantized: x " + x.shape().str() + " vs z " +
                         z.shape().str());
    RealTensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double xv = qx ? quantize_value(x[i], *qx) : x[i];
        double zv = qz ? quantize_value(z[i], *qz) : z[i];
        zv = zv > 0.0 ? zv : 0.0;
        const double sum = xv + zv;
        out[i] = qy ? quantize_value(sum, *qy) : sum;
    }
    return out;
}

// Plain real cross-correlation with zero padding, no bias.
inline RealTensor conv2d_real(const RealTensor& x, const RealTensor& w, int stride, int pad) {
    const auto d = detail::conv_dims(x.shape(), w.shape(), stride, pad, "conv2d_real");
    RealTensor out(Shape{d.n, d.co, d.ho, d.wo});
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t o = 0; o < d.co; ++o)
            for (std::int64_t c = 0; c < d.ci; ++c)
                for (std::int64_t ky = 0; ky < d.kh; ++ky)
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const double wv = w(o, c, ky, kx);
                        if (wv == 0.0) continue;
                        for (std::int64_t yo = 0; yo < d.ho; ++yo) {
                            const std::int64_t yi = yo * stride - pad + ky;
                            if (yi < 0 || yi >= d.h) continue;
                            for (std::int64_t xo = 0; xo < d.wo; ++xo) {
                                const std::int64_t xi = xo * stride - pad + kx;
                                if (xi < 0 || xi >= d.w) continue;
                                out(n, o, yo, xo) += wv * x(n, c, yi, xi);
                            }
                        }
                    }
    return out;
}

// Gradient of conv2d_real w.r.t. the kernel.
inline RealTensor conv2d_real_wgrad(const RealTensor& x, const RealTensor& dy, const Shape& wshape,
                                    int stride, int pad) {
    RealTensor dw(wshape);
    const Shape xs = x.shape();
    const Shape ys = dy.shape();
    for (std::int64_t n = 0; n < xs.n; ++n)
        for (std::int64_t o = 0; o < wshape.n; ++o)
            for (std::int64_t c = 0; c < wshape.c; ++c)
                for (std::int64_t ky = 0; ky < wshape.h; ++ky)
                    for (std::int64_t kx = 0; kx < wshape.w; ++kx) {
                        double acc = 0.0;
                        for (std::int64_t yo = 0; yo < ys.h; ++yo) {
                            const std::int64_t yi = yo * stride - pad + ky;
                            if (yi < 0 || yi >= xs.h) continue;
                            for (std::int64_t xo = 0; xo < ys.w; ++xo) {
                                const std::int64_t xi = xo * stride - pad + kx;
                                if (xi < 0 || xi >= xs.w) continue;
                                acc += x(n, c, yi, xi) * dy(n, o, yo, xo);
                            }
                        }
                        dw(o, c, ky, kx) += acc;
                    }
    return dw;
}

// Gradient of conv2d_real w.r.t. the input.
inline RealTensor conv2d_real_xgrad(const RealTensor& dy, const RealTensor& w, const Shape& xshape,
                                    int stride, int pad) {
    RealTensor dx(xshape);
    const Shape ys = dy.shape();
    const Shape ws = w.shape();
    for (std::int64_t n = 0; n < ys.n; ++n)
        for (std::int64_t o = 0; o < ws.n; ++o)
            for (std::int64_t c = 0; c < ws.c; ++c)
                for (std::int64_t ky = 0; ky < ws.h; ++ky)
                    for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                        const double wv = w(o, c, ky, kx);
                        if (wv == 0.0) continue;
                        for (std::int64_t yo = 0; yo < ys.h; ++yo) {
                            const std::int64_t yi = yo * stride - pad + ky;
                            if (yi < 0 || yi >= xshape.h) continue;
                            for (std::int64_t xo = 0; xo < ys.w; ++xo) {
                                const std::int64_t xi = xo * stride - pad + kx;
                                if (xi < 0 || xi >= xshape.w) continue;
                                dx(n, c, yi, xi) += wv * dy(n, o, yo, xo);
                            }
                        }
                    }
    return dx;
}

// ---------------------------------------------------------------------------
// Forward execution

namespace detail {

// Effective conv parameters for the quantized paths: batch norm directly
// after a conv is always folded there, so the integer path sees a single
// affine-free kernel.
inline FoldedConv effective_conv(const ModelSpec& spec, const ModelParams& params,
                                 std::size_t layer) {
    const LayerParams& p = params.layers[layer];
    if (layer + 1 < spec.layers.size() && spec.layers[layer + 1].kind == LayerKind::bn) {
        const LayerParams& b = params.layers[layer + 1];
        return fold_batchnorm(p.w, p.bias, b.gamma, b.beta, b.mean, b.var);
    }
    return FoldedConv{p.w, p.bias};
}

// Accumulator-lattice bias code: round half away from zero, like every
// other rounding in the pipeline.
inline std::int64_t bias_code(double b, double scale) {
    return static_cast<std::int64_t>(std::round(b / scale));
}

inline BitPlaneTensor pack_codes(const IntTensor& codes, const QuantParams& q) {
    if (q.is_signed) {
        const std::int64_t k = quant_levels(q);
        return pack_bitplanes(codes, q.bits + 1, -k);
    }
    return pack_bitplanes(codes, q.bits, 0);
}

}  // namespace detail

// Runs the graph and returns every layer's output (the taps double as skip
// sources). float_ref executes the latent graph as-is; fake_quant folds bn
// and applies the registered quantizers in the real domain; integer runs
// convolutions bit-serially on integer codes and dequantizes at the
// accumulator boundary.
inline std::vector<RealTensor> forward_all(const ModelSpec& spec, const ModelParams& params,
                                           const RealTensor& input, ForwardMode mode) {
    if (spec.layers.empty()) throw ConfigError("forward: empty model");
    if (params.layers.size() != spec.layers.size())
        throw ShapeError("forward: parameter count " + std::to_string(params.layers.size()) +
                         " vs layer count " + std::to_string(spec.layers.size()));
    if (input.shape().c != spec.layers.front().in_ch)
        throw ShapeError("forward: input has " + std::to_string(input.shape().c) +
                         " channels, model expects " + std::to_string(spec.layers.front().in_ch));
    const bool quantized = mode != ForwardMode::float_ref;

    std::vector<RealTensor> outs;
    outs.reserve(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const LayerParams& p = params.layers[i];
        const RealTensor& in = (i == 0) ? input : outs[i - 1];
        switch (l.kind) {
            case LayerKind::conv: {
                const FoldedConv eff =
                    quantized ? detail::effective_conv(spec, params, i) : FoldedConv{p.w, p.bias};
                const QuantParams* qa = (quantized && l.act_q >= 0)
                                            ? &params.quants[static_cast<std::size_t>(l.act_q)]
                                            : nullptr;
                const QuantParams* qw = (quantized && l.weight_q >= 0)
                                            ? &params.quants[static_cast<std::size_t>(l.weight_q)]
                                            : nullptr;
                if (mode == ForwardMode::integer) {
                    if (!qa || !qw)
                        throw ConfigError(
                            "integer forward needs weight and feature-map quantizers (wt and fm "
                            "must be 1..8)");
                    const double s = quant_scale(*qa) * quant_scale(*qw);
                    AccumTensor acc = conv2d_bitserial(
                        detail::pack_codes(integer_code(in, *qa), *qa),
                        detail::pack_codes(integer_code(eff.w, *qw), *qw), l.stride, l.pad);
                    RealTensor y(acc.shape());
                    for (std::int64_t n = 0; n < acc.shape().n; ++n)
                        for (std::int64_t o = 0; o < acc.shape().c; ++o) {
                            const std::int64_t bc =
                                l.has_bias
                                    ? detail::bias_code(eff.bias[static_cast<std::size_t>(o)], s)
                                    : 0;
                            for (std::int64_t yy = 0; yy < acc.shape().h; ++yy)
                                for (std::int64_t xx = 0; xx < acc.shape().w; ++xx)
                                    y(n, o, yy, xx) =
                                        static_cast<double>(acc(n, o, yy, xx) + bc) * s;
                        }
                    outs.push_back(std::move(y));
                } else {
                    const RealTensor a = qa ? quantize(in, *qa) : in;
                    const RealTensor wq = qw ? quantize(eff.w, *qw) : eff.w;
                    RealTensor y = conv2d_real(a, wq, l.stride, l.pad);
                    if (l.has_bias) {
                        for (std::int64_t n = 0; n < y.shape().n; ++n)
                            for (std::int64_t o = 0; o < y.shape().c; ++o) {
                                double b = eff.bias[static_cast<std::size_t>(o)];
                                if (qa && qw) {
                                    const double s = quant_scale(*qa) * quant_scale(*qw);
                                    b = static_cast<double>(detail::bias_code(b, s)) * s;
                                }
                                for (std::int64_t yy = 0; yy < y.shape().h; ++yy)
                                    for (std::int64_t xx = 0; xx < y.shape().w; ++xx)
                                        y(n, o, yy, xx) += b;
                            }
                    }
                    outs.push_back(std::move(y));
                }
                break;
            }
            case LayerKind::bn: {
                if (quantized) {
                    // Folded into the conv above; keep the tap aligned.
                    outs.push_back(in);
                    break;
                }
                if (i == 0 || spec.layers[i - 1].kind != LayerKind::conv)
                    throw ConfigError("bn layer must follow a conv");
                RealTensor y(in.shape());
                for (std::int64_t n = 0; n < in.shape().n; ++n)
                    for (std::int64_t c = 0; c < in.shape().c; ++c) {
                        const std::size_t cc = static_cast<std::size_t>(c);
                        const double r = p.gamma[cc] / std::sqrt(p.var[cc] + kBnEps);
                        for (std::int64_t yy = 0; yy < in.shape().h; ++yy)
                            for (std::int64_t xx = 0; xx < in.shape().w; ++xx)
                                y(n, c, yy, xx) = (in(n, c, yy, xx) - p.mean[cc]) * r + p.beta[cc];
                    }
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::relu: {
                RealTensor y(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j) y[j] = in[j] > 0.0 ? in[j] : 0.0;
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::prelu: {
                RealTensor y(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j)
                    y[j] = in[j] >= 0.0 ? in[j] : p.prelu_slope * in[j];
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::pixel_shuffle: {
                outs.push_back(pixel_shuffle(in, l.shuffle_r));
                break;
            }
            case LayerKind::add: {
                if (l.skip_source < 0 || l.skip_source >= static_cast<int>(i))
                    throw ConfigError("add layer " + std::to_string(i) +
                                      " has invalid skip source");
                const RealTensor& x = outs[static_cast<std::size_t>(l.skip_source)];
                auto qp = [&](int id) -> const QuantParams* {
                    return (quantized && id >= 0) ? &params.quants[static_cast<std::size_t>(id)]
                                                  : nullptr;
                };
                outs.push_back(
                    residual_add_quantized(x, in, qp(l.add_qx), qp(l.add_qz), qp(l.add_qy)));
                break;
            }
        }
    }
    return outs;
}

inline RealTensor forward(const ModelSpec& spec, const ModelParams& params, const RealTensor& input,
                          ForwardMode mode) {
    return forward_all(spec, params, input, mode).back();
}

// Folded, unquantized graph walk shared by interval calibration and the
// warm-up phase of training. `observe(quant_id, value)` is called with every
// quantization site's value: weight sites see folded kernels, feature-map
// sites the conv input, skip sites the three join operands.
template <typename Observer>
inline std::vector<RealTensor> folded_forward_observe(const ModelSpec& spec,
                                                      const ModelParams& params,
                                                      const RealTensor& input,
                                                      Observer&& observe) {
    std::vector<RealTensor> outs;
    outs.reserve(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const LayerParams& p = params.layers[i];
        const RealTensor& in = (i == 0) ? input : outs[i - 1];
        switch (l.kind) {
            case LayerKind::conv: {
                const FoldedConv eff = detail::effective_conv(spec, params, i);
                if (l.weight_q >= 0) observe(l.weight_q, eff.w);
                if (l.act_q >= 0) observe(l.act_q, in);
                RealTensor y = conv2d_real(in, eff.w, l.stride, l.pad);
                if (l.has_bias)
                    for (std::int64_t n = 0; n < y.shape().n; ++n)
                        for (std::int64_t o = 0; o < y.shape().c; ++o)
                            for (std::int64_t yy = 0; yy < y.shape().h; ++yy)
                                for (std::int64_t xx = 0; xx < y.shape().w; ++xx)
                                    y(n, o, yy, xx) += eff.bias[static_cast<std::size_t>(o)];
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::bn:
                outs.push_back(in);
                break;
            case LayerKind::relu: {
                RealTensor y(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j) y[j] = in[j] > 0.0 ? in[j] : 0.0;
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::prelu: {
                RealTensor y(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j)
                    y[j] = in[j] >= 0.0 ? in[j] : p.prelu_slope * in[j];
                outs.push_back(std::move(y));
                break;
            }
            case LayerKind::pixel_shuffle:
                outs.push_back(pixel_shuffle(in, l.shuffle_r));
                break;
            case LayerKind::add: {
                const RealTensor& x = outs[static_cast<std::size_t>(l.skip_source)];
                if (l.add_qx >= 0) observe(l.add_qx, x);
                if (l.add_qz >= 0) observe(l.add_qz, in);
                RealTensor y(x.shape());
                for (std::int64_t j = 0; j < x.size(); ++j)
                    y[j] = x[j] + (in[j] > 0.0 ? in[j] : 0.0);
                if (l.add_qy >= 0) observe(l.add_qy, y);
                outs.push_back(std::move(y));
                break;
            }
        }
    }
    return outs;
}

// The warm-up/unquantized execution: batch norm folded, quantizers ignored.
inline std::vector<RealTensor> forward_all_folded(const ModelSpec& spec, const ModelParams& params,
                                                  const RealTensor& input) {
    return folded_forward_observe(spec, params, input, [](int, const RealTensor&) {});
}

// One calibration pass: feeds every unfrozen quantizer's site value to its
// warm-up accumulator.
inline void calibration_forward(const ModelSpec& spec, ModelParams& params,
                                const RealTensor& input) {
    folded_forward_observe(spec, params, input, [&params](int id, const RealTensor& v) {
        QuantParams& q = params.quants[static_cast<std::size_t>(id)];
        if (!q.frozen) init_interval_warmup(q, v);
    });
}

}  // namespace fqsr

#endif  // FQSR_NETGRAPH_HPP_
