#ifndef FQSR_COSTMODEL_HPP_
#define FQSR_COSTMODEL_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fqsr/netgraph.hpp"

namespace fqsr {

// Analytical inference cost. FLOPs count convolution multiplies only (bias
// adds, batch norm and elementwise ops are free: bn folds away and the rest
// is negligible next to the convs). OPs normalize an M-bit conv to M/64 of
// its multiply count, a 64-bit-word popcount equivalence; float convs count
// 1:1. Peak memory is the live feature-map working set: n_buffers copies of
// one C x H x W map at LR resolution in skip storage precision.
struct LayerCost {
    std::size_t layer = 0;
    ModuleTag tag = ModuleTag::body;
    std::int64_t multiplies = 0;
    int bits = 32;  // 32 = full precision
    double ops = 0;
};

struct CostReport {
    std::vector<LayerCost> per_layer;
    std::int64_t total_multiplies = 0;
    double total_flops_g = 0;  // multiplies / 1e9
    double total_ops_g = 0;
    double peak_memory_bytes = 0;
    double peak_memory_mb = 0;
    std::int64_t input_h = 0, input_w = 0;
    int buffers = 0;
    int store_bits = 32;
};

namespace detail {

inline double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

inline int default_buffers(const ModelSpec& spec) { return spec.blocks > 0 ? 3 : 1; }

// Walks the graph once, assigning each conv its running spatial size and a
// per-layer precision chosen by the caller.
inline CostReport cost_core(const ModelSpec& spec, int lr_h, int lr_w,
                            const std::function<int(const LayerSpec&)>& bits_of, int store_bits,
                            int n_buffers) {
    if (lr_h < 1 || lr_w < 1) throw ParamError("cost: input dims must be positive");
    if (n_buffers < 1) throw ParamError("cost: buffer count must be >= 1");
    CostReport rep;
    rep.input_h = lr_h;
    rep.input_w = lr_w;
    rep.buffers = n_buffers;
    rep.store_bits = store_bits;
    std::int64_t h = lr_h, w = lr_w;
    double ops = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::conv) {
            const std::int64_t ho = (h + 2 * l.pad - l.kernel) / l.stride + 1;
            const std::int64_t wo = (w + 2 * l.pad - l.kernel) / l.stride + 1;
            LayerCost c;
            c.layer = i;
            c.tag = l.tag;
            c.multiplies = static_cast<std::int64_t>(l.kernel) * l.kernel * l.in_ch * l.out_ch *
                           ho * wo;
            c.bits = bits_of(l);
            c.ops = (c.bits == 32) ? static_cast<double>(c.multiplies)
                                   : static_cast<double>(c.multiplies) * c.bits / 64.0;
            rep.total_multiplies += c.multiplies;
            ops += c.ops;
            rep.per_layer.push_back(c);
            h = ho;
            w = wo;
        } else if (l.kind == LayerKind::pixel_shuffle) {
            h *= l.shuffle_r;
            w *= l.shuffle_r;
        }
    }
    rep.total_flops_g = static_cast<double>(rep.total_multiplies) / 1e9;
    rep.total_ops_g = ops / 1e9;
    const double buffer_bytes = static_cast<double>(spec.channels) * lr_h * lr_w *
                                (static_cast<double>(store_bits) / 8.0);
    rep.peak_memory_bytes = static_cast<double>(n_buffers) * buffer_bytes;
    // Report megabytes the way the reference figures are tabulated: each
    // buffer rounded to 3 decimals before scaling by the count.
    rep.peak_memory_mb = n_buffers * round3(buffer_bytes / 1e6);
    return rep;
}

inline int store_bits_of(const BitConfig& cfg) { return cfg.sc == 32 ? 32 : cfg.sc; }

}  // namespace detail

// Full-precision multiply count; OPs equal FLOPs for a float model.
inline CostReport count_flops(const ModelSpec& spec, int lr_h, int lr_w) {
    return detail::cost_core(
        spec, lr_h, lr_w, [](const LayerSpec&) { return 32; },
        detail::store_bits_of(spec.bitcfg), detail::default_buffers(spec));
}

// Uniform precision: every conv runs at M = wt = fm bits (or float when both
// are 32). Asymmetric weight/activation widths have no defined OPs rule here.
inline CostReport count_ops(const ModelSpec& spec, const BitConfig& bitcfg, int lr_h, int lr_w) {
    if (bitcfg.wt != bitcfg.fm)
        throw ConfigError("count_ops: asymmetric precision wt=" + std::to_string(bitcfg.wt) +
                          " fm=" + std::to_string(bitcfg.fm) +
                          " has no defined OPs formula; use wt == fm");
    check_bits(bitcfg.wt, "weight");
    check_bits(bitcfg.sc, "skip");
    const int m = bitcfg.wt;
    return detail::cost_core(
        spec, lr_h, lr_w, [m](const LayerSpec&) { return m; }, detail::store_bits_of(bitcfg),
        detail::default_buffers(spec));
}

// Per-module precision (32 = float), for mixed schemes that quantize only
// the body.
inline CostReport count_ops_mixed(const ModelSpec& spec, int head_bits, int body_bits,
                                  int tail_bits, int lr_h, int lr_w) {
    check_bits(head_bits, "head");
    check_bits(body_bits, "body");
    check_bits(tail_bits, "tail");
    return detail::cost_core(
        spec, lr_h, lr_w,
        [=](const LayerSpec& l) {
            switch (l.tag) {
                case ModuleTag::head: return head_bits;
                case ModuleTag::body: return body_bits;
                case ModuleTag::tail: return tail_bits;
            }
            return 32;
        },
        32, detail::default_buffers(spec));
}

// Binary-body accounting in the style of block-wise binarized baselines:
// 1-bit body convs, float head/tail, and every body feature map held live
// in float (hence 2*blocks + 1 buffers alongside the skip set).
inline CostReport count_ops_bam(const ModelSpec& spec, int lr_h, int lr_w) {
    const int buffers = 2 * spec.blocks + 1;
    return detail::cost_core(
        spec, lr_h, lr_w,
        [](const LayerSpec& l) { return l.tag == ModuleTag::body ? 1 : 32; }, 32,
        buffers < 1 ? 1 : buffers);
}

// Working-set size only; flops fields are filled as a convenience.
inline CostReport peak_memory(const ModelSpec& spec, const BitConfig& bitcfg, int lr_h, int lr_w,
                              int n_buffers = -1) {
    check_bits(bitcfg.sc, "skip");
    return detail::cost_core(
        spec, lr_h, lr_w, [](const LayerSpec&) { return 32; }, detail::store_bits_of(bitcfg),
        n_buffers > 0 ? n_buffers : detail::default_buffers(spec));
}

}  // namespace fqsr

#endif  // FQSR_COSTMODEL_HPP_
