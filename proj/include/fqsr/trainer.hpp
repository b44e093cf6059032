#ifndef FQSR_TRAINER_HPP_
#define FQSR_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "fqsr/netgraph.hpp"
#include "fqsr/quantizer.hpp"

namespace fqsr {

// Desk-scale quantization-aware training. The forward pass is the same
// fake-quant execution inference uses; the backward pass is hand-rolled
// reverse-mode over the layer graph with straight-through estimators at
// every quantization site. Latent weights stay full precision.

enum class SrLoss { l1, l2 };

struct TrainConfig {
    int batch_size = 16;
    double lr0 = 1e-3;
    double lr_min = 0.0;
    int epochs = 300;
    int total_iters = 0;  // cosine horizon; <= 0 means constant lr0
    int warmup_l = 20;
    double alpha = 0.3;
    SqclNorm sqcl_norm = SqclNorm::l1;
    SrLoss sr_loss = SrLoss::l1;
    std::uint64_t seed = 0;
    int patch = 48;  // LR-side training patch, used by the data pipeline
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ParamError("train: batch_size must be >= 1");
    if (cfg.lr0 < 0 || cfg.lr_min < 0) throw ParamError("train: learning rates must be >= 0");
    if (cfg.warmup_l < 1) throw ParamError("train: warmup_l must be >= 1");
    if (cfg.alpha < 0) throw ParamError("train: alpha must be >= 0");
    if (cfg.epochs < 1) throw ParamError("train: epochs must be >= 1");
    if (cfg.patch < 1) throw ParamError("train: patch must be >= 1");
}

struct StepReport {
    double loss_total = 0, loss_sr = 0, loss_sqcl = 0;
    double lr = 0;
    std::int64_t iteration = 0;  // 1-based, after the step
    bool warmup = false;
};

// Cosine annealing without restarts, clamped past the horizon.
inline double cosine_lr(std::int64_t iter, std::int64_t total_iters, double lr0, double lr_min) {
    if (total_iters < 1) throw ParamError("cosine_lr: total_iters must be >= 1");
    if (iter < 0) throw ParamError("cosine_lr: iter must be >= 0");
    if (iter > total_iters) return lr_min;
    const double t = static_cast<double>(iter) / static_cast<double>(total_iters);
    return lr_min + (lr0 - lr_min) * (1.0 + std::cos(M_PI * t)) / 2.0;
}

// ---------------------------------------------------------------------------
// Losses

struct SiteValue {
    RealTensor v;
    QuantParams q;
};

struct LossParts {
    double sr = 0, sqcl = 0, total = 0;
};

inline double sr_loss_value(const RealTensor& sr, const RealTensor& hr, SrLoss kind) {
    if (sr.shape() != hr.shape())
        throw ShapeError("sr_loss: output " + sr.shape().str() + " vs target " + hr.shape().str());
    double acc = 0;
    for (std::int64_t i = 0; i < sr.size(); ++i) {
        const double d = sr[i] - hr[i];
        acc += (kind == SrLoss::l1) ? std::abs(d) : d * d;
    }
    return acc / static_cast<double>(sr.size());
}

// Reconstruction loss plus alpha times the mean calibration loss over all
// quantization sites.
inline LossParts total_loss(const RealTensor& sr, const RealTensor& hr,
                            const std::vector<SiteValue>& sites, const TrainConfig& cfg) {
    LossParts out;
    out.sr = sr_loss_value(sr, hr, cfg.sr_loss);
    if (!sites.empty()) {
        double acc = 0;
        for (const SiteValue& s : sites) acc += sqcl_loss(s.v, s.q, cfg.sqcl_norm);
        out.sqcl = acc / static_cast<double>(sites.size());
    }
    out.total = out.sr + cfg.alpha * out.sqcl;
    return out;
}

// ---------------------------------------------------------------------------
// Gradients

struct ModelGrads {
    std::vector<LayerParams> layers;     // same field shapes as the params
    std::vector<double> interval;        // one slot per quantizer
};

inline ModelGrads zero_grads(const ModelSpec& spec, const ModelParams& params) {
    ModelGrads g;
    g.layers.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const LayerParams& p = params.layers[i];
        LayerParams& gl = g.layers[i];
        if (spec.layers[i].kind == LayerKind::conv) {
            gl.w = RealTensor(p.w.shape());
            gl.bias.assign(p.bias.size(), 0.0);
        } else if (spec.layers[i].kind == LayerKind::bn) {
            gl.gamma.assign(p.gamma.size(), 0.0);
            gl.beta.assign(p.beta.size(), 0.0);
        } else if (spec.layers[i].kind == LayerKind::prelu) {
            gl.prelu_slope = 0.0;
        }
    }
    g.interval.assign(params.quants.size(), 0.0);
    return g;
}

namespace detail {

// d(alpha/n_sites * sqcl(v)) / dv and /dI, accumulated in place. The
// residual r = Q(v) - v differentiates as (STE - 1) into v and as dQ/dI
// into the interval.
inline void sqcl_backward_into(const RealTensor& v, const QuantParams& q, double coeff,
                               SqclNorm norm, RealTensor& dv, double& di) {
    const double n = static_cast<double>(v.size());
    RealTensor upstream(v.shape());
    if (norm == SqclNorm::l1) {
        for (std::int64_t i = 0; i < v.size(); ++i) {
            const double r = quantize_value(v[i], q) - v[i];
            upstream[i] = coeff * ((r > 0) - (r < 0)) / n;
        }
    } else {
        const double loss = sqcl_loss(v, q, SqclNorm::l2);
        if (loss == 0.0) return;
        for (std::int64_t i = 0; i < v.size(); ++i) {
            const double r = quantize_value(v[i], q) - v[i];
            upstream[i] = coeff * r / (n * loss);
        }
    }
    const QuantGrad qg = quantize_backward(v, q, upstream);
    for (std::int64_t i = 0; i < v.size(); ++i) dv[i] += qg.input[i] - upstream[i];
    di += qg.interval;
}

inline void add_into(RealTensor& acc, const RealTensor& g) {
    if (acc.size() == 0) {
        acc = g;
        return;
    }
    for (std::int64_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace detail

struct GradResult {
    ModelGrads grads;
    LossParts loss;
};

// One forward/backward evaluation. `quantized` selects the fake-quant
// execution (requires frozen intervals); otherwise the folded unquantized
// warm-up path is used and no SQCL terms appear.
inline GradResult compute_gradients(const ModelSpec& spec, const ModelParams& params,
                                    const RealTensor& lr_batch, const RealTensor& hr_batch,
                                    const TrainConfig& cfg, bool quantized) {
    const std::vector<RealTensor> outs =
        quantized ? forward_all(spec, params, lr_batch, ForwardMode::fake_quant)
                  : forward_all_folded(spec, params, lr_batch);
    const RealTensor& sr = outs.back();
    if (sr.shape() != hr_batch.shape())
        throw ShapeError("train: model output " + sr.shape().str() + " vs target " +
                         hr_batch.shape().str());

    GradResult res;
    res.grads = zero_grads(spec, params);
    const std::size_t n_sites = quantized ? params.quants.size() : 0;
    const double sqcl_coeff =
        n_sites > 0 ? cfg.alpha / static_cast<double>(n_sites) : 0.0;

    // Loss and its gradient at the output.
    res.loss.sr = sr_loss_value(sr, hr_batch, cfg.sr_loss);
    std::vector<RealTensor> douts(outs.size());
    RealTensor dsr(sr.shape());
    const double inv_n = 1.0 / static_cast<double>(sr.size());
    for (std::int64_t i = 0; i < sr.size(); ++i) {
        const double d = sr[i] - hr_batch[i];
        dsr[i] = (cfg.sr_loss == SrLoss::l1) ? ((d > 0) - (d < 0)) * inv_n : 2.0 * d * inv_n;
    }
    douts.back() = std::move(dsr);

    double sqcl_sum = 0;  // plain sum; divided by n_sites at the end

    for (std::size_t ii = spec.layers.size(); ii-- > 0;) {
        if (douts[ii].size() == 0) continue;  // unreachable taps
        const RealTensor g = std::move(douts[ii]);
        const LayerSpec& l = spec.layers[ii];
        const LayerParams& p = params.layers[ii];
        const RealTensor& in = (ii == 0) ? lr_batch : outs[ii - 1];
        auto to_prev = [&](const RealTensor& dx) {
            if (ii > 0) detail::add_into(douts[ii - 1], dx);
        };
        switch (l.kind) {
            case LayerKind::conv: {
                const bool folded =
                    ii + 1 < spec.layers.size() && spec.layers[ii + 1].kind == LayerKind::bn;
                const FoldedConv eff =
                    folded ? detail::effective_conv(spec, params, ii) : FoldedConv{p.w, p.bias};
                const QuantParams* qa =
                    (quantized && l.act_q >= 0) ? &params.quants[static_cast<std::size_t>(l.act_q)]
                                                : nullptr;
                const QuantParams* qw = (quantized && l.weight_q >= 0)
                                            ? &params.quants[static_cast<std::size_t>(l.weight_q)]
                                            : nullptr;
                const RealTensor a = qa ? quantize(in, *qa) : in;
                const RealTensor wq = qw ? quantize(eff.w, *qw) : eff.w;

                RealTensor dw_fold = conv2d_real_wgrad(a, g, eff.w.shape(), l.stride, l.pad);
                const RealTensor da_q = conv2d_real_xgrad(g, wq, a.shape(), l.stride, l.pad);
                // The folded bias exists even without a conv bias (beta and
                // the running mean contribute), so always accumulate when
                // there is a bias slot to backpropagate into.
                std::vector<double> db_fold(eff.bias.size(), 0.0);
                if (!db_fold.empty())
                    for (std::int64_t n = 0; n < g.shape().n; ++n)
                        for (std::int64_t o = 0; o < g.shape().c; ++o)
                            for (std::int64_t y = 0; y < g.shape().h; ++y)
                                for (std::int64_t x = 0; x < g.shape().w; ++x)
                                    db_fold[static_cast<std::size_t>(o)] += g(n, o, y, x);

                if (qw) {
                    const QuantGrad qg = quantize_backward(eff.w, *qw, dw_fold);
                    res.grads.interval[static_cast<std::size_t>(l.weight_q)] += qg.interval;
                    dw_fold = qg.input;
                    sqcl_sum += sqcl_loss(eff.w, *qw, cfg.sqcl_norm);
                    if (sqcl_coeff > 0)
                        detail::sqcl_backward_into(
                            eff.w, *qw, sqcl_coeff, cfg.sqcl_norm, dw_fold,
                            res.grads.interval[static_cast<std::size_t>(l.weight_q)]);
                }

                LayerParams& gl = res.grads.layers[ii];
                if (folded) {
                    const LayerParams& bp = params.layers[ii + 1];
                    LayerParams& gb = res.grads.layers[ii + 1];
                    const std::int64_t per_ch = p.w.size() / p.w.shape().n;
                    for (std::int64_t o = 0; o < p.w.shape().n; ++o) {
                        const std::size_t oc = static_cast<std::size_t>(o);
                        const double inv_sd = 1.0 / std::sqrt(bp.var[oc] + kBnEps);
                        const double r = bp.gamma[oc] * inv_sd;
                        const double b0 = l.has_bias ? p.bias[oc] : 0.0;
                        double dgamma = db_fold[oc] * (b0 - bp.mean[oc]) * inv_sd;
                        for (std::int64_t j = 0; j < per_ch; ++j) {
                            const std::int64_t idx = o * per_ch + j;
                            gl.w[idx] += dw_fold[idx] * r;
                            dgamma += dw_fold[idx] * p.w[idx] * inv_sd;
                        }
                        gb.gamma[oc] += dgamma;
                        gb.beta[oc] += db_fold[oc];
                        if (l.has_bias) gl.bias[oc] += db_fold[oc] * r;
                    }
                } else {
                    for (std::int64_t j = 0; j < dw_fold.size(); ++j) gl.w[j] += dw_fold[j];
                    if (l.has_bias)
                        for (std::size_t o = 0; o < db_fold.size(); ++o) gl.bias[o] += db_fold[o];
                }

                RealTensor dx;
                if (qa) {
                    QuantGrad qg = quantize_backward(in, *qa, da_q);
                    res.grads.interval[static_cast<std::size_t>(l.act_q)] += qg.interval;
                    dx = std::move(qg.input);
                    sqcl_sum += sqcl_loss(in, *qa, cfg.sqcl_norm);
                    if (sqcl_coeff > 0)
                        detail::sqcl_backward_into(
                            in, *qa, sqcl_coeff, cfg.sqcl_norm, dx,
                            res.grads.interval[static_cast<std::size_t>(l.act_q)]);
                } else {
                    dx = da_q;
                }
                to_prev(dx);
                break;
            }
            case LayerKind::bn: {
                // Both training paths fold bn into the conv above, so the
                // tap is a pass-through; its gamma/beta gradients are
                // produced by the conv's fold backward.
                to_prev(g);
                break;
            }
            case LayerKind::relu: {
                RealTensor dx(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j) dx[j] = in[j] > 0.0 ? g[j] : 0.0;
                to_prev(dx);
                break;
            }
            case LayerKind::prelu: {
                RealTensor dx(in.shape());
                double ds = 0;
                for (std::int64_t j = 0; j < in.size(); ++j) {
                    if (in[j] >= 0.0) {
                        dx[j] = g[j];
                    } else {
                        dx[j] = g[j] * p.prelu_slope;
                        ds += g[j] * in[j];
                    }
                }
                res.grads.layers[ii].prelu_slope += ds;
                to_prev(dx);
                break;
            }
            case LayerKind::pixel_shuffle: {
                const int r = l.shuffle_r;
                RealTensor dx(in.shape());
                for (std::int64_t n = 0; n < g.shape().n; ++n)
                    for (std::int64_t c = 0; c < g.shape().c; ++c)
                        for (std::int64_t y = 0; y < g.shape().h; ++y)
                            for (std::int64_t x = 0; x < g.shape().w; ++x)
                                dx(n, c * r * r + (y % r) * r + (x % r), y / r, x / r) =
                                    g(n, c, y, x);
                to_prev(dx);
                break;
            }
            case LayerKind::add: {
                const RealTensor& x = outs[static_cast<std::size_t>(l.skip_source)];
                auto qp = [&](int id) -> const QuantParams* {
                    return (quantized && id >= 0) ? &params.quants[static_cast<std::size_t>(id)]
                                                  : nullptr;
                };
                const QuantParams* qx = qp(l.add_qx);
                const QuantParams* qz = qp(l.add_qz);
                const QuantParams* qy = qp(l.add_qy);
                const RealTensor xq = qx ? quantize(x, *qx) : x;
                const RealTensor zq = qz ? quantize(in, *qz) : in;

                RealTensor ds;
                if (qy) {
                    RealTensor s(x.shape());
                    for (std::int64_t j = 0; j < s.size(); ++j)
                        s[j] = xq[j] + (zq[j] > 0.0 ? zq[j] : 0.0);
                    QuantGrad qg = quantize_backward(s, *qy, g);
                    res.grads.interval[static_cast<std::size_t>(l.add_qy)] += qg.interval;
                    ds = std::move(qg.input);
                    sqcl_sum += sqcl_loss(s, *qy, cfg.sqcl_norm);
                    if (sqcl_coeff > 0)
                        detail::sqcl_backward_into(
                            s, *qy, sqcl_coeff, cfg.sqcl_norm, ds,
                            res.grads.interval[static_cast<std::size_t>(l.add_qy)]);
                } else {
                    ds = g;
                }

                RealTensor dz_relu(in.shape());
                for (std::int64_t j = 0; j < in.size(); ++j)
                    dz_relu[j] = zq[j] > 0.0 ? ds[j] : 0.0;

                RealTensor dx;
                if (qx) {
                    QuantGrad qg = quantize_backward(x, *qx, ds);
                    res.grads.interval[static_cast<std::size_t>(l.add_qx)] += qg.interval;
                    dx = std::move(qg.input);
                    sqcl_sum += sqcl_loss(x, *qx, cfg.sqcl_norm);
                    if (sqcl_coeff > 0)
                        detail::sqcl_backward_into(
                            x, *qx, sqcl_coeff, cfg.sqcl_norm, dx,
                            res.grads.interval[static_cast<std::size_t>(l.add_qx)]);
                } else {
                    dx = std::move(ds);
                }
                RealTensor dz;
                if (qz) {
                    QuantGrad qg = quantize_backward(in, *qz, dz_relu);
                    res.grads.interval[static_cast<std::size_t>(l.add_qz)] += qg.interval;
                    dz = std::move(qg.input);
                    sqcl_sum += sqcl_loss(in, *qz, cfg.sqcl_norm);
                    if (sqcl_coeff > 0)
                        detail::sqcl_backward_into(
                            in, *qz, sqcl_coeff, cfg.sqcl_norm, dz,
                            res.grads.interval[static_cast<std::size_t>(l.add_qz)]);
                } else {
                    dz = std::move(dz_relu);
                }
                detail::add_into(douts[static_cast<std::size_t>(l.skip_source)], dx);
                to_prev(dz);
                break;
            }
        }
    }

    res.loss.sqcl = n_sites > 0 ? sqcl_sum / static_cast<double>(n_sites) : 0.0;
    res.loss.total = res.loss.sr + cfg.alpha * res.loss.sqcl;
    return res;
}

// ---------------------------------------------------------------------------
// Optimizer

struct TrainState {
    std::vector<double> m, v;  // Adam moments over the flattened parameters
    std::int64_t adam_t = 0;
    std::int64_t iteration = 0;
};

namespace detail {

// Fixed flattening order shared by the update and the moment vectors:
// per layer (conv w then bias | bn gamma then beta | prelu slope), then all
// quantizer intervals.
template <typename F>
void for_each_trainable(const ModelSpec& spec, ModelParams& params, ModelGrads& grads, F&& f) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerParams& p = params.layers[i];
        LayerParams& g = grads.layers[i];
        switch (spec.layers[i].kind) {
            case LayerKind::conv:
                for (std::int64_t j = 0; j < p.w.size(); ++j) f(p.w[j], g.w[j]);
                for (std::size_t j = 0; j < p.bias.size(); ++j) f(p.bias[j], g.bias[j]);
                break;
            case LayerKind::bn:
                for (std::size_t j = 0; j < p.gamma.size(); ++j) f(p.gamma[j], g.gamma[j]);
                for (std::size_t j = 0; j < p.beta.size(); ++j) f(p.beta[j], g.beta[j]);
                break;
            case LayerKind::prelu:
                f(p.prelu_slope, g.prelu_slope);
                break;
            default:
                break;
        }
    }
    for (std::size_t i = 0; i < params.quants.size(); ++i)
        f(params.quants[i].interval, grads.interval[i]);
}

inline std::size_t trainable_count(const ModelSpec& spec, const ModelParams& params) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerParams& p = params.layers[i];
        switch (spec.layers[i].kind) {
            case LayerKind::conv:
                n += static_cast<std::size_t>(p.w.size()) + p.bias.size();
                break;
            case LayerKind::bn:
                n += p.gamma.size() + p.beta.size();
                break;
            case LayerKind::prelu:
                n += 1;
                break;
            default:
                break;
        }
    }
    return n + params.quants.size();
}

}  // namespace detail

// Adam over every trainable scalar. Unfrozen intervals receive zero
// gradients, so warm-up never moves them.
inline void adam_update(const ModelSpec& spec, ModelParams& params, ModelGrads& grads,
                        TrainState& state, double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const std::size_t n = detail::trainable_count(spec, params);
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n)
        throw StateError("adam_update: optimizer state has " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(n) + " parameters");
    state.adam_t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.adam_t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.adam_t));
    std::size_t k = 0;
    detail::for_each_trainable(spec, params, grads, [&](double& p, double& g) {
        state.m[k] = kBeta1 * state.m[k] + (1.0 - kBeta1) * g;
        state.v[k] = kBeta2 * state.v[k] + (1.0 - kBeta2) * g * g;
        const double mh = state.m[k] / bc1;
        const double vh = state.v[k] / bc2;
        p -= lr * mh / (std::sqrt(vh) + kEps);
        ++k;
    });
}

// One optimization step. The first warmup_l iterations run the unquantized
// folded forward, feed every site's values to the interval warm-up, and
// update only weights; quantized training starts once the intervals freeze.
inline StepReport train_step(const ModelSpec& spec, ModelParams& params, TrainState& state,
                             const RealTensor& lr_batch, const RealTensor& hr_batch,
                             const TrainConfig& cfg) {
    validate(cfg);
    bool any_unfrozen = false;
    for (const QuantParams& q : params.quants) any_unfrozen |= !q.frozen;
    const bool warmup = any_unfrozen && state.iteration < cfg.warmup_l;
    if (state.iteration == 0)
        for (QuantParams& q : params.quants)
            if (!q.frozen) q.warmup_target = cfg.warmup_l;

    if (warmup) calibration_forward(spec, params, lr_batch);
    GradResult res = compute_gradients(spec, params, lr_batch, hr_batch, cfg, !warmup);
    if (!std::isfinite(res.loss.total))
        throw NumericError("train_step: non-finite loss at iteration " +
                           std::to_string(state.iteration + 1) + ", step aborted");

    const double lr = cfg.total_iters >= 1
                          ? cosine_lr(std::min<std::int64_t>(state.iteration, cfg.total_iters),
                                      cfg.total_iters, cfg.lr0, cfg.lr_min)
                          : cfg.lr0;
    adam_update(spec, params, res.grads, state, lr);
    state.iteration += 1;

    StepReport rep;
    rep.loss_sr = res.loss.sr;
    rep.loss_sqcl = res.loss.sqcl;
    rep.loss_total = res.loss.total;
    rep.lr = lr;
    rep.iteration = state.iteration;
    rep.warmup = warmup;
    return rep;
}

// ---------------------------------------------------------------------------
// Resume state: exact (binary f64) snapshot of parameters, quantizer state,
// Adam moments and the data pipeline's RNG text. The checkpoint format keeps
// f32 inference weights; this sidecar is what makes resumed training
// bit-identical to an uninterrupted run.

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("train state: truncated stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

inline double get_f64(std::istream& is) {
    const std::uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

inline void put_vec(std::ostream& os, const std::vector<double>& v) {
    put_u64(os, v.size());
    for (double d : v) put_f64(os, d);
}

inline void get_vec(std::istream& is, std::vector<double>& v, const char* what) {
    const std::uint64_t n = get_u64(is);
    if (n != v.size())
        throw IoError(std::string("train state: ") + what + " has " + std::to_string(n) +
                      " entries, expected " + std::to_string(v.size()));
    for (double& d : v) d = get_f64(is);
}

constexpr char kStateMagic[] = "FQSRTS1\n";

}  // namespace detail

inline void save_train_state(std::ostream& os, const ModelParams& params, const TrainState& state,
                             const std::string& rng_text = "") {
    os.write(detail::kStateMagic, 8);
    detail::put_u64(os, params.layers.size());
    for (const LayerParams& p : params.layers) {
        detail::put_u64(os, static_cast<std::uint64_t>(p.w.size()));
        for (std::int64_t i = 0; i < p.w.size(); ++i) detail::put_f64(os, p.w[i]);
        detail::put_vec(os, p.bias);
        detail::put_vec(os, p.gamma);
        detail::put_vec(os, p.beta);
        detail::put_vec(os, p.mean);
        detail::put_vec(os, p.var);
        detail::put_f64(os, p.prelu_slope);
    }
    detail::put_u64(os, params.quants.size());
    for (const QuantParams& q : params.quants) {
        detail::put_u64(os, static_cast<std::uint64_t>(q.bits));
        detail::put_u64(os, q.is_signed ? 1 : 0);
        detail::put_f64(os, q.interval);
        detail::put_u64(os, static_cast<std::uint64_t>(q.warmup_target));
        detail::put_f64(os, q.warmup_sum);
        detail::put_u64(os, static_cast<std::uint64_t>(q.warmup_seen));
        detail::put_u64(os, q.frozen ? 1 : 0);
    }
    detail::put_vec(os, state.m);
    detail::put_vec(os, state.v);
    detail::put_u64(os, static_cast<std::uint64_t>(state.adam_t));
    detail::put_u64(os, static_cast<std::uint64_t>(state.iteration));
    detail::put_u64(os, rng_text.size());
    os.write(rng_text.data(), static_cast<std::streamsize>(rng_text.size()));
    if (!os) throw IoError("train state: write failed");
}

// Loads into an already-built model; every dimension must match.
inline void load_train_state(std::istream& is, ModelParams& params, TrainState& state,
                             std::string* rng_text = nullptr) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kStateMagic, 8) != 0)
        throw IoError("train state: bad magic");
    if (detail::get_u64(is) != params.layers.size())
        throw IoError("train state: layer count mismatch");
    for (LayerParams& p : params.layers) {
        const std::uint64_t wn = detail::get_u64(is);
        if (wn != static_cast<std::uint64_t>(p.w.size()))
            throw IoError("train state: weight size mismatch");
        for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = detail::get_f64(is);
        detail::get_vec(is, p.bias, "bias");
        detail::get_vec(is, p.gamma, "gamma");
        detail::get_vec(is, p.beta, "beta");
        detail::get_vec(is, p.mean, "mean");
        detail::get_vec(is, p.var, "var");
        p.prelu_slope = detail::get_f64(is);
    }
    if (detail::get_u64(is) != params.quants.size())
        throw IoError("train state: quantizer count mismatch");
    for (QuantParams& q : params.quants) {
        const int bits = static_cast<int>(detail::get_u64(is));
        const bool sgn = detail::get_u64(is) != 0;
        if (bits != q.bits || sgn != q.is_signed)
            throw IoError("train state: quantizer layout mismatch");
        q.interval = detail::get_f64(is);
        q.warmup_target = static_cast<std::int64_t>(detail::get_u64(is));
        q.warmup_sum = detail::get_f64(is);
        q.warmup_seen = static_cast<std::int64_t>(detail::get_u64(is));
        q.frozen = detail::get_u64(is) != 0;
    }
    const std::uint64_t mn = detail::get_u64(is);
    state.m.assign(mn, 0.0);
    for (double& d : state.m) d = detail::get_f64(is);
    const std::uint64_t vn = detail::get_u64(is);
    if (vn != mn) throw IoError("train state: moment vector mismatch");
    state.v.assign(vn, 0.0);
    for (double& d : state.v) d = detail::get_f64(is);
    state.adam_t = static_cast<std::int64_t>(detail::get_u64(is));
    state.iteration = static_cast<std::int64_t>(detail::get_u64(is));
    const std::uint64_t rn = detail::get_u64(is);
    std::string text(rn, '\0');
    is.read(text.data(), static_cast<std::streamsize>(rn));
    if (!is) throw IoError("train state: truncated rng text");
    if (rng_text) *rng_text = std::move(text);
}

}  // namespace fqsr

#endif  // FQSR_TRAINER_HPP_
