// fqsr: fully-quantized super-resolution tool.
//
//   fqsr cost  --arch srresnet --scale 2 --wt 8 --fm 8 --sc 8 --height 678 --width 1020
//   fqsr sr    --model m.fqsr --input lr.png --output sr.png [--mode integer] [--ensemble]
//   fqsr train --config run.cfg --data dir/ --out m.fqsr [--resume m.fqsr.state]
//   fqsr eval  --model m.fqsr --data dir/ [--color y601] [--csv out.csv]
//   fqsr hist  --model m.fqsr --layer 0 --out hist.csv [--input lr.png]
//
// Every command exits 0 on success and 1 with a single-line diagnostic on
// stderr otherwise.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fqsr/checkpoint.hpp"
#include "fqsr/config.hpp"
#include "fqsr/costmodel.hpp"
#include "fqsr/evalmetrics.hpp"
#include "fqsr/image_io.hpp"
#include "fqsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace fqsr;

namespace {

const char* tag_name(ModuleTag t) {
    switch (t) {
        case ModuleTag::head: return "head";
        case ModuleTag::body: return "body";
        case ModuleTag::tail: return "tail";
    }
    return "?";
}

ForwardMode mode_from(const std::string& s) {
    if (s == "integer") return ForwardMode::integer;
    if (s == "fake_quant") return ForwardMode::fake_quant;
    if (s == "float_ref") return ForwardMode::float_ref;
    throw ConfigError("unknown mode '" + s + "' (integer|fake_quant|float_ref)");
}

MetricColor color_from(const std::string& s) {
    if (s == "rgb") return MetricColor::rgb;
    if (s == "y601") return MetricColor::y601;
    throw ConfigError("unknown color space '" + s + "' (rgb|y601)");
}

// When no --mode is given, quantized models run the integer path and float
// models the reference path.
ForwardMode default_mode(const ModelSpec& spec) {
    return spec.quant_sites.empty() ? ForwardMode::float_ref : ForwardMode::integer;
}

std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .png files in " + dir);
    return files;
}

RealTensor crop(const RealTensor& img, std::int64_t y0, std::int64_t x0, std::int64_t h,
                std::int64_t w) {
    RealTensor out(Shape{img.shape().n, img.shape().c, h, w});
    for (std::int64_t n = 0; n < out.shape().n; ++n)
        for (std::int64_t c = 0; c < out.shape().c; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) out(n, c, y, x) = img(n, c, y0 + y, x0 + x);
    return out;
}

// ---------------------------------------------------------------------------

struct CostArgs {
    std::string arch = "srresnet";
    int scale = 2, wt = 32, fm = 32, sc = 32, blocks = 16, channels = 64;
    int height = 0, width = 0;
    std::string out_csv;
};

int cmd_cost(const CostArgs& a) {
    const ModelSpec spec =
        build_model(arch_from_name(a.arch), a.scale, BitConfig{a.wt, a.fm, a.sc}, a.blocks,
                    a.channels);
    const CostReport flops = count_flops(spec, a.height, a.width);
    const CostReport ops = count_ops(spec, spec.bitcfg, a.height, a.width);
    std::printf("FLOPs (G): %.3f\n", flops.total_flops_g);
    std::printf("OPs (G): %.3f\n", ops.total_ops_g);
    std::printf("Memory (MB): %.3f\n", ops.peak_memory_mb);

    std::ostringstream csv;
    csv << "layer,tag,multiplies,bits,ops_g\n";
    for (const LayerCost& c : ops.per_layer)
        csv << c.layer << ',' << tag_name(c.tag) << ',' << c.multiplies << ',' << c.bits << ','
            << c.ops / 1e9 << "\n";
    if (a.out_csv.empty()) {
        std::fputs(csv.str().c_str(), stdout);
    } else {
        std::ofstream f(a.out_csv);
        if (!f) throw IoError("cannot open " + a.out_csv);
        f << csv.str();
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct SrArgs {
    std::string model, input, output, mode;
    bool ensemble = false;
};

int cmd_sr(const SrArgs& a) {
    ModelSpec spec;
    ModelParams params;
    load_checkpoint_file(a.model, spec, params);
    const ForwardMode mode = a.mode.empty() ? default_mode(spec) : mode_from(a.mode);
    const RealTensor lr = read_png(a.input);
    auto run = [&](const RealTensor& x) { return forward(spec, params, x, mode); };
    const RealTensor sr = a.ensemble ? self_ensemble(run, lr) : run(lr);
    write_png(a.output, sr);
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config, data, out, resume;
    std::vector<std::string> overrides;
    std::int64_t max_steps = 0;  // 0 = run every epoch to completion
};

std::uint64_t env_seed_override(std::uint64_t fallback) {
    const char* env = std::getenv("FQSR_SEED");
    if (!env || !*env) return fallback;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!end || *end != '\0') throw ConfigError("FQSR_SEED must be an unsigned integer");
    return static_cast<std::uint64_t>(v);
}

int cmd_train(const TrainArgs& a) {
    ConfigMap cfg_map = a.config.empty() ? ConfigMap{} : load_config_file(a.config);
    for (const std::string& kv : a.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg_map[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    TrainSetup setup = make_train_setup(cfg_map);
    setup.train.seed = env_seed_override(setup.train.seed);

    const ModelSpec spec =
        build_model(setup.arch, setup.scale, setup.bits, setup.blocks, setup.channels);
    ModelParams params = init_params(spec, setup.train.seed);
    TrainState state;
    std::mt19937_64 rng(setup.train.seed + 0x9e3779b97f4a7c15ull);
    if (!a.resume.empty()) {
        std::ifstream is(a.resume, std::ios::binary);
        if (!is) throw IoError("cannot open resume state " + a.resume);
        std::string rng_text;
        load_train_state(is, params, state, &rng_text);
        if (!rng_text.empty()) {
            std::istringstream rs(rng_text);
            rs >> rng;
            if (!rs) throw IoError("resume state: bad rng text");
        }
    }

    const std::vector<fs::path> files = list_pngs(a.data);
    const int ps = setup.train.patch * setup.scale;
    std::vector<RealTensor> images;
    images.reserve(files.size());
    for (const fs::path& f : files) {
        RealTensor img = read_png(f.string());
        if (img.shape().h < ps || img.shape().w < ps)
            throw ParamError("training image " + f.filename().string() + " is smaller than the " +
                             std::to_string(ps) + "px HR patch");
        images.push_back(std::move(img));
    }

    const std::int64_t steps_per_epoch = std::max<std::int64_t>(
        1, static_cast<std::int64_t>((files.size() + setup.train.batch_size - 1) /
                                     static_cast<std::size_t>(setup.train.batch_size)));
    if (setup.train.total_iters <= 0)
        setup.train.total_iters = static_cast<int>(steps_per_epoch * setup.train.epochs);

    const int b = setup.train.batch_size;
    const int lp = setup.train.patch;
    auto sample_batch = [&](RealTensor& lr_b, RealTensor& hr_b) {
        hr_b = RealTensor(Shape{b, 3, ps, ps});
        lr_b = RealTensor(Shape{b, 3, lp, lp});
        for (int i = 0; i < b; ++i) {
            const RealTensor& img = images[rng() % images.size()];
            const std::int64_t y0 =
                static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(img.shape().h - ps + 1));
            const std::int64_t x0 =
                static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(img.shape().w - ps + 1));
            const RealTensor hr_patch = crop(img, y0, x0, ps, ps);
            const RealTensor lr_patch = bicubic_resize(hr_patch, 1.0 / setup.scale);
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t y = 0; y < ps; ++y)
                    for (std::int64_t x = 0; x < ps; ++x) hr_b(i, c, y, x) = hr_patch(0, c, y, x);
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t y = 0; y < lp; ++y)
                    for (std::int64_t x = 0; x < lp; ++x) lr_b(i, c, y, x) = lr_patch(0, c, y, x);
        }
    };

    auto snapshot = [&]() {
        save_checkpoint_file(a.out, spec, params);
        std::ofstream os(a.out + ".state", std::ios::binary);
        if (!os) throw IoError("cannot open " + a.out + ".state for writing");
        std::ostringstream rs;
        rs << rng;
        save_train_state(os, params, state, rs.str());
    };

    std::int64_t done = 0;
    bool stopped = false;
    const std::int64_t first_epoch = state.iteration / steps_per_epoch;
    for (std::int64_t epoch = first_epoch; epoch < setup.train.epochs && !stopped; ++epoch) {
        const std::int64_t in_epoch = state.iteration - epoch * steps_per_epoch;
        for (std::int64_t s = in_epoch; s < steps_per_epoch; ++s) {
            RealTensor lr_b, hr_b;
            sample_batch(lr_b, hr_b);
            const StepReport rep = train_step(spec, params, state, lr_b, hr_b, setup.train);
            std::printf("step=%lld epoch=%lld warmup=%d lr=%.17g loss=%.17g sr=%.17g sqcl=%.17g\n",
                        static_cast<long long>(rep.iteration), static_cast<long long>(epoch + 1),
                        rep.warmup ? 1 : 0, rep.lr, rep.loss_total, rep.loss_sr, rep.loss_sqcl);
            if (a.max_steps > 0 && ++done >= a.max_steps) {
                stopped = true;
                break;
            }
        }
        snapshot();  // per-epoch checkpoint (also the final one on the last pass)
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string model, data, mode, color = "rgb", csv;
    bool ensemble = false;
};

int cmd_eval(const EvalArgs& a) {
    ModelSpec spec;
    ModelParams params;
    load_checkpoint_file(a.model, spec, params);
    const ForwardMode mode = a.mode.empty() ? default_mode(spec) : mode_from(a.mode);
    const MetricColor color = color_from(a.color);
    auto run = [&](const RealTensor& x) { return forward(spec, params, x, mode); };

    std::ostringstream csv;
    csv << "image,psnr_db,ssim\n";
    double psnr_sum = 0, ssim_sum = 0;
    const std::vector<fs::path> files = list_pngs(a.data);
    for (const fs::path& f : files) {
        RealTensor hr = read_png(f.string());
        const std::int64_t ch = hr.shape().h - hr.shape().h % spec.scale;
        const std::int64_t cw = hr.shape().w - hr.shape().w % spec.scale;
        if (ch < spec.scale || cw < spec.scale)
            throw ParamError("image " + f.filename().string() + " is smaller than the scale");
        if (ch != hr.shape().h || cw != hr.shape().w) hr = crop(hr, 0, 0, ch, cw);
        const RealTensor lr = bicubic_resize(hr, 1.0 / spec.scale);
        const RealTensor sr = a.ensemble ? self_ensemble(run, lr) : run(lr);
        const MetricResult m = evaluate_pair(sr, hr, spec.scale, color);
        std::printf("%-24s PSNR %7.3f dB  SSIM %.4f\n", f.filename().string().c_str(), m.psnr_db,
                    m.ssim);
        csv << f.filename().string() << ',' << m.psnr_db << ',' << m.ssim << "\n";
        psnr_sum += m.psnr_db;
        ssim_sum += m.ssim;
    }
    const double n = static_cast<double>(files.size());
    std::printf("%-24s PSNR %7.3f dB  SSIM %.4f\n", "mean", psnr_sum / n, ssim_sum / n);
    csv << "mean," << psnr_sum / n << ',' << ssim_sum / n << "\n";
    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        if (!f) throw IoError("cannot open " + a.csv);
        f << csv.str();
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct HistArgs {
    std::string model, out, input;
    int layer = -1;
};

int cmd_hist(const HistArgs& a) {
    ModelSpec spec;
    ModelParams params;
    load_checkpoint_file(a.model, spec, params);
    if (a.layer < 0 || static_cast<std::size_t>(a.layer) >= spec.layers.size())
        throw ParamError("layer index " + std::to_string(a.layer) + " out of range (model has " +
                         std::to_string(spec.layers.size()) + " layers)");
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(a.layer)];
    if (l.kind != LayerKind::conv)
        throw ConfigError("layer " + std::to_string(a.layer) + " is not a convolution");

    RealTensor values;
    int qid = -1;
    if (a.input.empty()) {
        qid = l.weight_q;
        if (qid < 0) throw ConfigError("layer " + std::to_string(a.layer) + " has no weight quantizer");
        values = detail::effective_conv(spec, params, static_cast<std::size_t>(a.layer)).w;
    } else {
        qid = l.act_q;
        if (qid < 0)
            throw ConfigError("layer " + std::to_string(a.layer) + " has no activation quantizer");
        const RealTensor img = read_png(a.input);
        if (a.layer == 0) {
            values = img;
        } else {
            const std::vector<RealTensor> outs =
                forward_all(spec, params, img, ForwardMode::fake_quant);
            values = outs[static_cast<std::size_t>(a.layer - 1)];
        }
    }
    const QuantParams& q = params.quants[static_cast<std::size_t>(qid)];
    const RealTensor after = quantize(values, q);

    double mn = values[0], mx = values[0];
    for (std::int64_t i = 0; i < values.size(); ++i) {
        mn = std::min(mn, values[i]);
        mx = std::max(mx, values[i]);
    }
    if (!(mx > mn)) mx = mn + 1e-12;  // constant tensors still get a range
    constexpr int kBins = 256;
    const double width = (mx - mn) / kBins;
    std::vector<std::int64_t> before_n(kBins, 0), after_n(kBins, 0);
    auto bin_of = [&](double v) {
        const int idx = static_cast<int>(std::floor((v - mn) / width));
        return std::min(kBins - 1, std::max(0, idx));
    };
    for (std::int64_t i = 0; i < values.size(); ++i) {
        before_n[static_cast<std::size_t>(bin_of(values[i]))] += 1;
        after_n[static_cast<std::size_t>(bin_of(after[i]))] += 1;
    }

    std::ofstream f(a.out);
    if (!f) throw IoError("cannot open " + a.out);
    f << "bin_left,bin_right,count_before,count_after\n";
    for (int i = 0; i < kBins; ++i)
        f << mn + i * width << ',' << mn + (i + 1) * width << ',' << before_n[static_cast<std::size_t>(i)]
          << ',' << after_n[static_cast<std::size_t>(i)] << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fully-quantized super-resolution engine"};
    app.require_subcommand(1);

    CostArgs cost;
    CLI::App* c = app.add_subcommand("cost", "analytical FLOPs/OPs/memory for a model");
    c->add_option("--arch", cost.arch, "srresnet|edsr|srgan_gen");
    c->add_option("--scale", cost.scale, "upscaling factor (2 or 4)");
    c->add_option("--wt", cost.wt, "weight bits (1..8 or 32)");
    c->add_option("--fm", cost.fm, "feature map bits");
    c->add_option("--sc", cost.sc, "skip storage bits");
    c->add_option("--blocks", cost.blocks, "residual blocks");
    c->add_option("--channels", cost.channels, "feature channels");
    c->add_option("--height", cost.height, "input height")->required();
    c->add_option("--width", cost.width, "input width")->required();
    c->add_option("--out", cost.out_csv, "write the per-layer CSV here instead of stdout");

    SrArgs sr;
    CLI::App* s = app.add_subcommand("sr", "upscale one image");
    s->add_option("--model", sr.model, "checkpoint path")->required();
    s->add_option("--input", sr.input, "input PNG")->required();
    s->add_option("--output", sr.output, "output PNG")->required();
    s->add_option("--mode", sr.mode, "integer|fake_quant|float_ref");
    s->add_flag("--ensemble", sr.ensemble, "average the 8 dihedral transforms");

    TrainArgs train;
    CLI::App* t = app.add_subcommand("train", "train a model on a directory of HR images");
    t->add_option("--config", train.config, "key=value config file");
    t->add_option("--data", train.data, "directory of HR .png files")->required();
    t->add_option("--out", train.out, "checkpoint output path")->required();
    t->add_option("--resume", train.resume, "training state sidecar to resume from");
    t->add_option("--set", train.overrides, "override a config key, e.g. --set lr0=1e-4");
    t->add_option("--max-steps", train.max_steps, "stop after this many steps (0 = all epochs)");

    EvalArgs ev;
    CLI::App* e = app.add_subcommand("eval", "PSNR/SSIM over a directory of HR images");
    e->add_option("--model", ev.model, "checkpoint path")->required();
    e->add_option("--data", ev.data, "directory of HR .png files")->required();
    e->add_option("--mode", ev.mode, "integer|fake_quant|float_ref");
    e->add_option("--color", ev.color, "rgb|y601");
    e->add_option("--csv", ev.csv, "also write the table as CSV");
    e->add_flag("--ensemble", ev.ensemble, "average the 8 dihedral transforms");

    HistArgs hist;
    CLI::App* h = app.add_subcommand("hist", "value histogram before/after quantization");
    h->add_option("--model", hist.model, "checkpoint path")->required();
    h->add_option("--layer", hist.layer, "conv layer index")->required();
    h->add_option("--out", hist.out, "output CSV path")->required();
    h->add_option("--input", hist.input, "PNG input: histogram the layer's activations instead");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c->parsed()) return cmd_cost(cost);
        if (s->parsed()) return cmd_sr(sr);
        if (t->parsed()) return cmd_train(train);
        if (e->parsed()) return cmd_eval(ev);
        if (h->parsed()) return cmd_hist(hist);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "fqsr: %s\n", ex.what());
        return 1;
    }
    return 0;
}
