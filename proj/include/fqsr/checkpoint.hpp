// Inference checkpoints. A checkpoint is a text header (model identity plus
// a tensor manifest) followed by a raw little-endian float32 payload: every
// parameter tensor in manifest order, then one interval per quantizer in
// registration order. The latent full-precision weights are stored, never
// the integer codes; codes are re-derived at load time, and loaded
// quantizers come back frozen and ready for inference.
#ifndef FQSR_CHECKPOINT_HPP_
#define FQSR_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fqsr/errors.hpp"
#include "fqsr/netgraph.hpp"

namespace fqsr {

namespace detail {

// Walks every parameter tensor in the fixed manifest order. The accessor
// passed to f maps a flat element index to a double reference, so save and
// load share one traversal.
template <typename Params, typename F>
void for_each_param_tensor(const ModelSpec& spec, Params& params, F&& f) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        auto& p = params.layers[i];
        const std::string base = "layer" + std::to_string(i);
        switch (spec.layers[i].kind) {
            case LayerKind::conv: {
                const Shape s = p.w.shape();
                f(base + ".w", std::vector<std::int64_t>{s.n, s.c, s.h, s.w},
                  [&](std::int64_t j) -> auto& { return p.w[j]; });
                if (!p.bias.empty())
                    f(base + ".bias", std::vector<std::int64_t>{static_cast<std::int64_t>(p.bias.size())},
                      [&](std::int64_t j) -> auto& { return p.bias[static_cast<std::size_t>(j)]; });
                break;
            }
            case LayerKind::bn: {
                auto vec = [&](const char* n, auto& v) {
                    f(base + n, std::vector<std::int64_t>{static_cast<std::int64_t>(v.size())},
                      [&v](std::int64_t j) -> auto& { return v[static_cast<std::size_t>(j)]; });
                };
                vec(".gamma", p.gamma);
                vec(".beta", p.beta);
                vec(".mean", p.mean);
                vec(".var", p.var);
                break;
            }
            case LayerKind::prelu:
                f(base + ".prelu", std::vector<std::int64_t>{1},
                  [&](std::int64_t) -> auto& { return p.prelu_slope; });
                break;
            default:
                break;
        }
    }
}

inline void put_f32(std::ostream& os, double d) {
    const float fv = static_cast<float>(d);
    std::uint32_t u;
    std::memcpy(&u, &fv, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline double get_f32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint: truncated payload");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    float fv;
    std::memcpy(&fv, &u, 4);
    return static_cast<double>(fv);
}

inline std::string dims_str(const std::vector<std::int64_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(dims[i]);
    }
    return s;
}

}  // namespace detail

constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, const ModelSpec& spec, const ModelParams& params) {
    ModelParams& mp = const_cast<ModelParams&>(params);  // traversal only reads
    std::ostringstream head;
    head << "FQSR\n";
    head << "version=" << kCheckpointVersion << "\n";
    head << "arch=" << arch_name(spec.arch) << "\n";
    head << "scale=" << spec.scale << "\n";
    head << "blocks=" << spec.blocks << "\n";
    head << "channels=" << spec.channels << "\n";
    head << "wt=" << spec.bitcfg.wt << "\n";
    head << "fm=" << spec.bitcfg.fm << "\n";
    head << "sc=" << spec.bitcfg.sc << "\n";

    std::vector<std::string> manifest;
    detail::for_each_param_tensor(spec, mp, [&](const std::string& name,
                                                const std::vector<std::int64_t>& dims, auto&&) {
        manifest.push_back(name + "=" + detail::dims_str(dims));
    });
    head << "tensors=" << manifest.size() << "\n";
    for (const std::string& line : manifest) head << line << "\n";
    head << "quantizers=" << params.quants.size() << "\n";
    head << "end\n";
    os << head.str();

    detail::for_each_param_tensor(spec, mp, [&](const std::string&,
                                                const std::vector<std::int64_t>& dims, auto&& at) {
        std::int64_t count = 1;
        for (std::int64_t d : dims) count *= d;
        for (std::int64_t j = 0; j < count; ++j) detail::put_f32(os, at(j));
    });
    for (const QuantParams& q : params.quants) detail::put_f32(os, q.interval);
    if (!os) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint_file(const std::string& path, const ModelSpec& spec,
                                 const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
    save_checkpoint(os, spec, params);
}

// Rebuilds the model named in the header, verifies the manifest against it,
// then fills the parameters and intervals. Loaded quantizers are frozen.
inline void load_checkpoint(std::istream& is, ModelSpec& spec, ModelParams& params) {
    std::string line;
    if (!std::getline(is, line) || line != "FQSR") throw IoError("checkpoint: bad magic");

    std::map<std::string, std::string> fields;
    std::vector<std::string> manifest;
    bool saw_end = false;
    while (std::getline(is, line)) {
        if (line == "end") {
            saw_end = true;
            break;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw IoError("checkpoint: malformed header line: " + line);
        const std::string key = line.substr(0, eq);
        if (key.rfind("layer", 0) == 0)
            manifest.push_back(line);
        else
            fields[key] = line.substr(eq + 1);
    }
    if (!saw_end) throw IoError("checkpoint: header has no end marker");

    auto need = [&](const char* key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw IoError(std::string("checkpoint: missing header field ") + key);
        return it->second;
    };
    auto need_int = [&](const char* key) {
        try {
            return std::stoi(need(key));
        } catch (const std::exception&) {
            throw IoError(std::string("checkpoint: bad integer in header field ") + key);
        }
    };
    if (need_int("version") != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + need("version"));

    const BitConfig bits{need_int("wt"), need_int("fm"), need_int("sc")};
    spec = build_model(arch_from_name(need("arch")), need_int("scale"), bits, need_int("blocks"),
                       need_int("channels"));
    params = init_params(spec, 0);

    std::vector<std::string> expected;
    detail::for_each_param_tensor(spec, params, [&](const std::string& name,
                                                    const std::vector<std::int64_t>& dims, auto&&) {
        expected.push_back(name + "=" + detail::dims_str(dims));
    });
    if (manifest.size() != expected.size() ||
        static_cast<std::size_t>(need_int("tensors")) != expected.size())
        throw IoError("checkpoint: manifest lists " + std::to_string(manifest.size()) +
                      " tensors, model has " + std::to_string(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (manifest[i] != expected[i])
            throw IoError("checkpoint: manifest mismatch at entry " + std::to_string(i) + ": " +
                          manifest[i] + " vs " + expected[i]);
    if (static_cast<std::size_t>(need_int("quantizers")) != params.quants.size())
        throw IoError("checkpoint: quantizer count mismatch");

    detail::for_each_param_tensor(spec, params, [&](const std::string&,
                                                    const std::vector<std::int64_t>& dims, auto&& at) {
        std::int64_t count = 1;
        for (std::int64_t d : dims) count *= d;
        for (std::int64_t j = 0; j < count; ++j) at(j) = detail::get_f32(is);
    });
    for (QuantParams& q : params.quants) {
        q.interval = detail::get_f32(is);
        q.frozen = true;
        q.warmup_target = 0;
        q.warmup_sum = 0.0;
        q.warmup_seen = 0;
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw IoError("checkpoint: trailing bytes after payload");
}

inline void load_checkpoint_file(const std::string& path, ModelSpec& spec, ModelParams& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);
    load_checkpoint(is, spec, params);
}

}  // namespace fqsr

#endif  // FQSR_CHECKPOINT_HPP_
