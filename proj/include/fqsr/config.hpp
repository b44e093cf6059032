// Flat key=value configuration. Files are plain text: one pair per line,
// '#' starts a comment, blank lines are skipped. Command-line flags are
// merged on top of file values before anything is parsed into typed fields.
#ifndef FQSR_CONFIG_HPP_
#define FQSR_CONFIG_HPP_

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>

#include "fqsr/errors.hpp"
#include "fqsr/netgraph.hpp"
#include "fqsr/trainer.hpp"

namespace fqsr {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ConfigMap parse_config_text(std::istream& is) {
    ConfigMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                              t + "'");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out[key] = val;
    }
    return out;
}

inline ConfigMap load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    return parse_config_text(is);
}

inline std::int64_t config_int(const ConfigMap& m, const std::string& key, std::int64_t dflt) {
    const auto it = m.find(key);
    if (it == m.end()) return dflt;
    std::int64_t v = 0;
    const char* b = it->second.data();
    const char* e = b + it->second.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw ConfigError("config: " + key + " must be an integer, got '" + it->second + "'");
    return v;
}

inline double config_double(const ConfigMap& m, const std::string& key, double dflt) {
    const auto it = m.find(key);
    if (it == m.end()) return dflt;
    double v = 0;
    const char* b = it->second.data();
    const char* e = b + it->second.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw ConfigError("config: " + key + " must be a number, got '" + it->second + "'");
    return v;
}

inline std::string config_str(const ConfigMap& m, const std::string& key, const std::string& dflt) {
    const auto it = m.find(key);
    return it == m.end() ? dflt : it->second;
}

// Model identity plus optimizer settings, as read by the train command.
struct TrainSetup {
    ArchName arch = ArchName::srresnet;
    int scale = 2;
    int blocks = 16;
    int channels = 64;
    BitConfig bits{8, 8, 8};
    TrainConfig train;
};

inline TrainSetup make_train_setup(const ConfigMap& m) {
    static const std::set<std::string> known = {
        "arch",  "scale",     "blocks",      "channels", "wt",        "fm",
        "sc",    "batch_size", "lr0",        "lr_min",   "epochs",    "total_iters",
        "warmup_l", "alpha",  "sqcl_norm",   "sr_loss",  "seed",      "patch"};
    for (const auto& [key, value] : m)
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    TrainSetup s;
    s.arch = arch_from_name(config_str(m, "arch", "srresnet"));
    s.scale = static_cast<int>(config_int(m, "scale", 2));
    s.blocks = static_cast<int>(config_int(m, "blocks", 16));
    s.channels = static_cast<int>(config_int(m, "channels", 64));
    s.bits.wt = static_cast<int>(config_int(m, "wt", 8));
    s.bits.fm = static_cast<int>(config_int(m, "fm", 8));
    s.bits.sc = static_cast<int>(config_int(m, "sc", 8));

    s.train.batch_size = static_cast<int>(config_int(m, "batch_size", s.train.batch_size));
    s.train.lr0 = config_double(m, "lr0", s.train.lr0);
    s.train.lr_min = config_double(m, "lr_min", s.train.lr_min);
    s.train.epochs = static_cast<int>(config_int(m, "epochs", s.train.epochs));
    s.train.total_iters = static_cast<int>(config_int(m, "total_iters", s.train.total_iters));
    s.train.warmup_l = static_cast<int>(config_int(m, "warmup_l", s.train.warmup_l));
    s.train.alpha = config_double(m, "alpha", s.train.alpha);
    s.train.seed = static_cast<std::uint64_t>(config_int(m, "seed", static_cast<std::int64_t>(s.train.seed)));
    s.train.patch = static_cast<int>(config_int(m, "patch", s.train.patch));

    const std::string norm = config_str(m, "sqcl_norm", "l1");
    if (norm == "l1")
        s.train.sqcl_norm = SqclNorm::l1;
    else if (norm == "l2")
        s.train.sqcl_norm = SqclNorm::l2;
    else
        throw ConfigError("config: sqcl_norm must be l1 or l2, got '" + norm + "'");
    const std::string srl = config_str(m, "sr_loss", "l1");
    if (srl == "l1")
        s.train.sr_loss = SrLoss::l1;
    else if (srl == "l2")
        s.train.sr_loss = SrLoss::l2;
    else
        throw ConfigError("config: sr_loss must be l1 or l2, got '" + srl + "'");

    validate(s.train);
    return s;
}

}  // namespace fqsr

#endif  // FQSR_CONFIG_HPP_
