#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>
#include <sstream>

#include "fqsr/checkpoint.hpp"
#include "fqsr/config.hpp"
#include "fqsr/image_io.hpp"

using namespace fqsr;

namespace {

ModelParams trained_like_params(const ModelSpec& spec, std::uint64_t seed) {
    ModelParams p = init_params(spec, seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> g(0.6, 1.4), b(-0.3, 0.3), v(0.5, 1.5), iv(0.1, 2.0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::bn) {
            for (auto& x : p.layers[i].gamma) x = g(rng);
            for (auto& x : p.layers[i].beta) x = b(rng);
            for (auto& x : p.layers[i].mean) x = b(rng);
            for (auto& x : p.layers[i].var) x = v(rng);
        } else if (spec.layers[i].kind == LayerKind::conv) {
            for (auto& x : p.layers[i].bias) x = b(rng);
        }
    }
    for (auto& q : p.quants) {
        q.interval = iv(rng);
        q.frozen = true;
    }
    return p;
}

std::string save_to_string(const ModelSpec& spec, const ModelParams& params) {
    std::stringstream ss;
    save_checkpoint(ss, spec, params);
    return ss.str();
}

}  // namespace

TEST_CASE("checkpoint round trip is byte identical") {
    const ModelSpec spec = build_model(ArchName::srresnet, 2, BitConfig{8, 6, 8}, 2, 8);
    const ModelParams params = trained_like_params(spec, 42);
    const std::string first = save_to_string(spec, params);

    std::stringstream in(first);
    ModelSpec spec2;
    ModelParams params2;
    load_checkpoint(in, spec2, params2);
    const std::string second = save_to_string(spec2, params2);
    REQUIRE(first.size() == second.size());
    CHECK(first == second);

    SECTION("loaded model matches the original to f32 precision") {
        REQUIRE(spec2.layers.size() == spec.layers.size());
        CHECK(spec2.scale == spec.scale);
        CHECK(spec2.bitcfg.fm == 6);
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
            for (std::int64_t j = 0; j < params.layers[i].w.size(); ++j)
                CHECK(params2.layers[i].w[j] ==
                      static_cast<double>(static_cast<float>(params.layers[i].w[j])));
        REQUIRE(params2.quants.size() == params.quants.size());
        for (std::size_t i = 0; i < params.quants.size(); ++i) {
            CHECK(params2.quants[i].frozen);
            CHECK(params2.quants[i].interval ==
                  static_cast<double>(static_cast<float>(params.quants[i].interval)));
        }
    }
    SECTION("f32 rounding barely moves the quantized forward pass") {
        std::mt19937_64 rng(5);
        RealTensor x(Shape{1, 3, 8, 8});
        std::uniform_real_distribution<double> d(0.0, 1.0);
        for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
        const RealTensor a = forward(spec, params, x, ForwardMode::fake_quant);
        const RealTensor b = forward(spec2, params2, x, ForwardMode::fake_quant);
        for (std::int64_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == Catch::Approx(b[i]).margin(1e-4));
        // derived integer codes are ready immediately after load
        const RealTensor c = forward(spec2, params2, x, ForwardMode::integer);
        CHECK(c.shape() == b.shape());
    }
}

TEST_CASE("checkpoint payload length matches the manifest") {
    const ModelSpec spec = build_model(ArchName::edsr, 4, BitConfig{4, 4, 8}, 1, 4);
    ModelParams params = trained_like_params(spec, 7);
    const std::string bytes = save_to_string(spec, params);
    const std::size_t header_end = bytes.find("end\n");
    REQUIRE(header_end != std::string::npos);
    const std::size_t payload = bytes.size() - (header_end + 4);

    std::size_t elems = 0;
    detail::for_each_param_tensor(spec, params,
                                  [&](const std::string&, const std::vector<std::int64_t>& dims,
                                      auto&&) {
                                      std::size_t n = 1;
                                      for (std::int64_t d : dims) n *= static_cast<std::size_t>(d);
                                      elems += n;
                                  });
    CHECK(payload == (elems + params.quants.size()) * 4);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const ModelSpec spec = build_model(ArchName::srresnet, 2, BitConfig{8, 8, 8}, 1, 4);
    const ModelParams params = trained_like_params(spec, 3);
    const std::string good = save_to_string(spec, params);
    ModelSpec s;
    ModelParams p;

    SECTION("bad magic") {
        std::stringstream in("FQSX\n" + good.substr(5));
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("missing end marker") {
        std::stringstream in(good.substr(0, good.find("end\n")));
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("truncated payload") {
        std::stringstream in(good.substr(0, good.size() - 8));
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("trailing bytes") {
        std::stringstream in(good + "x");
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("tampered manifest dimension") {
        std::string bad = good;
        const std::size_t pos = bad.find("layer0.w=4,3,9,9");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 16, "layer0.w=4,3,9,7");
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("unsupported version") {
        std::string bad = good;
        const std::size_t pos = bad.find("version=1");
        bad.replace(pos, 9, "version=9");
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_checkpoint(in, s, p), IoError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint_file("/nonexistent/ckpt.fqsr", s, p), IoError);
    }
}

TEST_CASE("png round trips are value identical") {
    const std::string path = "test_serialization_tmp.png";
    RealTensor img(Shape{1, 3, 13, 21});
    for (std::int64_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<double>((i * 7 + 3) % 256) / 255.0;  // on the 8-bit lattice

    write_png(path, img);
    const RealTensor back = read_png(path);
    REQUIRE(back.shape() == img.shape());
    for (std::int64_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);

    SECTION("second generation is identical too") {
        write_png(path, back);
        const RealTensor again = read_png(path);
        for (std::int64_t i = 0; i < img.size(); ++i) CHECK(again[i] == back[i]);
    }
    SECTION("out-of-range values clamp to the 8-bit range") {
        RealTensor wild(Shape{1, 3, 2, 2});
        for (std::int64_t i = 0; i < wild.size(); ++i) wild[i] = (i % 2) ? 1.7 : -0.4;
        write_png(path, wild);
        const RealTensor clamped = read_png(path);
        for (std::int64_t i = 0; i < wild.size(); ++i)
            CHECK(clamped[i] == ((i % 2) ? 1.0 : 0.0));
    }
    std::remove(path.c_str());

    SECTION("shape and path errors") {
        CHECK_THROWS_AS(write_png(path, RealTensor(Shape{1, 1, 4, 4})), ShapeError);
        CHECK_THROWS_AS(read_png("/nonexistent/dir/img.png"), IoError);
    }
}

TEST_CASE("config parsing") {
    SECTION("comments, blanks and whitespace") {
        std::stringstream ss(
            "# a training run\n"
            "\n"
            "arch = srresnet\n"
            "scale=2   # inline comment\n"
            "lr0 = 1e-3\r\n"
            "blocks=2\n");
        const ConfigMap m = parse_config_text(ss);
        CHECK(m.size() == 4);
        CHECK(config_str(m, "arch", "") == "srresnet");
        CHECK(config_int(m, "scale", 0) == 2);
        CHECK(config_double(m, "lr0", 0) == 1e-3);
        CHECK(config_int(m, "missing", 77) == 77);
    }
    SECTION("malformed lines") {
        std::stringstream a("justaword\n");
        CHECK_THROWS_AS(parse_config_text(a), ConfigError);
        std::stringstream b("=value\n");
        CHECK_THROWS_AS(parse_config_text(b), ConfigError);
    }
    SECTION("strict numbers") {
        ConfigMap m{{"k", "12x"}, {"d", "1.5.2"}};
        CHECK_THROWS_AS(config_int(m, "k", 0), ConfigError);
        CHECK_THROWS_AS(config_double(m, "d", 0), ConfigError);
    }
    SECTION("missing file") { CHECK_THROWS_AS(load_config_file("/nonexistent.cfg"), IoError); }
}

TEST_CASE("train setup from config") {
    ConfigMap m{{"arch", "edsr"},   {"scale", "4"},     {"blocks", "2"}, {"channels", "8"},
                {"wt", "4"},        {"fm", "4"},        {"sc", "8"},     {"batch_size", "4"},
                {"lr0", "5e-4"},    {"epochs", "2"},    {"alpha", "0.3"}, {"sqcl_norm", "l2"},
                {"sr_loss", "l1"},  {"seed", "9"},      {"patch", "24"}, {"warmup_l", "10"},
                {"total_iters", "100"}};
    const TrainSetup s = make_train_setup(m);
    CHECK(s.arch == ArchName::edsr);
    CHECK(s.scale == 4);
    CHECK(s.blocks == 2);
    CHECK(s.channels == 8);
    CHECK(s.bits.wt == 4);
    CHECK(s.bits.sc == 8);
    CHECK(s.train.batch_size == 4);
    CHECK(s.train.lr0 == 5e-4);
    CHECK(s.train.sqcl_norm == SqclNorm::l2);
    CHECK(s.train.sr_loss == SrLoss::l1);
    CHECK(s.train.seed == 9);
    CHECK(s.train.patch == 24);
    CHECK(s.train.warmup_l == 10);
    CHECK(s.train.total_iters == 100);

    SECTION("defaults cover everything") {
        const TrainSetup d = make_train_setup(ConfigMap{});
        CHECK(d.arch == ArchName::srresnet);
        CHECK(d.blocks == 16);
        CHECK(d.channels == 64);
        CHECK(d.train.batch_size == 16);
        CHECK(d.train.warmup_l == 20);
    }
    SECTION("unknown keys are typos") {
        m["learning_rate"] = "0.1";
        CHECK_THROWS_AS(make_train_setup(m), ConfigError);
    }
    SECTION("bad enum values") {
        ConfigMap bad{{"sqcl_norm", "linf"}};
        CHECK_THROWS_AS(make_train_setup(bad), ConfigError);
        ConfigMap bad2{{"arch", "vgg"}};
        CHECK_THROWS_AS(make_train_setup(bad2), ConfigError);
    }
}
