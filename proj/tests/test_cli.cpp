// Drives the installed binary through a shell: every check here is about
// the process boundary (flags, exit codes, file formats), not the numerics
// already covered by the unit suites.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "fqsr/checkpoint.hpp"
#include "fqsr/evalmetrics.hpp"
#include "fqsr/image_io.hpp"

namespace fs = std::filesystem;
using namespace fqsr;

namespace {

const std::string kTmp = "cli_tmp";

struct CmdResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

CmdResult run_shell(const std::string& cmd) {
    fs::create_directories(kTmp);
    const std::string out = kTmp + "/stdout.txt", err = kTmp + "/stderr.txt";
    const int rc = std::system((cmd + " >" + out + " 2>" + err).c_str());
    CmdResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

CmdResult run_cli(const std::string& args) { return run_shell(std::string(FQSR_CLI_PATH) + " " + args); }

double value_after(const std::string& text, const std::string& label) {
    const std::size_t pos = text.find(label);
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + label.size()));
}

void make_training_dir(const std::string& dir, int n, int side, std::uint64_t seed) {
    fs::create_directories(dir);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int k = 0; k < n; ++k) {
        RealTensor img(Shape{1, 3, side, side});
        for (std::int64_t i = 0; i < img.size(); ++i) img[i] = d(rng);
        write_png(dir + "/im" + std::to_string(k) + ".png", img);
    }
}

// A checkpoint whose network computes nearest-neighbor x2 upsampling: delta
// kernels everywhere, PReLU slopes at 1, channel-duplicating upsample conv.
// It is exactly equivariant under the 8 dihedral transforms.
std::string make_nearest_model(const std::string& path) {
    const ModelSpec spec = build_model(ArchName::srresnet, 2, BitConfig{32, 32, 32}, 0, 3);
    ModelParams params = init_params(spec, 0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerParams& p = params.layers[i];
        if (spec.layers[i].kind == LayerKind::conv) {
            p.w.fill(0.0);
            for (auto& b : p.bias) b = 0.0;
            const Shape s = p.w.shape();
            const std::int64_t cy = s.h / 2, cx = s.w / 2;
            for (std::int64_t o = 0; o < s.n; ++o) {
                const std::int64_t src = (s.c == 3 && s.n == 12) ? o / 4 : o % s.c;
                p.w[((o * s.c + src) * s.h + cy) * s.w + cx] = 1.0;
            }
        } else if (spec.layers[i].kind == LayerKind::prelu) {
            p.prelu_slope = 1.0;
        }
    }
    save_checkpoint_file(path, spec, params);
    return path;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("cost prints totals and a per-layer table") {
    const CmdResult r = run_cli(
        "cost --arch srresnet --scale 2 --wt 8 --fm 8 --sc 8 --height 678 --width 1020");
    REQUIRE(r.code == 0);
    CHECK(value_after(r.out, "\nOPs (G): ") == Catch::Approx(124.627).margin(0.005));
    CHECK(value_after(r.out, "Memory (MB): ") == Catch::Approx(132.779).margin(0.005));
    CHECK(r.out.find("layer,tag,multiplies,bits,ops_g") != std::string::npos);

    SECTION("csv can be diverted to a file") {
        const CmdResult f = run_cli(
            "cost --arch srresnet --scale 4 --wt 4 --fm 4 --sc 8 --height 339 --width 510 --out " +
            kTmp + "/cost.csv");
        REQUIRE(f.code == 0);
        CHECK(value_after(f.out, "\nOPs (G): ") == Catch::Approx(23.968).margin(0.005));
        CHECK(count_lines(f.out) == 3);  // totals only
        const std::string csv = slurp(kTmp + "/cost.csv");
        CHECK(csv.rfind("layer,tag,", 0) == 0);
        CHECK(count_lines(csv) == 38);  // header + 37 convs at x4
    }
    SECTION("bad flags exit non-zero with one diagnostic line") {
        const CmdResult bad = run_cli("cost --arch vgg --height 10 --width 10");
        CHECK(bad.code != 0);
        CHECK(count_lines(bad.err) == 1);
        const CmdResult asym = run_cli("cost --wt 4 --fm 8 --height 10 --width 10");
        CHECK(asym.code != 0);
        CHECK(count_lines(asym.err) == 1);
    }
}

TEST_CASE("train, sr and eval round trip through files") {
    fs::remove_all(kTmp);
    make_training_dir(kTmp + "/data", 2, 24, 11);
    const std::string common =
        " --set scale=2 --set blocks=1 --set channels=8 --set batch_size=1 --set patch=8"
        " --set warmup_l=2 --set lr0=1e-3 --set seed=3";
    const CmdResult t =
        run_cli("train --data " + kTmp + "/data --out " + kTmp + "/m.fqsr --set epochs=2" + common);
    REQUIRE(t.code == 0);
    CHECK(t.out.find("step=1 epoch=1 warmup=1") != std::string::npos);
    REQUIRE(fs::exists(kTmp + "/m.fqsr"));
    REQUIRE(fs::exists(kTmp + "/m.fqsr.state"));

    SECTION("sr doubles the raster and the two quantized paths agree to a gray level") {
        const CmdResult s1 = run_cli("sr --model " + kTmp + "/m.fqsr --input " + kTmp +
                                     "/data/im0.png --output " + kTmp + "/sr_int.png --mode integer");
        REQUIRE(s1.code == 0);
        const RealTensor sr_int = read_png(kTmp + "/sr_int.png");
        CHECK(sr_int.shape() == Shape{1, 3, 48, 48});

        const CmdResult s2 = run_cli("sr --model " + kTmp + "/m.fqsr --input " + kTmp +
                                     "/data/im0.png --output " + kTmp + "/sr_fake.png --mode fake_quant");
        REQUIRE(s2.code == 0);
        const RealTensor sr_fake = read_png(kTmp + "/sr_fake.png");
        for (std::int64_t i = 0; i < sr_int.size(); ++i)
            CHECK(std::abs(sr_int[i] - sr_fake[i]) * 255.0 <= 1.0 + 1e-9);
    }
    SECTION("eval writes the per-image table") {
        const CmdResult e = run_cli("eval --model " + kTmp + "/m.fqsr --data " + kTmp +
                                    "/data --csv " + kTmp + "/eval.csv");
        REQUIRE(e.code == 0);
        const std::string csv = slurp(kTmp + "/eval.csv");
        CHECK(csv.rfind("image,psnr_db,ssim\n", 0) == 0);
        CHECK(count_lines(csv) == 4);  // header, two images, mean
        CHECK(csv.find("mean,") != std::string::npos);
        CHECK(e.out.find("mean") != std::string::npos);
    }
    SECTION("missing inputs exit non-zero") {
        CHECK(run_cli("sr --model nope.fqsr --input x.png --output y.png").code != 0);
        CHECK(run_cli("eval --model " + kTmp + "/m.fqsr --data " + kTmp + "/empty").code != 0);
        CHECK(run_cli("train --data " + kTmp + "/data --out " + kTmp + "/m2.fqsr --set epochs=1" +
                      common + " --set nonsense=1")
                  .code != 0);
    }
}

TEST_CASE("training resumes bitwise from the sidecar") {
    fs::remove_all(kTmp);
    make_training_dir(kTmp + "/data", 3, 24, 23);
    const std::string common =
        " --set scale=2 --set blocks=1 --set channels=4 --set batch_size=2 --set patch=8"
        " --set warmup_l=3 --set lr0=1e-3 --set seed=5 --set epochs=4";
    const CmdResult straight =
        run_cli("train --data " + kTmp + "/data --out " + kTmp + "/a.fqsr" + common);
    REQUIRE(straight.code == 0);
    const CmdResult part1 = run_cli("train --data " + kTmp + "/data --out " + kTmp + "/b.fqsr" +
                                    common + " --max-steps 4");
    REQUIRE(part1.code == 0);
    const CmdResult part2 = run_cli("train --data " + kTmp + "/data --out " + kTmp + "/b.fqsr" +
                                    common + " --resume " + kTmp + "/b.fqsr.state");
    REQUIRE(part2.code == 0);
    CHECK(straight.out == part1.out + part2.out);
    CHECK(slurp(kTmp + "/a.fqsr") == slurp(kTmp + "/b.fqsr"));
}

TEST_CASE("FQSR_SEED overrides the configured seed") {
    fs::remove_all(kTmp);
    make_training_dir(kTmp + "/data", 2, 24, 31);
    const std::string common = " --set scale=2 --set blocks=0 --set channels=4 --set batch_size=1"
                               " --set patch=8 --set warmup_l=1 --set lr0=1e-3 --set epochs=1";
    const std::string base = std::string(FQSR_CLI_PATH) + " train --data " + kTmp +
                             "/data --out " + kTmp + "/s.fqsr" + common;
    const CmdResult flag_seed = run_shell(base + " --set seed=7");
    const CmdResult env_seed = run_shell("FQSR_SEED=7 " + base + " --set seed=1");
    const CmdResult other_env = run_shell("FQSR_SEED=9 " + base + " --set seed=7");
    REQUIRE(flag_seed.code == 0);
    REQUIRE(env_seed.code == 0);
    REQUIRE(other_env.code == 0);
    CHECK(flag_seed.out == env_seed.out);
    CHECK(flag_seed.out != other_env.out);
    CHECK(run_shell("FQSR_SEED=abc " + base).code != 0);
}

TEST_CASE("self-ensemble on an equivariant model changes nothing") {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
    make_nearest_model(kTmp + "/nn.fqsr");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    RealTensor img(Shape{1, 3, 9, 9});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = d(rng);
    write_png(kTmp + "/in.png", img);

    REQUIRE(run_cli("sr --model " + kTmp + "/nn.fqsr --input " + kTmp + "/in.png --output " +
                    kTmp + "/plain.png")
                .code == 0);
    REQUIRE(run_cli("sr --model " + kTmp + "/nn.fqsr --input " + kTmp + "/in.png --output " +
                    kTmp + "/ens.png --ensemble")
                .code == 0);
    CHECK(slurp(kTmp + "/plain.png") == slurp(kTmp + "/ens.png"));

    SECTION("the nearest model doubles every pixel block") {
        const RealTensor up = read_png(kTmp + "/ens.png");
        REQUIRE(up.shape() == Shape{1, 3, 18, 18});
        const RealTensor orig = read_png(kTmp + "/in.png");
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < 18; ++y)
                for (std::int64_t x = 0; x < 18; ++x)
                    CHECK(up(0, c, y, x) == orig(0, c, y / 2, x / 2));
    }
}

TEST_CASE("eval caps PSNR on a perfect reconstruction") {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp + "/flat");
    make_nearest_model(kTmp + "/nn.fqsr");
    RealTensor flat(Shape{1, 3, 32, 32});  // big enough for the SSIM window after shaving
    flat.fill(0.5);
    write_png(kTmp + "/flat/a.png", flat);
    const CmdResult e = run_cli("eval --model " + kTmp + "/nn.fqsr --data " + kTmp + "/flat");
    REQUIRE(e.code == 0);
    CHECK(e.out.find("PSNR 100.000") != std::string::npos);
}

TEST_CASE("hist exports matched before/after counts on lattice weights") {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
    // blocks=0 keeps every conv bn-free, so the histogrammed tensor is the
    // raw weight; place all of them on the 3-bit lattice k/7.
    const ModelSpec spec = build_model(ArchName::srresnet, 2, BitConfig{3, 8, 8}, 0, 4);
    ModelParams params = init_params(spec, 0);
    int k = -7;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::conv) {
            for (std::int64_t j = 0; j < params.layers[i].w.size(); ++j) {
                params.layers[i].w[j] = static_cast<double>(k) / 7.0;
                k = (k == 7) ? -7 : k + 1;
            }
        }
    for (auto& q : params.quants) {
        q.interval = 1.0;
        q.frozen = true;
    }
    save_checkpoint_file(kTmp + "/lat.fqsr", spec, params);

    const CmdResult h = run_cli("hist --model " + kTmp + "/lat.fqsr --layer 0 --out " + kTmp +
                                "/h.csv");
    REQUIRE(h.code == 0);
    std::ifstream f(kTmp + "/h.csv");
    std::string line;
    REQUIRE(std::getline(f, line));
    CHECK(line == "bin_left,bin_right,count_before,count_after");
    int rows = 0;
    std::int64_t total_before = 0;
    while (std::getline(f, line)) {
        ++rows;
        std::size_t p1 = line.find(','), p2 = line.find(',', p1 + 1), p3 = line.find(',', p2 + 1);
        REQUIRE(p3 != std::string::npos);
        const std::string before = line.substr(p2 + 1, p3 - p2 - 1);
        const std::string after = line.substr(p3 + 1);
        CHECK(before == after);
        total_before += std::stoll(before);
    }
    CHECK(rows == 256);
    CHECK(total_before == spec.layers[0].in_ch * spec.layers[0].out_ch * 81);

    SECTION("activation histograms need an input and a quantizer") {
        make_training_dir(kTmp + "/img", 1, 16, 3);
        const CmdResult a = run_cli("hist --model " + kTmp + "/lat.fqsr --layer 0 --input " +
                                    kTmp + "/img/im0.png --out " + kTmp + "/ha.csv");
        REQUIRE(a.code == 0);
        CHECK(count_lines(slurp(kTmp + "/ha.csv")) == 257);
        CHECK(run_cli("hist --model " + kTmp + "/lat.fqsr --layer 1 --out x.csv").code != 0);
        CHECK(run_cli("hist --model " + kTmp + "/lat.fqsr --layer 99 --out x.csv").code != 0);
    }
}
