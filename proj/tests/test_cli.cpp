#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "aada/cli.hpp"
#include "aada/data.hpp"
#include "aada/io.hpp"

using namespace aada;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

int run_cli(std::vector<std::string> args) { return cli::run(args); }

bool same_file_bytes(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return !ca.empty() && ca == cb;
}

// fast settings shared by the end-to-end command tests
std::vector<std::string> tiny_overrides() {
    return {"--set", "synth.tiles=2",       "--set", "synth.tile_size=128",
            "--set", "source.epochs=1",     "--set", "source.iterations=2",
            "--set", "source.batch=1",      "--set", "da.epochs=2",
            "--set", "da.iterations=1",     "--set", "da.batch=1",
            "--set", "da.selection_start=1"};
}

}  // namespace

TEST_CASE("paper profile resolves the documented hyper-parameters") {
    // verified via --dump-config through the public entry point
    TempDir tmp("aada_cli_dump");
    // capture stdout
    std::stringstream captured;
    auto* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = run_cli({"--profile", "paper", "--dump-config", "synth-gen", "--out",
                            tmp / "x"});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);
    const std::string out = captured.str();
    for (const char* expect :
         {"source.lr = 0.01", "source.momentum = 0.9", "source.weight_decay = 1e-5",
          "source.epochs = 50", "source.iterations = 2500", "source.batch = 4",
          "source.kappa = 4", "da.adam_lr = 1e-4", "da.adam_beta1 = 0.9",
          "da.adam_beta2 = 0.99", "da.omega_t = 2", "da.omega_g = 2", "da.rho = 4",
          "da.epochs = 50", "da.selection_start = 25", "da.jitter_max_shift = 4",
          "augment.sigma = 0.1", "augment.patch = 256", "infer.window = 256",
          "infer.overlap = 128"}) {
        INFO(expect);
        CHECK(out.find(expect) != std::string::npos);
    }
}

TEST_CASE("synth-gen is deterministic and records the shift in its manifest") {
    TempDir tmp("aada_cli_synth");
    auto base = std::vector<std::string>{"synth-gen",
                                         "--seed",
                                         "9",
                                         "--set",
                                         "synth.tiles=2",
                                         "--set",
                                         "synth.tile_size=128"};
    auto a1 = base;
    a1.push_back("--out");
    a1.push_back(tmp / "a");
    auto a2 = base;
    a2.push_back("--out");
    a2.push_back(tmp / "b");
    REQUIRE(run_cli(a1) == 0);
    REQUIRE(run_cli(a2) == 0);
    CHECK(same_file_bytes(tmp / "a/source/tile000.img.npy", tmp / "b/source/tile000.img.npy"));
    CHECK(same_file_bytes(tmp / "a/target/tile001.lbl.npy", tmp / "b/target/tile001.lbl.npy"));

    SUBCASE("radiometric shift: label JSD near zero, channel distributions apart") {
        auto args = std::vector<std::string>{
            "synth-gen", "--seed", "3",       "--shift", "radiometric",        "--set",
            "synth.tiles=3", "--set", "synth.tile_size=128", "--out", tmp / "rad"};
        REQUIRE(run_cli(args) == 0);
        json manifest;
        std::ifstream(tmp / "rad/manifest.json") >> manifest;
        CHECK(manifest["label_jsd"].get<double>() < 0.02);

        auto src = io::load_dataset(tmp / "rad/source");
        auto tgt = io::load_dataset(tmp / "rad/target");
        // per-channel mean gap as a crude distribution distance
        double gap = 0.0;
        for (int c = 0; c < 3; ++c) {
            double ms = 0.0, mt = 0.0;
            int64_t n = 0;
            for (const auto& s : src.samples) {
                const double* p = s.channels.data() + static_cast<int64_t>(c) * 128 * 128;
                for (int i = 0; i < 128 * 128; ++i) ms += p[i];
                n += 128 * 128;
            }
            for (const auto& s : tgt.samples) {
                const double* p = s.channels.data() + static_cast<int64_t>(c) * 128 * 128;
                for (int i = 0; i < 128 * 128; ++i) mt += p[i];
            }
            gap += std::abs(ms / n - mt / n);
        }
        CHECK(gap > 0.05);
    }
}

TEST_CASE("source-train rejects a missing dataset with exit code 3") {
    TempDir tmp("aada_cli_missing");
    const int rc = run_cli({"source-train", "--source", tmp / "nope", "--out", tmp / "out"});
    CHECK(rc == 3);
}

TEST_CASE("unknown config keys and bad flags give exit code 2") {
    TempDir tmp("aada_cli_badcfg");
    CHECK(run_cli({"synth-gen", "--out", tmp / "x", "--set", "nonsense.key=1"}) == 2);
    CHECK(run_cli({"--profile", "weird", "synth-gen", "--out", tmp / "x"}) == 2);
    CHECK(run_cli({"frobnicate"}) == 2);
}

TEST_CASE("config file applies between profile defaults and CLI overrides") {
    TempDir tmp("aada_cli_cfgfile");
    {
        std::ofstream cfg(tmp / "run.cfg");
        cfg << "# comment line\n";
        cfg << "da.rho = 1.5\n";
        cfg << "source.batch = 3\n";
    }
    std::stringstream captured;
    auto* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = run_cli({"--config", tmp / "run.cfg", "--set", "da.rho=2.5",
                            "--dump-config", "synth-gen", "--out", tmp / "x"});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);
    CHECK(captured.str().find("da.rho = 2.5") != std::string::npos);      // CLI wins
    CHECK(captured.str().find("source.batch = 3") != std::string::npos);  // file beats profile
}

TEST_CASE("end-to-end commands on a miniature scenario") {
    TempDir tmp("aada_cli_e2e");
    auto with_tiny = [&](std::vector<std::string> args) {
        auto extra = tiny_overrides();
        args.insert(args.end(), extra.begin(), extra.end());
        return args;
    };

    REQUIRE(run_cli(with_tiny({"synth-gen", "--seed", "2", "--out", tmp / "data"})) == 0);
    REQUIRE(run_cli(with_tiny({"source-train", "--seed", "2", "--source", tmp / "data/source",
                               "--target", tmp / "data/target", "--out", tmp / "run"})) == 0);
    REQUIRE(fs::exists(tmp / "run/source.ckpt"));
    REQUIRE(fs::exists(tmp / "run/source_log.csv"));

    SUBCASE("adapt writes a selection report with one record per epoch") {
        REQUIRE(run_cli(with_tiny({"adapt", "--seed", "2", "--source", tmp / "data/source",
                                   "--target", tmp / "data/target", "--init",
                                   tmp / "run/source.ckpt", "--out", tmp / "run/da"})) == 0);
        json report;
        std::ifstream(tmp / "run/da/selection_report.json") >> report;
        CHECK(report["per_epoch"].size() == 2);
        int with_entropy = 0;
        for (const auto& row : report["per_epoch"])
            if (row.contains("mean_entropy")) ++with_entropy;
        CHECK(with_entropy == 2);  // selection_start = 1
        CHECK(fs::exists(tmp / "run/da/selected.ckpt"));
        CHECK(fs::exists(tmp / "run/da/eval_target.json"));
    }

    SUBCASE("infer writes valid rasters and repeats deterministically") {
        REQUIRE(run_cli({"infer", "--checkpoint", tmp / "run/source.ckpt", "--input",
                         tmp / "data/target", "--out", tmp / "pred_tta", "--probs"}) == 0);
        REQUIRE(run_cli({"infer", "--checkpoint", tmp / "run/source.ckpt", "--input",
                         tmp / "data/target", "--out", tmp / "pred_again"}) == 0);
        auto l1 = io::read_npy_labels(tmp / "pred_tta/tile000.lbl.npy");
        auto l2 = io::read_npy_labels(tmp / "pred_again/tile000.lbl.npy");
        CHECK(l1.v == l2.v);
        CHECK(l1.h == 128);
        auto probs = io::read_npy(tmp / "pred_tta/tile000.prob.npy");
        CHECK(probs.shape() == std::vector<int>({128, 128, 5}));
        // TTA-vs-identity equality for an equivariant model is covered at the
        // inference unit level; real checkpoints are not equivariant
        REQUIRE(run_cli({"infer", "--checkpoint", tmp / "run/source.ckpt", "--input",
                         tmp / "data/target", "--out", tmp / "pred_plain", "--no-tta"}) == 0);
        CHECK(fs::exists(tmp / "pred_plain/tile000.lbl.npy"));
    }

    SUBCASE("evaluate scores perfect predictions at OA 1.0") {
        auto ref = io::load_dataset(tmp / "data/target");
        fs::create_directories(tmp / "perfect");
        for (size_t t = 0; t < ref.samples.size(); ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "tile%03zu.lbl.npy", t);
            io::write_npy_labels((tmp / "perfect/") + name, ref.samples[t].labels);
        }
        REQUIRE(run_cli({"evaluate", "--pred", tmp / "perfect", "--ref", tmp / "data/target",
                         "--out", tmp / "scores"}) == 0);
        json m;
        std::ifstream(tmp / "scores/metrics.json") >> m;
        CHECK(m["oa"].get<double>() == 1.0);
        CHECK(fs::exists(tmp / "scores/confusion.csv"));
    }

    SUBCASE("resolution round trip emits labels at the native target grid") {
        auto args = with_tiny({"synth-gen", "--seed", "4", "--out", tmp / "res"});
        args.push_back("--set");
        args.push_back("synth.target_gsd=0.1");  // finer target
        REQUIRE(run_cli(args) == 0);
        REQUIRE(run_cli(with_tiny({"source-train", "--seed", "4", "--source",
                                   tmp / "res/source", "--target", tmp / "res/target",
                                   "--out", tmp / "res_run"})) == 0);
        REQUIRE(run_cli({"infer", "--checkpoint", tmp / "res_run/source.ckpt", "--input",
                         tmp / "res/target", "--out", tmp / "res_pred"}) == 0);
        auto native = io::load_dataset(tmp / "res/target");
        auto pred = io::read_npy_labels(tmp / "res_pred/tile000.lbl.npy");
        CHECK(pred.h == native.samples[0].height());
        CHECK(pred.w == native.samples[0].width());
    }
}

TEST_CASE("divergent adaptation exits with code 4") {
    TempDir tmp("aada_cli_div");
    auto with_tiny = [&](std::vector<std::string> args) {
        auto extra = tiny_overrides();
        args.insert(args.end(), extra.begin(), extra.end());
        return args;
    };
    REQUIRE(run_cli(with_tiny({"synth-gen", "--seed", "6", "--out", tmp / "data"})) == 0);
    REQUIRE(run_cli(with_tiny({"source-train", "--seed", "6", "--source", tmp / "data/source",
                               "--out", tmp / "run"})) == 0);

    // NaN-poisoned target rasters reach the discriminator losses unfiltered
    DomainDataset bad;
    bad.class_count = 5;
    bad.height_channel = 3;
    RasterSample s;
    s.channels = Tensor({4, 128, 128}, std::numeric_limits<double>::quiet_NaN());
    s.gsd = 0.2;
    bad.samples.push_back(std::move(s));
    io::save_dataset(tmp / "bad_target", bad);

    CHECK(run_cli(with_tiny({"adapt", "--seed", "6", "--source", tmp / "data/source",
                             "--target", tmp / "bad_target", "--init", tmp / "run/source.ckpt",
                             "--out", tmp / "run/da", "--set", "augment.sigma=0"})) == 4);
}
